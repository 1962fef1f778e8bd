#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "framepick/encoder.hpp"
#include "framepick/reward_model.hpp"
#include "framepick/rng.hpp"

namespace framepick {

using ordered_json = nlohmann::ordered_json;

/// Ground-truth specification for one desk-scale (video, query) pair.
/// Everything downstream (features, oracle losses) is a pure function of
/// these fields, so a task serializes as parameters only.
struct SyntheticTask {
  std::string video_id;
  std::string query_id;
  std::size_t M = 16;  // candidate frames
  std::size_t N = 4;   // tokens per frame
  std::size_t d = 32;  // feature dim
  std::size_t Q = 5;   // query tokens
  std::vector<std::size_t> relevant_frames;            // R, ascending
  std::vector<std::vector<std::size_t>> redundancy_groups;  // partition of R
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  // Feature-construction constants.
  double alignment = 2.0;      // query-aligned coefficient of relevant frames
  double alignment_skew = 0.05;  // between-group alignment spread
  double content_scale = 0.4;  // shared per-group content magnitude
  double jitter_scale = 0.6;   // per-member deviation from its group prototype
  double token_noise = 0.25;   // within-frame token spread (mean-free)

  // Oracle constants.
  double loss_base = 5.0;
  double loss_gain = 2.0;

  std::size_t num_groups() const { return redundancy_groups.size(); }

  /// Alignment coefficient for group g: group 0 strongest, last weakest.
  /// A positive skew is what makes tasks duplicate-heavy for the
  /// per-frame matching baseline.
  double group_alignment(std::size_t g) const {
    const std::size_t G = num_groups();
    if (G <= 1) return alignment;
    const double t = 1.0 - 2.0 * static_cast<double>(g) /
                               static_cast<double>(G - 1);
    return alignment + alignment_skew * t;
  }
};

namespace detail {

inline std::vector<double> random_unit(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.next_gaussian();
  const double n = norm(v);
  for (auto& x : v) x /= n;
  return v;
}

/// Removes the components of v along each (unit) basis vector, then
/// rescales to the requested norm.
inline std::vector<double> orthogonal_with_norm(
    Rng& rng, std::size_t d, const std::vector<std::vector<double>>& basis,
    double target_norm) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.next_gaussian();
  for (const auto& b : basis) {
    const double p = dot(v, b);
    for (std::size_t k = 0; k < d; ++k) v[k] -= p * b[k];
  }
  const double n = norm(v);
  for (auto& x : v) x *= target_norm / n;
  return v;
}

}  // namespace detail

/// Deterministic feature synthesis. Relevant frames carry a query-aligned
/// component plus a group-shared content direction plus per-member jitter;
/// jitter and content are kept orthogonal to the query direction and member
/// norms are held constant within a group, so the raw pooled query-cosine of
/// every group-g member is exactly alignment_g / ||member||.
inline std::pair<FrameFeatureSet, QueryFeatureSet> generate_features(
    const SyntheticTask& task) {
  const std::size_t M = task.M, N = task.N, d = task.d, Q = task.Q;
  Rng rng(hash_combine(task.seed, 0x46454154ULL));

  const auto query_dir = detail::random_unit(rng, d);

  // Which group, if any, each frame belongs to.
  std::vector<std::ptrdiff_t> group_of(M, -1);
  for (std::size_t g = 0; g < task.num_groups(); ++g)
    for (auto i : task.redundancy_groups[g])
      group_of[i] = static_cast<std::ptrdiff_t>(g);

  std::vector<std::vector<double>> prototypes;
  for (std::size_t g = 0; g < task.num_groups(); ++g) {
    auto content = detail::orthogonal_with_norm(rng, d, {query_dir},
                                                task.content_scale);
    const double a = task.group_alignment(g);
    std::vector<double> proto(d);
    for (std::size_t k = 0; k < d; ++k)
      proto[k] = a * query_dir[k] + content[k];
    prototypes.push_back(std::move(proto));
  }

  std::vector<double> tokens(M * N * d);
  for (std::size_t i = 0; i < M; ++i) {
    std::vector<double> center(d);
    if (group_of[i] >= 0) {
      const auto& proto = prototypes[static_cast<std::size_t>(group_of[i])];
      std::vector<double> content_dir(proto.size());
      const double a = task.group_alignment(static_cast<std::size_t>(group_of[i]));
      for (std::size_t k = 0; k < d; ++k)
        content_dir[k] = (proto[k] - a * query_dir[k]) / task.content_scale;
      auto jitter = detail::orthogonal_with_norm(rng, d, {query_dir, content_dir},
                                                 task.jitter_scale);
      for (std::size_t k = 0; k < d; ++k) center[k] = proto[k] + jitter[k];
    } else {
      // Irrelevant: content orthogonal to the query, zero raw cosine.
      const double irr_norm =
          std::sqrt(task.content_scale * task.content_scale +
                    task.jitter_scale * task.jitter_scale);
      center = detail::orthogonal_with_norm(rng, d, {query_dir}, irr_norm);
    }

    // Mean-free token spread so the pooled feature equals the center.
    std::vector<double> spread(N * d);
    for (auto& x : spread) x = rng.next_gaussian() * task.token_noise;
    for (std::size_t k = 0; k < d; ++k) {
      double mean = 0.0;
      for (std::size_t t = 0; t < N; ++t) mean += spread[t * d + k];
      mean /= static_cast<double>(N);
      for (std::size_t t = 0; t < N; ++t)
        tokens[(i * N + t) * d + k] = center[k] + spread[t * d + k] - mean;
    }
  }

  // Query rows are positive multiples of the query direction, so their mean
  // points exactly along it.
  Matrix qe(Q, d);
  for (std::size_t q = 0; q < Q; ++q) {
    const double s = 1.0 + 0.2 * rng.next_double();
    for (std::size_t k = 0; k < d; ++k) qe.at(q, k) = s * query_dir[k];
  }

  auto frames = make_frame_feature_set(task.video_id, M, N, d, std::move(tokens));
  QueryFeatureSet query;
  query.query_id = task.query_id;
  query.embeddings = std::move(qe);
  return {std::move(frames), std::move(query)};
}

struct ScoredCombination {
  Combination combination;
  double loss = 0.0;
  std::size_t rank = 0;  // 1 = lowest loss
};

struct RankedCombinationRecord {
  std::string video_id;
  std::string query_id;
  std::size_t M = 0;
  std::size_t T = 0;
  double loss_mean = 0.0;
  double loss_variance = 0.0;  // population variance
  std::vector<ScoredCombination> scored;
};

/// Loss-scoring contract standing in for a reference model: must be pure
/// and deterministic given (task.seed, combination).
using LossOracle =
    std::function<double(const SyntheticTask&, const Combination&)>;

inline std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  if (k > n - k) k = n - k;
  std::uint64_t num = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    // exact at each step: num always holds C(n-k+i-1, i-1) * ... pattern
    unsigned __int128 next = static_cast<unsigned __int128>(num) * (n - k + i);
    next /= i;
    if (next > std::numeric_limits<std::uint64_t>::max())
      throw std::overflow_error("binomial: result exceeds 64 bits");
    num = static_cast<std::uint64_t>(next);
  }
  return num;
}

inline constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

/// All T-subsets of [0, M) in lexicographic order. Refuses outright when
/// C(M,T) exceeds the cap; exhaustive traversal is only meant for small
/// training-scale (M, T).
inline std::vector<Combination> enumerate_combinations(
    std::size_t M, std::size_t T,
    std::uint64_t cap = kDefaultEnumerationCap) {
  if (T < 1 || T > M)
    throw std::invalid_argument("enumerate_combinations: need 1 <= T <= M");
  const std::uint64_t count = binomial(M, T);
  if (count > cap) {
    std::ostringstream msg;
    msg << "enumerate_combinations: C(" << M << "," << T << ") = " << count
        << " exceeds cap " << cap;
    throw std::runtime_error(msg.str());
  }
  std::vector<Combination> out;
  out.reserve(count);
  std::vector<std::size_t> idx(T);
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    out.push_back(Combination{idx});
    // advance to next lexicographic T-subset
    std::ptrdiff_t i = static_cast<std::ptrdiff_t>(T) - 1;
    while (i >= 0 && idx[i] == M - T + static_cast<std::size_t>(i)) --i;
    if (i < 0) break;
    ++idx[i];
    for (std::size_t j = static_cast<std::size_t>(i) + 1; j < T; ++j)
      idx[j] = idx[j - 1] + 1;
  }
  return out;
}

/// Coverage-based stand-in loss: base - gain * (distinct redundancy groups
/// hit / total groups) + seeded Gaussian noise. Members of one group add no
/// extra coverage, so diverse combinations score strictly better.
inline double synthetic_loss(const SyntheticTask& task,
                             const Combination& comb) {
  comb.validate(task.M);
  std::vector<bool> hit(task.num_groups(), false);
  for (std::size_t g = 0; g < task.num_groups(); ++g)
    for (auto i : task.redundancy_groups[g])
      for (auto j : comb.frame_indices)
        if (i == j) hit[g] = true;
  double covered = 0.0;
  for (bool h : hit) covered += h ? 1.0 : 0.0;
  const double coverage =
      task.num_groups() == 0 ? 0.0
                             : covered / static_cast<double>(task.num_groups());
  double loss = task.loss_base - task.loss_gain * coverage;
  if (task.noise_sigma > 0.0) {
    std::uint64_t h = hash_combine(task.seed, 0x4e4f495345ULL);
    for (auto i : comb.frame_indices) h = hash_combine(h, i);
    Rng rng(h);
    loss += task.noise_sigma * rng.next_gaussian();
  }
  return loss;
}

inline LossOracle make_synthetic_oracle() {
  return [](const SyntheticTask& t, const Combination& c) {
    return synthetic_loss(t, c);
  };
}

/// Scores every combination and assigns ascending-loss ranks, ties broken
/// by lexicographic combination order.
inline RankedCombinationRecord rank_record(const SyntheticTask& task,
                                           std::size_t T,
                                           const LossOracle& oracle,
                                           std::uint64_t cap = kDefaultEnumerationCap) {
  auto combos = enumerate_combinations(task.M, T, cap);
  RankedCombinationRecord rec;
  rec.video_id = task.video_id;
  rec.query_id = task.query_id;
  rec.M = task.M;
  rec.T = T;
  rec.scored.resize(combos.size());

  std::vector<std::size_t> order(combos.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> losses(combos.size());
  for (std::size_t i = 0; i < combos.size(); ++i)
    losses[i] = oracle(task, combos[i]);
  // stable sort over the lexicographic enumeration implements the tie rule
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return losses[a] < losses[b];
                   });

  double mean = 0.0;
  for (double l : losses) mean += l;
  mean /= static_cast<double>(losses.size());
  double var = 0.0;
  for (double l : losses) var += (l - mean) * (l - mean);
  var /= static_cast<double>(losses.size());
  rec.loss_mean = mean;
  rec.loss_variance = var;

  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const std::size_t i = order[pos];
    rec.scored[i] = ScoredCombination{combos[i], losses[i], pos + 1};
  }
  return rec;
}

/// Keeps records whose mean combination loss is <= threshold; strictly
/// larger means are dropped as too-hard tasks.
inline std::vector<RankedCombinationRecord> filter_by_avg_loss(
    std::vector<RankedCombinationRecord> records, double threshold) {
  std::erase_if(records, [&](const RankedCombinationRecord& r) {
    return r.loss_mean > threshold;
  });
  return records;
}

/// Keeps the ceil(top_fraction * n) records with the highest loss variance.
/// Ties at the cut keep the earlier record (input order).
inline std::vector<RankedCombinationRecord> filter_by_variance(
    std::vector<RankedCombinationRecord> records, double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction <= 1.0))
    throw std::invalid_argument("filter_by_variance: fraction must be in (0,1]");
  const std::size_t n = records.size();
  if (n == 0) return records;
  const std::size_t keep = static_cast<std::size_t>(
      std::ceil(top_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].loss_variance > records[b].loss_variance;
  });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  std::vector<RankedCombinationRecord> out;
  out.reserve(keep);
  for (auto i : order) out.push_back(std::move(records[i]));
  return out;
}

// --- JSON serialization ---

inline ordered_json to_json(const RankedCombinationRecord& rec) {
  ordered_json combos = ordered_json::array();
  for (const auto& sc : rec.scored) {
    combos.push_back(ordered_json{{"frames", sc.combination.frame_indices},
                                  {"loss", sc.loss},
                                  {"rank", sc.rank}});
  }
  return ordered_json{{"video_id", rec.video_id}, {"query_id", rec.query_id},
                      {"M", rec.M},               {"T", rec.T},
                      {"loss_mean", rec.loss_mean},
                      {"loss_variance", rec.loss_variance},
                      {"combinations", combos}};
}

inline RankedCombinationRecord record_from_json(const ordered_json& j) {
  RankedCombinationRecord rec;
  rec.video_id = j.at("video_id").get<std::string>();
  rec.query_id = j.at("query_id").get<std::string>();
  rec.M = j.at("M").get<std::size_t>();
  rec.T = j.at("T").get<std::size_t>();
  rec.loss_mean = j.at("loss_mean").get<double>();
  rec.loss_variance = j.at("loss_variance").get<double>();
  for (const auto& c : j.at("combinations")) {
    ScoredCombination sc;
    sc.combination.frame_indices =
        c.at("frames").get<std::vector<std::size_t>>();
    sc.loss = c.at("loss").get<double>();
    sc.rank = c.at("rank").get<std::size_t>();
    rec.scored.push_back(std::move(sc));
  }
  return rec;
}

inline ordered_json to_json(const SyntheticTask& t) {
  return ordered_json{{"video_id", t.video_id},
                      {"query_id", t.query_id},
                      {"M", t.M},
                      {"N", t.N},
                      {"d", t.d},
                      {"Q", t.Q},
                      {"relevant_frames", t.relevant_frames},
                      {"redundancy_groups", t.redundancy_groups},
                      {"noise_sigma", t.noise_sigma},
                      {"seed", t.seed},
                      {"alignment", t.alignment},
                      {"alignment_skew", t.alignment_skew},
                      {"content_scale", t.content_scale},
                      {"jitter_scale", t.jitter_scale},
                      {"token_noise", t.token_noise},
                      {"loss_base", t.loss_base},
                      {"loss_gain", t.loss_gain}};
}

inline SyntheticTask task_from_json(const ordered_json& j) {
  SyntheticTask t;
  t.video_id = j.at("video_id").get<std::string>();
  t.query_id = j.at("query_id").get<std::string>();
  t.M = j.at("M").get<std::size_t>();
  t.N = j.at("N").get<std::size_t>();
  t.d = j.at("d").get<std::size_t>();
  t.Q = j.at("Q").get<std::size_t>();
  t.relevant_frames = j.at("relevant_frames").get<std::vector<std::size_t>>();
  t.redundancy_groups =
      j.at("redundancy_groups").get<std::vector<std::vector<std::size_t>>>();
  t.noise_sigma = j.at("noise_sigma").get<double>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.alignment = j.at("alignment").get<double>();
  t.alignment_skew = j.at("alignment_skew").get<double>();
  t.content_scale = j.at("content_scale").get<double>();
  t.jitter_scale = j.at("jitter_scale").get<double>();
  t.token_noise = j.at("token_noise").get<double>();
  t.loss_base = j.at("loss_base").get<double>();
  t.loss_gain = j.at("loss_gain").get<double>();
  return t;
}

/// Task-population parameters shared by dataset generation and evaluation.
struct TaskGenConfig {
  std::size_t M = 16, N = 4, d = 32, Q = 5;
  std::size_t num_relevant = 4;
  std::vector<std::size_t> group_sizes = {2, 2};
  double noise_sigma = 0.0;
  double alignment = 2.0;
  double alignment_skew = 0.05;
  double content_scale = 0.4;
  double jitter_scale = 0.6;
  double token_noise = 0.25;
  double loss_base = 5.0;
  double loss_gain = 2.0;
};

/// Builds task #index of a seeded population: relevant frames drawn without
/// replacement and partitioned into the configured group sizes.
inline SyntheticTask make_synthetic_task(const TaskGenConfig& cfg,
                                         std::uint64_t base_seed,
                                         std::size_t index) {
  std::size_t group_total = 0;
  for (auto s : cfg.group_sizes) group_total += s;
  if (group_total != cfg.num_relevant || cfg.num_relevant < 1 ||
      cfg.num_relevant > cfg.M)
    throw std::invalid_argument("make_synthetic_task: bad group sizes");

  SyntheticTask t;
  t.seed = hash_combine(base_seed, index);
  t.video_id = "video_" + std::to_string(index);
  t.query_id = "query_" + std::to_string(index);
  t.M = cfg.M;
  t.N = cfg.N;
  t.d = cfg.d;
  t.Q = cfg.Q;
  t.noise_sigma = cfg.noise_sigma;
  t.alignment = cfg.alignment;
  t.alignment_skew = cfg.alignment_skew;
  t.content_scale = cfg.content_scale;
  t.jitter_scale = cfg.jitter_scale;
  t.token_noise = cfg.token_noise;
  t.loss_base = cfg.loss_base;
  t.loss_gain = cfg.loss_gain;

  Rng rng(hash_combine(t.seed, 0x5441534bULL));
  std::vector<std::size_t> all(cfg.M);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t i = 0; i < cfg.num_relevant; ++i) {
    const std::size_t j = i + rng.next_below(all.size() - i);
    std::swap(all[i], all[j]);
  }
  // Groups are formed from the unsorted draw so membership is independent
  // of temporal position.
  std::size_t off = 0;
  for (auto s : cfg.group_sizes) {
    std::vector<std::size_t> group(all.begin() + static_cast<std::ptrdiff_t>(off),
                                   all.begin() + static_cast<std::ptrdiff_t>(off + s));
    std::sort(group.begin(), group.end());
    t.redundancy_groups.push_back(std::move(group));
    off += s;
  }
  t.relevant_frames.assign(all.begin(),
                           all.begin() + static_cast<std::ptrdiff_t>(cfg.num_relevant));
  std::sort(t.relevant_frames.begin(), t.relevant_frames.end());
  return t;
}

}  // namespace framepick
