#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "framepick/datagen.hpp"
#include "framepick/encoder.hpp"
#include "framepick/reward_model.hpp"
#include "framepick/rng.hpp"

namespace framepick {

struct TrainConfig {
  std::size_t K = 4;          // combinations sampled per record
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;  // records per optimizer step (accumulated)
  std::size_t epochs = 200;
  std::uint64_t seed = 42;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool top1_only = false;  // rank-1 combination vs each sampled other
  std::size_t h = 16;      // reward head output dim
};

/// One training example: the ranked record plus its frozen mixer output.
/// The mixer never receives gradients, so its forward pass is cached once.
struct TrainingRecord {
  RankedCombinationRecord record;
  MixedFeatures mixed;
};

/// K distinct combinations drawn uniformly without replacement, in ranked-
/// list order (selection sampling keeps the draw deterministic per rng).
inline std::vector<ScoredCombination> sample_k(
    const RankedCombinationRecord& record, std::size_t K, Rng& rng) {
  const std::size_t n = record.scored.size();
  if (K > n) throw std::invalid_argument("sample_k: K exceeds C(M,T)");
  std::vector<ScoredCombination> out;
  out.reserve(K);
  std::size_t remaining = K;
  for (std::size_t i = 0; i < n && remaining > 0; ++i) {
    const std::uint64_t left = n - i;
    if (rng.next_below(left) < remaining) {
      out.push_back(record.scored[i]);
      --remaining;
    }
  }
  return out;
}

/// All unordered pairs; the better (numerically lower) rank is the winner.
inline std::vector<std::pair<Combination, Combination>> make_pairs(
    const std::vector<ScoredCombination>& sampled) {
  std::vector<std::pair<Combination, Combination>> pairs;
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    for (std::size_t j = i + 1; j < sampled.size(); ++j) {
      const bool i_wins = sampled[i].rank < sampled[j].rank;
      const auto& w = i_wins ? sampled[i] : sampled[j];
      const auto& l = i_wins ? sampled[j] : sampled[i];
      pairs.emplace_back(w.combination, l.combination);
    }
  }
  return pairs;
}

/// -(1/P) sum log sigmoid(r_w - r_l), stable in both tails.
inline double ranking_loss(const std::vector<double>& rewards_w,
                           const std::vector<double>& rewards_l) {
  if (rewards_w.size() != rewards_l.size() || rewards_w.empty())
    throw std::invalid_argument("ranking_loss: need equal non-empty lists");
  double acc = 0.0;
  for (std::size_t i = 0; i < rewards_w.size(); ++i)
    acc += detail::neg_log_sigmoid(rewards_w[i] - rewards_l[i]);
  return acc / static_cast<double>(rewards_w.size());
}

struct TrainState {
  RewardHeadParams params;
  HeadGrads adam_m;
  HeadGrads adam_v;
  std::uint64_t step = 0;   // optimizer steps taken
  std::uint64_t epoch = 0;  // completed epochs
  std::uint64_t rng_state = 0;
  double running_loss = 0.0;
};

struct TrainLogRow {
  std::uint64_t step;
  std::uint64_t epoch;
  double loss;
  double grad_norm;
};

namespace detail {

inline void adam_tensor(std::vector<double>& p, std::vector<double>& m,
                        std::vector<double>& v, const std::vector<double>& g,
                        const TrainConfig& cfg, double bc1, double bc2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
    v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
    const double mh = m[i] / bc1;
    const double vh = v[i] / bc2;
    p[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.adam_eps);
  }
}

inline void adam_step(TrainState& state, const HeadGrads& grads,
                      const TrainConfig& cfg) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
  auto upd = [&](FfnHead& p, FfnHead& m, FfnHead& v, const FfnHead& g) {
    adam_tensor(p.w1.data, m.w1.data, v.w1.data, g.w1.data, cfg, bc1, bc2);
    adam_tensor(p.b1, m.b1, v.b1, g.b1, cfg, bc1, bc2);
    adam_tensor(p.w2.data, m.w2.data, v.w2.data, g.w2.data, cfg, bc1, bc2);
    adam_tensor(p.b2, m.b2, v.b2, g.b2, cfg, bc1, bc2);
  };
  upd(state.params.query_ffn, state.adam_m.query_ffn, state.adam_v.query_ffn,
      grads.query_ffn);
  upd(state.params.frame_ffn, state.adam_m.frame_ffn, state.adam_v.frame_ffn,
      grads.frame_ffn);
}

inline double grad_norm(const HeadGrads& g) {
  double acc = 0.0;
  auto add = [&](const std::vector<double>& v) {
    for (double x : v) acc += x * x;
  };
  add(g.query_ffn.w1.data);
  add(g.query_ffn.b1);
  add(g.query_ffn.w2.data);
  add(g.query_ffn.b2);
  add(g.frame_ffn.w1.data);
  add(g.frame_ffn.b1);
  add(g.frame_ffn.w2.data);
  add(g.frame_ffn.b2);
  return std::sqrt(acc);
}

/// top1_only sampling: the record's rank-1 combination plus K-1 uniform
/// others; every pair is (rank-1, other).
inline std::vector<std::pair<Combination, Combination>> top1_pairs(
    const RankedCombinationRecord& record, std::size_t K, Rng& rng) {
  const ScoredCombination* best = nullptr;
  for (const auto& sc : record.scored)
    if (sc.rank == 1) best = &sc;
  if (best == nullptr) throw std::logic_error("top1_pairs: no rank-1 entry");
  std::vector<const ScoredCombination*> rest;
  rest.reserve(record.scored.size() - 1);
  for (const auto& sc : record.scored)
    if (&sc != best) rest.push_back(&sc);
  const std::size_t draws = std::min(K > 0 ? K - 1 : 0, rest.size());
  std::vector<std::pair<Combination, Combination>> pairs;
  std::size_t remaining = draws;
  for (std::size_t i = 0; i < rest.size() && remaining > 0; ++i) {
    if (rng.next_below(rest.size() - i) < remaining) {
      pairs.emplace_back(best->combination, rest[i]->combination);
      --remaining;
    }
  }
  return pairs;
}

}  // namespace detail

inline TrainState make_train_state(std::size_t d, const TrainConfig& cfg) {
  TrainState st;
  st.params = make_seeded_heads(d, cfg.h, cfg.seed);
  st.adam_m = HeadGrads::zeros(d, cfg.h);
  st.adam_v = HeadGrads::zeros(d, cfg.h);
  st.rng_state = hash_combine(cfg.seed, 0x53414d50ULL);
  return st;
}

/// Minibatch training of the reward heads under the pairwise ranking loss.
/// Records are visited in fixed order; per-record gradients (already averaged
/// over that record's pairs) are averaged over the logical batch before one
/// Adam step, replicating batch-with-accumulation semantics. Resuming a
/// checkpointed state continues the exact same trajectory.
inline void train(std::vector<TrainingRecord>& records, TrainState& state,
                  const TrainConfig& cfg,
                  std::vector<TrainLogRow>* log = nullptr) {
  if (records.empty()) throw std::invalid_argument("train: empty dataset");
  const std::size_t d = state.params.d;
  const std::size_t h = state.params.h;
  Rng rng(0);
  rng.set_state(state.rng_state);

  for (std::uint64_t epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    HeadGrads accum = HeadGrads::zeros(d, h);
    std::size_t count = 0;
    double batch_loss = 0.0;

    auto flush = [&]() {
      if (count == 0) return;
      HeadGrads avg = HeadGrads::zeros(d, h);
      avg.add_scaled(accum, 1.0 / static_cast<double>(count));
      detail::adam_step(state, avg, cfg);
      state.running_loss = batch_loss / static_cast<double>(count);
      if (log)
        log->push_back(TrainLogRow{state.step, epoch, state.running_loss,
                                   detail::grad_norm(avg)});
      accum = HeadGrads::zeros(d, h);
      count = 0;
      batch_loss = 0.0;
    };

    for (const auto& tr : records) {
      auto pairs = cfg.top1_only
                       ? detail::top1_pairs(tr.record, cfg.K, rng)
                       : make_pairs(sample_k(tr.record, cfg.K, rng));
      if (pairs.empty()) continue;
      auto plg = grad_params(tr.mixed, state.params, pairs);
      if (!std::isfinite(plg.loss)) {
        throw std::runtime_error("train: non-finite loss on record video_id=" +
                                 tr.record.video_id +
                                 " query_id=" + tr.record.query_id);
      }
      accum.add_scaled(plg.grads, 1.0);
      batch_loss += plg.loss;
      if (++count == cfg.batch_size) flush();
    }
    flush();
    state.epoch = epoch + 1;
    state.rng_state = rng.state();
  }
}

// --- FVCK checkpoint: heads + optimizer state ---
// magic "FVCK", u32 version, u64 d h step epoch rng_state, f64 running_loss,
// then params, adam_m, adam_v each as query/frame head blocks (w1 b1 w2 b2).

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const TrainState& st, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  io::write_magic(os, "FVCK");
  io::write_le<std::uint32_t>(os, kCheckpointVersion);
  io::write_le<std::uint64_t>(os, st.params.d);
  io::write_le<std::uint64_t>(os, st.params.h);
  io::write_le<std::uint64_t>(os, st.step);
  io::write_le<std::uint64_t>(os, st.epoch);
  io::write_le<std::uint64_t>(os, st.rng_state);
  io::write_le<double>(os, st.running_loss);
  detail::write_head(os, st.params.query_ffn);
  detail::write_head(os, st.params.frame_ffn);
  detail::write_head(os, st.adam_m.query_ffn);
  detail::write_head(os, st.adam_m.frame_ffn);
  detail::write_head(os, st.adam_v.query_ffn);
  detail::write_head(os, st.adam_v.frame_ffn);
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline TrainState load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  io::expect_magic(is, "FVCK", path);
  if (io::read_le<std::uint32_t>(is) != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version in " + path);
  TrainState st;
  const auto d = io::read_le<std::uint64_t>(is);
  const auto h = io::read_le<std::uint64_t>(is);
  st.params.d = d;
  st.params.h = h;
  st.step = io::read_le<std::uint64_t>(is);
  st.epoch = io::read_le<std::uint64_t>(is);
  st.rng_state = io::read_le<std::uint64_t>(is);
  st.running_loss = io::read_le<double>(is);
  st.params.query_ffn = detail::read_head(is, d, h);
  st.params.frame_ffn = detail::read_head(is, d, h);
  st.adam_m.query_ffn = detail::read_head(is, d, h);
  st.adam_m.frame_ffn = detail::read_head(is, d, h);
  st.adam_v.query_ffn = detail::read_head(is, d, h);
  st.adam_v.frame_ffn = detail::read_head(is, d, h);
  return st;
}

// --- gradient checking ---

struct GradCheckConfig {
  std::size_t M = 8;
  std::size_t Q = 3;
  std::size_t d = 16;
  std::size_t h = 8;
  std::size_t num_pairs = 4;
  double step = 1e-6;
  double tolerance = 1e-4;
  /// Test hook: added to one analytic gradient element to prove the checker
  /// detects wrong gradients.
  double corruption = 0.0;
};

struct GradCheckTensorReport {
  std::string tensor;
  double max_rel_error = 0.0;
  std::size_t worst_element = 0;
};

struct GradCheckReport {
  bool passed = true;
  double max_rel_error = 0.0;
  std::vector<GradCheckTensorReport> tensors;  // 8 per seed
};

/// Central finite differences against grad_params on seeded random inputs.
inline GradCheckReport gradient_check(const GradCheckConfig& cfg,
                                      const std::vector<std::uint64_t>& seeds) {
  GradCheckReport report;
  for (auto seed : seeds) {
    Rng rng(hash_combine(seed, 0x47434845ULL));
    MixedFeatures mixed;
    mixed.frames_bl = Matrix(cfg.M, cfg.d);
    mixed.query_bl = Matrix(cfg.Q, cfg.d);
    for (auto& x : mixed.frames_bl.data) x = rng.next_gaussian();
    for (auto& x : mixed.query_bl.data) x = rng.next_gaussian();

    RewardHeadParams params = make_seeded_heads(cfg.d, cfg.h, seed);

    // Random winner/loser T=2 combinations (distinct within a pair).
    std::vector<std::pair<Combination, Combination>> pairs;
    auto rand_comb = [&]() {
      std::size_t a = rng.next_below(cfg.M);
      std::size_t b = rng.next_below(cfg.M);
      while (b == a) b = rng.next_below(cfg.M);
      if (b < a) std::swap(a, b);
      return Combination{{a, b}};
    };
    while (pairs.size() < cfg.num_pairs) {
      auto w = rand_comb();
      auto l = rand_comb();
      if (!(w == l)) pairs.emplace_back(w, l);
    }

    auto analytic = grad_params(mixed, params, pairs);
    if (cfg.corruption != 0.0)
      analytic.grads.frame_ffn.w1.data[0] += cfg.corruption;

    auto loss_at = [&](const RewardHeadParams& p) {
      return grad_params(mixed, p, pairs).loss;
    };

    struct TensorRef {
      std::string name;
      std::vector<double>* param;
      const std::vector<double>* grad;
    };
    std::vector<TensorRef> tensors = {
        {"query_ffn.w1", &params.query_ffn.w1.data, &analytic.grads.query_ffn.w1.data},
        {"query_ffn.b1", &params.query_ffn.b1, &analytic.grads.query_ffn.b1},
        {"query_ffn.w2", &params.query_ffn.w2.data, &analytic.grads.query_ffn.w2.data},
        {"query_ffn.b2", &params.query_ffn.b2, &analytic.grads.query_ffn.b2},
        {"frame_ffn.w1", &params.frame_ffn.w1.data, &analytic.grads.frame_ffn.w1.data},
        {"frame_ffn.b1", &params.frame_ffn.b1, &analytic.grads.frame_ffn.b1},
        {"frame_ffn.w2", &params.frame_ffn.w2.data, &analytic.grads.frame_ffn.w2.data},
        {"frame_ffn.b2", &params.frame_ffn.b2, &analytic.grads.frame_ffn.b2},
    };

    for (auto& t : tensors) {
      GradCheckTensorReport tr;
      tr.tensor = t.name + "@seed" + std::to_string(seed);
      for (std::size_t i = 0; i < t.param->size(); ++i) {
        const double orig = (*t.param)[i];
        (*t.param)[i] = orig + cfg.step;
        const double lp = loss_at(params);
        (*t.param)[i] = orig - cfg.step;
        const double lm = loss_at(params);
        (*t.param)[i] = orig;
        const double numeric = (lp - lm) / (2.0 * cfg.step);
        const double a = (*t.grad)[i];
        const double denom = std::max(std::abs(a) + std::abs(numeric), 1e-6);
        const double rel = std::abs(a - numeric) / denom;
        if (rel > tr.max_rel_error) {
          tr.max_rel_error = rel;
          tr.worst_element = i;
        }
      }
      report.max_rel_error = std::max(report.max_rel_error, tr.max_rel_error);
      if (tr.max_rel_error >= cfg.tolerance) report.passed = false;
      report.tensors.push_back(std::move(tr));
    }
  }
  return report;
}

}  // namespace framepick
