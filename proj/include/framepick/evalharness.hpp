#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "framepick/datagen.hpp"
#include "framepick/selector.hpp"

namespace framepick {

enum class Method { kUniform, kMatching, kLearned };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::kUniform: return "uniform";
    case Method::kMatching: return "matching";
    case Method::kLearned: return "learned";
  }
  return "?";
}

/// Evenly spaced grid: indices floor(i*M/T). Independent of frame content.
inline Combination uniform_baseline(std::size_t M, std::size_t T) {
  if (T < 1 || T > M)
    throw std::invalid_argument("uniform_baseline: need 1 <= T <= M");
  std::vector<std::size_t> idx(T);
  for (std::size_t i = 0; i < T; ++i) idx[i] = i * M / T;
  return Combination{std::move(idx)};
}

/// Per-frame query matching on raw pooled features: cosine between the mean
/// query embedding and each pooled frame, top-T, ties to the lower index.
/// No mixer, no trained heads.
inline Combination matching_baseline(const FrameFeatureSet& frames,
                                     const QueryFeatureSet& query,
                                     std::size_t T) {
  if (T < 1 || T > frames.M)
    throw std::invalid_argument("matching_baseline: need 1 <= T <= M");
  const std::size_t d = frames.d;
  std::vector<double> pooled_query(d, 0.0);
  for (std::size_t q = 0; q < query.Q(); ++q)
    for (std::size_t k = 0; k < d; ++k)
      pooled_query[k] += query.embeddings.at(q, k);
  for (auto& v : pooled_query) v /= static_cast<double>(query.Q());

  std::vector<double> sims(frames.M);
  for (std::size_t i = 0; i < frames.M; ++i)
    sims[i] = cosine(pooled_query, frames.pooled.row(i));

  std::vector<std::size_t> order(frames.M);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  order.resize(T);
  std::sort(order.begin(), order.end());
  return Combination{std::move(order)};
}

inline double recall_at_t(const Combination& selected,
                          const std::set<std::size_t>& relevant) {
  if (relevant.empty())
    throw std::invalid_argument("recall_at_t: empty relevant set");
  std::size_t hits = 0;
  for (auto i : selected.frame_indices) hits += relevant.count(i);
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

/// Noise-free oracle loss of the selection minus the brute-force minimum
/// over all combinations of the same size.
inline double oracle_regret(const SyntheticTask& task,
                            const Combination& selected,
                            const LossOracle& oracle,
                            std::uint64_t cap = kDefaultEnumerationCap) {
  SyntheticTask quiet = task;
  quiet.noise_sigma = 0.0;
  const double own = oracle(quiet, selected);
  double best = own;
  for (const auto& c :
       enumerate_combinations(task.M, selected.size(), cap))
    best = std::min(best, oracle(quiet, c));
  return own - best;
}

/// Kendall tau-b; concordance is counted between x descending and y
/// ascending (high reward should meet a numerically small rank), so perfect
/// agreement returns +1. Knight's O(n log n) merge-counting algorithm.
inline double kendall_tau(const std::vector<double>& predicted_rewards,
                          const std::vector<double>& oracle_ranks) {
  const std::size_t n = predicted_rewards.size();
  if (n != oracle_ranks.size() || n < 2)
    throw std::invalid_argument("kendall_tau: need equal lengths >= 2");

  // Orientation flip: tau(x, -y) under the standard definition.
  std::vector<double> x = predicted_rewards;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = -oracle_ranks[i];

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });

  auto tie_pairs = [](const std::vector<double>& sorted) {
    std::uint64_t t = 0;
    std::size_t run = 1;
    for (std::size_t i = 1; i <= sorted.size(); ++i) {
      if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
        ++run;
      } else {
        t += static_cast<std::uint64_t>(run) * (run - 1) / 2;
        run = 1;
      }
    }
    return t;
  };

  // ties in x, and joint ties, along the sorted order
  std::uint64_t n1 = 0, n3 = 0;
  {
    std::size_t run_x = 1, run_xy = 1;
    for (std::size_t i = 1; i <= n; ++i) {
      const bool same_x = i < n && x[idx[i]] == x[idx[i - 1]];
      const bool same_xy = same_x && y[idx[i]] == y[idx[i - 1]];
      if (same_x) ++run_x;
      else {
        n1 += static_cast<std::uint64_t>(run_x) * (run_x - 1) / 2;
        run_x = 1;
      }
      if (same_xy) ++run_xy;
      else {
        n3 += static_cast<std::uint64_t>(run_xy) * (run_xy - 1) / 2;
        run_xy = 1;
      }
    }
  }

  // merge sort y (in x-order), counting swaps = discordant pairs
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[idx[i]];
  std::uint64_t swaps = 0;
  {
    std::vector<double> tmp(n);
    for (std::size_t width = 1; width < n; width *= 2) {
      for (std::size_t lo = 0; lo < n; lo += 2 * width) {
        const std::size_t mid = std::min(lo + width, n);
        const std::size_t hi = std::min(lo + 2 * width, n);
        std::size_t a = lo, b = mid, o = lo;
        while (a < mid && b < hi) {
          if (ys[b] < ys[a]) {
            swaps += mid - a;
            tmp[o++] = ys[b++];
          } else {
            tmp[o++] = ys[a++];
          }
        }
        while (a < mid) tmp[o++] = ys[a++];
        while (b < hi) tmp[o++] = ys[b++];
        std::copy(tmp.begin() + static_cast<std::ptrdiff_t>(lo),
                  tmp.begin() + static_cast<std::ptrdiff_t>(hi),
                  ys.begin() + static_cast<std::ptrdiff_t>(lo));
      }
    }
  }

  std::vector<double> y_sorted = y;
  std::sort(y_sorted.begin(), y_sorted.end());
  const std::uint64_t n2 = tie_pairs(y_sorted);
  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;

  const double num = static_cast<double>(n0) - static_cast<double>(n1) -
                     static_cast<double>(n2) + static_cast<double>(n3) -
                     2.0 * static_cast<double>(swaps);
  const double den = std::sqrt(static_cast<double>(n0 - n1)) *
                     std::sqrt(static_cast<double>(n0 - n2));
  if (den == 0.0) return 0.0;
  return num / den;
}

struct EvalRow {
  std::string method;
  std::string task_id;
  std::size_t M = 0;
  std::size_t T = 0;
  double recall = 0.0;
  double regret = 0.0;
  double oracle_loss = 0.0;
};

struct MethodAggregate {
  std::string method;
  std::size_t T = 0;
  std::size_t tasks = 0;
  double mean_recall = 0.0;
  double mean_regret = 0.0;
  double mean_oracle_loss = 0.0;
  double mean_kendall_tau = 0.0;  // learned method only; 0 otherwise
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<MethodAggregate> aggregates;
};

struct EvalConfig {
  std::size_t T = 2;
  bool compute_tau = true;  // rank all C(M,T) predicted rewards per task
  std::uint64_t cap = kDefaultEnumerationCap;
};

/// Deterministic comparison over seeded tasks. The learned method requires
/// mixer and heads; evaluation never mutates either. Oracle noise is
/// disabled so regret is exact.
inline EvalReport run_eval(const std::vector<SyntheticTask>& tasks,
                           const std::vector<Method>& methods,
                           const EvalConfig& cfg,
                           const std::vector<MixerParams>* mixer = nullptr,
                           const RewardHeadParams* heads = nullptr) {
  const bool wants_learned =
      std::find(methods.begin(), methods.end(), Method::kLearned) != methods.end();
  if (wants_learned && (mixer == nullptr || heads == nullptr))
    throw std::runtime_error("run_eval: learned method requested without trained weights");

  auto oracle = make_synthetic_oracle();
  EvalReport report;
  std::map<std::string, MethodAggregate> agg;
  double tau_sum = 0.0;
  std::size_t tau_count = 0;

  for (const auto& task : tasks) {
    auto [frames, query] = generate_features(task);
    SyntheticTask quiet = task;
    quiet.noise_sigma = 0.0;
    std::set<std::size_t> relevant(task.relevant_frames.begin(),
                                   task.relevant_frames.end());

    for (Method m : methods) {
      Combination sel;
      switch (m) {
        case Method::kUniform:
          sel = uniform_baseline(task.M, cfg.T);
          break;
        case Method::kMatching:
          sel = matching_baseline(frames, query, cfg.T);
          break;
        case Method::kLearned:
          sel = select_top_t(frames, query, *mixer, *heads, cfg.T).selected;
          break;
      }
      EvalRow row;
      row.method = method_name(m);
      row.task_id = task.video_id;
      row.M = task.M;
      row.T = cfg.T;
      row.recall = recall_at_t(sel, relevant);
      row.regret = oracle_regret(task, sel, oracle, cfg.cap);
      row.oracle_loss = oracle(quiet, sel);
      auto& a = agg[row.method];
      a.method = row.method;
      a.T = cfg.T;
      ++a.tasks;
      a.mean_recall += row.recall;
      a.mean_regret += row.regret;
      a.mean_oracle_loss += row.oracle_loss;
      report.rows.push_back(std::move(row));
    }

    if (wants_learned && cfg.compute_tau) {
      const auto mixed = mix(frames, query, *mixer);
      const auto out = forward(mixed, *heads);
      auto record = rank_record(quiet, cfg.T, oracle, cfg.cap);
      std::vector<double> predicted, ranks;
      predicted.reserve(record.scored.size());
      ranks.reserve(record.scored.size());
      for (const auto& sc : record.scored) {
        predicted.push_back(combination_reward(out, sc.combination));
        ranks.push_back(static_cast<double>(sc.rank));
      }
      tau_sum += kendall_tau(predicted, ranks);
      ++tau_count;
    }
  }

  for (auto& [name, a] : agg) {
    const double n = static_cast<double>(a.tasks);
    a.mean_recall /= n;
    a.mean_regret /= n;
    a.mean_oracle_loss /= n;
    if (name == "learned" && tau_count > 0)
      a.mean_kendall_tau = tau_sum / static_cast<double>(tau_count);
    report.aggregates.push_back(a);
  }
  return report;
}

inline EvalReport run_eval(const std::vector<SyntheticTask>& tasks,
                           const std::vector<Method>& methods,
                           const EvalConfig& cfg, const MixerParams* mixer,
                           const RewardHeadParams* heads) {
  if (mixer == nullptr)
    return run_eval(tasks, methods, cfg,
                    static_cast<const std::vector<MixerParams>*>(nullptr), heads);
  std::vector<MixerParams> stack{*mixer};
  return run_eval(tasks, methods, cfg, &stack, heads);
}

inline std::string report_to_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "method,task_id,M,T,recall,regret,loss\n";
  for (const auto& r : report.rows)
    os << r.method << ',' << r.task_id << ',' << r.M << ',' << r.T << ','
       << r.recall << ',' << r.regret << ',' << r.oracle_loss << '\n';
  return os.str();
}

inline ordered_json report_to_json(const EvalReport& report) {
  ordered_json aggs = ordered_json::array();
  for (const auto& a : report.aggregates) {
    aggs.push_back(ordered_json{{"method", a.method},
                                {"T", a.T},
                                {"tasks", a.tasks},
                                {"mean_recall", a.mean_recall},
                                {"mean_regret", a.mean_regret},
                                {"mean_oracle_loss", a.mean_oracle_loss},
                                {"mean_kendall_tau", a.mean_kendall_tau}});
  }
  return ordered_json{{"aggregates", aggs}};
}

}  // namespace framepick
