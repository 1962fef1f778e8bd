#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "framepick/encoder.hpp"
#include "framepick/io.hpp"
#include "framepick/matrix.hpp"
#include "framepick/rng.hpp"

namespace framepick {

/// An unordered T-subset of the M candidate frames, stored ascending
/// (ascending index = original temporal order).
struct Combination {
  std::vector<std::size_t> frame_indices;

  std::size_t size() const { return frame_indices.size(); }
  bool operator==(const Combination& o) const = default;

  void validate(std::size_t M) const {
    if (frame_indices.empty())
      throw std::invalid_argument("Combination: empty");
    for (std::size_t i = 0; i < frame_indices.size(); ++i) {
      if (frame_indices[i] >= M)
        throw std::invalid_argument("Combination: index out of range");
      if (i > 0 && frame_indices[i] <= frame_indices[i - 1])
        throw std::invalid_argument("Combination: indices not strictly ascending");
    }
  }
};

/// One trainable head: two affine layers d -> d -> h with GELU in between.
struct FfnHead {
  Matrix w1;                // d x d
  std::vector<double> b1;   // d
  Matrix w2;                // h x d
  std::vector<double> b2;   // h

  bool operator==(const FfnHead& o) const = default;

  std::vector<double> apply(const std::vector<double>& x) const {
    auto a = detail::affine(w1, b1, x);
    for (auto& v : a) v = gelu(v);
    return detail::affine(w2, b2, a);
  }
};

/// The two independently parameterized reward heads mapping mixed query and
/// frame features into the h-dimensional reward space.
struct RewardHeadParams {
  std::size_t d = 0;
  std::size_t h = 0;
  FfnHead query_ffn;
  FfnHead frame_ffn;

  bool operator==(const RewardHeadParams& o) const = default;
};

inline RewardHeadParams make_seeded_heads(std::size_t d, std::size_t h,
                                          std::uint64_t seed) {
  RewardHeadParams p;
  p.d = d;
  p.h = h;
  Rng rng(hash_combine(seed, 0x48454144ULL));
  auto init_head = [&](FfnHead& head) {
    const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    head.w1 = Matrix(d, d);
    for (auto& x : head.w1.data) x = rng.next_gaussian() * s1;
    head.b1.assign(d, 0.0);
    head.w2 = Matrix(h, d);
    for (auto& x : head.w2.data) x = rng.next_gaussian() * s1;
    head.b2.assign(h, 0.0);
  };
  init_head(p.query_ffn);
  init_head(p.frame_ffn);
  return p;
}

/// Per-frame rewards plus the h-space vectors they were computed from.
struct RewardOutput {
  std::vector<double> frame_rewards;  // M, each in [-1, 1]
  std::vector<double> query_vec;      // Y_FFN, length h
  Matrix frame_vecs;                  // X_FFN, M x h
};

/// Mean-pools the mixed query rows, applies both heads, and scores every
/// frame by cosine against the query vector.
inline RewardOutput forward(const MixedFeatures& mixed,
                            const RewardHeadParams& params) {
  const std::size_t M = mixed.frames_bl.rows;
  const std::size_t Q = mixed.query_bl.rows;
  const std::size_t d = params.d;
  if (mixed.frames_bl.cols != d || mixed.query_bl.cols != d)
    throw std::invalid_argument("forward: feature dim mismatch");

  std::vector<double> pooled_query(d, 0.0);
  for (std::size_t q = 0; q < Q; ++q)
    for (std::size_t k = 0; k < d; ++k)
      pooled_query[k] += mixed.query_bl.at(q, k);
  for (auto& v : pooled_query) v /= static_cast<double>(Q);

  RewardOutput out;
  out.query_vec = params.query_ffn.apply(pooled_query);
  out.frame_vecs = Matrix(M, params.h);
  out.frame_rewards.resize(M);
  for (std::size_t i = 0; i < M; ++i) {
    auto fv = params.frame_ffn.apply(mixed.frames_bl.row(i));
    std::copy(fv.begin(), fv.end(), out.frame_vecs.row_ptr(i));
    out.frame_rewards[i] = cosine(out.query_vec, fv);
  }
  return out;
}

/// Mean of the member frames' rewards.
inline double combination_reward(const RewardOutput& out,
                                 const Combination& comb) {
  comb.validate(out.frame_rewards.size());
  double acc = 0.0;
  for (auto i : comb.frame_indices) acc += out.frame_rewards[i];
  return acc / static_cast<double>(comb.size());
}

/// Gradient container mirroring RewardHeadParams.
struct HeadGrads {
  FfnHead query_ffn;
  FfnHead frame_ffn;

  static HeadGrads zeros(std::size_t d, std::size_t h) {
    HeadGrads g;
    auto init = [&](FfnHead& head) {
      head.w1 = Matrix(d, d);
      head.b1.assign(d, 0.0);
      head.w2 = Matrix(h, d);
      head.b2.assign(h, 0.0);
    };
    init(g.query_ffn);
    init(g.frame_ffn);
    return g;
  }

  void add_scaled(const HeadGrads& o, double s) {
    auto acc = [&](FfnHead& a, const FfnHead& b) {
      for (std::size_t i = 0; i < a.w1.data.size(); ++i) a.w1.data[i] += s * b.w1.data[i];
      for (std::size_t i = 0; i < a.b1.size(); ++i) a.b1[i] += s * b.b1[i];
      for (std::size_t i = 0; i < a.w2.data.size(); ++i) a.w2.data[i] += s * b.w2.data[i];
      for (std::size_t i = 0; i < a.b2.size(); ++i) a.b2[i] += s * b.b2[i];
    };
    acc(query_ffn, o.query_ffn);
    acc(frame_ffn, o.frame_ffn);
  }
};

struct PairLossGrad {
  double loss = 0.0;
  HeadGrads grads;
};

namespace detail {

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

/// -log sigmoid(x), stable for both tails.
inline double neg_log_sigmoid(double x) {
  return x >= 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

/// d cosine(y, x) / dy for fixed x; zero when either vector is degenerate,
/// matching the reward-neutral convention of cosine().
inline std::vector<double> cosine_grad_wrt_first(const std::vector<double>& y,
                                                 const std::vector<double>& x) {
  const std::size_t n = y.size();
  std::vector<double> g(n, 0.0);
  const double ny = norm(y);
  const double nx = norm(x);
  if (ny < 1e-12 || nx < 1e-12) return g;
  const double dp = dot(y, x);
  for (std::size_t k = 0; k < n; ++k)
    g[k] = x[k] / (ny * nx) - dp * y[k] / (ny * ny * ny * nx);
  return g;
}

/// Backprop through one FFN head for a single input; accumulates parameter
/// gradients given the gradient at the head output.
inline void head_backprop(const FfnHead& head, const std::vector<double>& input,
                          const std::vector<double>& gout, FfnHead& grads) {
  auto a1 = affine(head.w1, head.b1, input);
  std::vector<double> g1(a1.size());
  for (std::size_t i = 0; i < a1.size(); ++i) g1[i] = gelu(a1[i]);

  // layer 2: out = w2 * g1 + b2
  std::vector<double> gg1(g1.size(), 0.0);
  for (std::size_t i = 0; i < head.w2.rows; ++i) {
    for (std::size_t k = 0; k < head.w2.cols; ++k) {
      grads.w2.at(i, k) += gout[i] * g1[k];
      gg1[k] += gout[i] * head.w2.at(i, k);
    }
    grads.b2[i] += gout[i];
  }

  // nonlinearity + layer 1
  for (std::size_t i = 0; i < a1.size(); ++i) {
    const double ga1 = gg1[i] * gelu_grad(a1[i]);
    for (std::size_t k = 0; k < head.w1.cols; ++k)
      grads.w1.at(i, k) += ga1 * input[k];
    grads.b1[i] += ga1;
  }
}

}  // namespace detail

/// Analytic gradient of the pairwise reward-ranking loss
///   L = -(1/P) sum_p log sigmoid(r(winner_p) - r(loser_p))
/// with respect to both head parameter sets. The mixer never appears here:
/// mixed features are constants of the computation.
inline PairLossGrad grad_params(
    const MixedFeatures& mixed, const RewardHeadParams& params,
    const std::vector<std::pair<Combination, Combination>>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("grad_params: no pairs");
  const std::size_t M = mixed.frames_bl.rows;
  const std::size_t Q = mixed.query_bl.rows;
  const std::size_t d = params.d;

  // Forward pass, keeping intermediates.
  std::vector<double> pooled_query(d, 0.0);
  for (std::size_t q = 0; q < Q; ++q)
    for (std::size_t k = 0; k < d; ++k)
      pooled_query[k] += mixed.query_bl.at(q, k);
  for (auto& v : pooled_query) v /= static_cast<double>(Q);

  RewardOutput out = forward(mixed, params);

  PairLossGrad result;
  result.grads = HeadGrads::zeros(d, params.h);
  const double inv_p = 1.0 / static_cast<double>(pairs.size());

  // dL/dr_i accumulated over pairs.
  std::vector<double> reward_grad(M, 0.0);
  for (const auto& [winner, loser] : pairs) {
    winner.validate(M);
    loser.validate(M);
    const double delta =
        combination_reward(out, winner) - combination_reward(out, loser);
    result.loss += inv_p * detail::neg_log_sigmoid(delta);
    const double ddelta = -inv_p * (1.0 - detail::sigmoid(delta));
    for (auto i : winner.frame_indices)
      reward_grad[i] += ddelta / static_cast<double>(winner.size());
    for (auto i : loser.frame_indices)
      reward_grad[i] -= ddelta / static_cast<double>(loser.size());
  }

  // Through the cosines into h-space vectors.
  std::vector<double> gy(params.h, 0.0);
  for (std::size_t i = 0; i < M; ++i) {
    if (reward_grad[i] == 0.0) continue;
    auto xi = out.frame_vecs.row(i);
    auto dcos_dy = detail::cosine_grad_wrt_first(out.query_vec, xi);
    auto dcos_dx = detail::cosine_grad_wrt_first(xi, out.query_vec);
    for (std::size_t k = 0; k < params.h; ++k)
      gy[k] += reward_grad[i] * dcos_dy[k];
    for (auto& v : dcos_dx) v *= reward_grad[i];
    detail::head_backprop(params.frame_ffn, mixed.frames_bl.row(i), dcos_dx,
                          result.grads.frame_ffn);
  }
  detail::head_backprop(params.query_ffn, pooled_query, gy,
                        result.grads.query_ffn);
  return result;
}

// --- FVRH reward head file ---
// magic "FVRH", u32 version, u64 d, u64 h, then query_ffn followed by
// frame_ffn, each as w1 b1 w2 b2, f64 row-major little-endian.

inline constexpr std::uint32_t kHeadsVersion = 1;

namespace detail {

inline void write_head(std::ostream& os, const FfnHead& head) {
  io::write_f64_block(os, head.w1.data);
  io::write_f64_block(os, head.b1);
  io::write_f64_block(os, head.w2.data);
  io::write_f64_block(os, head.b2);
}

inline FfnHead read_head(std::istream& is, std::size_t d, std::size_t h) {
  FfnHead head;
  head.w1 = Matrix(d, d, io::read_f64_block(is, d * d));
  head.b1 = io::read_f64_block(is, d);
  head.w2 = Matrix(h, d, io::read_f64_block(is, h * d));
  head.b2 = io::read_f64_block(is, h);
  return head;
}

}  // namespace detail

inline void save_heads(const RewardHeadParams& p, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_heads: cannot open " + path);
  io::write_magic(os, "FVRH");
  io::write_le<std::uint32_t>(os, kHeadsVersion);
  io::write_le<std::uint64_t>(os, p.d);
  io::write_le<std::uint64_t>(os, p.h);
  detail::write_head(os, p.query_ffn);
  detail::write_head(os, p.frame_ffn);
  if (!os) throw std::runtime_error("save_heads: write failed for " + path);
}

inline RewardHeadParams load_heads(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_heads: cannot open " + path);
  io::expect_magic(is, "FVRH", path);
  if (io::read_le<std::uint32_t>(is) != kHeadsVersion)
    throw std::runtime_error("load_heads: unsupported version in " + path);
  RewardHeadParams p;
  p.d = io::read_le<std::uint64_t>(is);
  p.h = io::read_le<std::uint64_t>(is);
  p.query_ffn = detail::read_head(is, p.d, p.h);
  p.frame_ffn = detail::read_head(is, p.d, p.h);
  return p;
}

}  // namespace framepick
