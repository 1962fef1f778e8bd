#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "framepick/io.hpp"
#include "framepick/matrix.hpp"
#include "framepick/rng.hpp"

namespace framepick {

/// Per-video frame features: raw visual tokens (M x N x d, flat row-major)
/// plus the token-wise mean pooled per-frame matrix (M x d).
struct FrameFeatureSet {
  std::string video_id;
  std::size_t M = 0;  // frames
  std::size_t N = 0;  // tokens per frame
  std::size_t d = 0;  // feature dim
  std::vector<double> tokens;  // M*N*d
  Matrix pooled;               // M x d
};

struct QueryFeatureSet {
  std::string query_id;
  Matrix embeddings;  // Q x d
  std::size_t Q() const { return embeddings.rows; }
  std::size_t d() const { return embeddings.cols; }
};

/// Mean over the N token vectors of each frame.
inline Matrix pool_frame_tokens(const std::vector<double>& tokens,
                                std::size_t M, std::size_t N, std::size_t d) {
  if (tokens.size() != M * N * d)
    throw std::invalid_argument("pool_frame_tokens: bad tensor size");
  Matrix out(M, d);
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t t = 0; t < N; ++t) {
      const double* tok = tokens.data() + (i * N + t) * d;
      for (std::size_t k = 0; k < d; ++k) out.at(i, k) += tok[k];
    }
    for (std::size_t k = 0; k < d; ++k)
      out.at(i, k) /= static_cast<double>(N);
  }
  return out;
}

inline FrameFeatureSet make_frame_feature_set(std::string video_id,
                                              std::size_t M, std::size_t N,
                                              std::size_t d,
                                              std::vector<double> tokens) {
  FrameFeatureSet f;
  f.video_id = std::move(video_id);
  f.M = M;
  f.N = N;
  f.d = d;
  f.pooled = pool_frame_tokens(tokens, M, N, d);
  f.tokens = std::move(tokens);
  return f;
}

/// Frozen weights of the cross-modal mixer layer: one pre-norm transformer
/// layer (causal multi-head self-attention + GELU FFN, residuals) applied to
/// the concatenated [frames, query] sequence. The FFN hidden width is fixed
/// at 4*d by convention of the FVMW format.
struct MixerParams {
  std::size_t head_count = 0;
  std::size_t head_dim = 0;
  std::size_t d = 0;              // head_count * head_dim
  std::size_t max_positions = 0;  // positional table length, >= M + Q

  Matrix wq, wk, wv, wo;  // each d x d
  std::vector<double> bq, bk, bv, bo;
  std::vector<double> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  Matrix ffn_w1;                // 4d x d
  std::vector<double> ffn_b1;   // 4d
  Matrix ffn_w2;                // d x 4d
  std::vector<double> ffn_b2;   // d
  Matrix pos;                   // max_positions x d, sinusoidal

  std::size_t ffn_dim() const { return 4 * d; }
};

/// Mixer outputs split back into the frame and query parts of the sequence.
struct MixedFeatures {
  Matrix frames_bl;  // M x d
  Matrix query_bl;   // Q x d
};

inline Matrix sinusoidal_positions(std::size_t max_positions, std::size_t d) {
  Matrix pos(max_positions, d);
  for (std::size_t p = 0; p < max_positions; ++p) {
    for (std::size_t k = 0; k + 1 < d; k += 2) {
      double rate = std::pow(10000.0, -static_cast<double>(k) /
                                          static_cast<double>(d));
      double angle = static_cast<double>(p) * rate;
      pos.at(p, k) = std::sin(angle);
      pos.at(p, k + 1) = std::cos(angle);
    }
    if (d % 2 == 1) {
      double rate = std::pow(10000.0, -static_cast<double>(d - 1) /
                                          static_cast<double>(d));
      pos.at(p, d - 1) = std::sin(static_cast<double>(p) * rate);
    }
  }
  return pos;
}

/// Seeded frozen mixer. The query/key projections share one random matrix so
/// attention scores form a positive semi-definite content-similarity kernel:
/// near-duplicate frames attend strongly to each other, which is the
/// frame-to-frame signal the reward heads train against.
inline MixerParams make_seeded_mixer(std::size_t head_count,
                                     std::size_t head_dim,
                                     std::size_t max_positions,
                                     std::uint64_t seed) {
  MixerParams p;
  p.head_count = head_count;
  p.head_dim = head_dim;
  p.d = head_count * head_dim;
  p.max_positions = max_positions;
  Rng rng(hash_combine(seed, 0x4d495845ULL));

  const double scale = 1.0 / std::sqrt(static_cast<double>(p.d));
  auto gauss_matrix = [&](std::size_t r, std::size_t c, double s) {
    Matrix m(r, c);
    for (auto& x : m.data) x = rng.next_gaussian() * s;
    return m;
  };

  Matrix shared_qk = gauss_matrix(p.d, p.d, scale);
  p.wq = shared_qk;
  p.wk = shared_qk;
  p.wv = gauss_matrix(p.d, p.d, scale);
  p.wo = gauss_matrix(p.d, p.d, scale);
  p.bq.assign(p.d, 0.0);
  p.bk.assign(p.d, 0.0);
  p.bv.assign(p.d, 0.0);
  p.bo.assign(p.d, 0.0);
  p.ln1_gain.assign(p.d, 1.0);
  p.ln1_bias.assign(p.d, 0.0);
  p.ln2_gain.assign(p.d, 1.0);
  p.ln2_bias.assign(p.d, 0.0);
  p.ffn_w1 = gauss_matrix(4 * p.d, p.d, scale);
  p.ffn_b1.assign(4 * p.d, 0.0);
  p.ffn_w2 = gauss_matrix(p.d, 4 * p.d, 0.5 * scale);
  p.ffn_b2.assign(p.d, 0.0);
  p.pos = sinusoidal_positions(max_positions, p.d);
  return p;
}

namespace detail {

inline std::vector<double> affine(const Matrix& w,
                                  const std::vector<double>& b,
                                  const std::vector<double>& x) {
  std::vector<double> out(w.rows);
  for (std::size_t i = 0; i < w.rows; ++i) {
    double acc = b.empty() ? 0.0 : b[i];
    const double* row = w.row_ptr(i);
    for (std::size_t k = 0; k < w.cols; ++k) acc += row[k] * x[k];
    out[i] = acc;
  }
  return out;
}

}  // namespace detail

/// One pre-norm transformer layer (causal attention + GELU FFN, residuals)
/// applied in place over an S x d sequence. Forward only.
inline Matrix apply_mixer_layer(const Matrix& seq_in, const MixerParams& params) {
  const std::size_t S = seq_in.rows;
  const std::size_t d = params.d;
  if (seq_in.cols != d)
    throw std::invalid_argument("apply_mixer_layer: feature dim mismatch");
  const Matrix& seq = seq_in;

  constexpr double kLnEps = 1e-5;

  // Attention sublayer (pre-norm, causal).
  Matrix qm(S, d), km(S, d), vm(S, d);
  for (std::size_t i = 0; i < S; ++i) {
    auto u = layer_norm(seq.row(i), params.ln1_gain, params.ln1_bias, kLnEps);
    auto qi = detail::affine(params.wq, params.bq, u);
    auto ki = detail::affine(params.wk, params.bk, u);
    auto vi = detail::affine(params.wv, params.bv, u);
    std::copy(qi.begin(), qi.end(), qm.row_ptr(i));
    std::copy(ki.begin(), ki.end(), km.row_ptr(i));
    std::copy(vi.begin(), vi.end(), vm.row_ptr(i));
  }

  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(params.head_dim));
  Matrix attn_out(S, d);
  for (std::size_t h = 0; h < params.head_count; ++h) {
    const std::size_t off = h * params.head_dim;
    for (std::size_t i = 0; i < S; ++i) {
      // causal: position i attends to j <= i only
      Matrix scores(1, i + 1);
      for (std::size_t j = 0; j <= i; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < params.head_dim; ++k)
          acc += qm.at(i, off + k) * km.at(j, off + k);
        scores.at(0, j) = acc * inv_sqrt_hd;
      }
      Matrix w = softmax_rows(scores);
      for (std::size_t k = 0; k < params.head_dim; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j <= i; ++j)
          acc += w.at(0, j) * vm.at(j, off + k);
        attn_out.at(i, off + k) = acc;
      }
    }
  }

  Matrix mid(S, d);
  for (std::size_t i = 0; i < S; ++i) {
    auto proj = detail::affine(params.wo, params.bo, attn_out.row(i));
    for (std::size_t k = 0; k < d; ++k) mid.at(i, k) = seq.at(i, k) + proj[k];
  }

  // FFN sublayer.
  Matrix out(S, d);
  for (std::size_t i = 0; i < S; ++i) {
    auto u = layer_norm(mid.row(i), params.ln2_gain, params.ln2_bias, kLnEps);
    auto hdn = detail::affine(params.ffn_w1, params.ffn_b1, u);
    for (auto& x : hdn) x = gelu(x);
    auto proj = detail::affine(params.ffn_w2, params.ffn_b2, hdn);
    for (std::size_t k = 0; k < d; ++k) out.at(i, k) = mid.at(i, k) + proj[k];
  }
  return out;
}

/// Runs the frozen mixer stack over [frame_1..frame_M, query_1..query_Q]
/// with sinusoidal positions added once before the first layer. The output
/// is split back into the frame and query parts. Pure forward pass.
inline MixedFeatures mix(const FrameFeatureSet& frames,
                         const QueryFeatureSet& query,
                         const std::vector<MixerParams>& layers) {
  if (layers.empty()) throw std::invalid_argument("mix: no mixer layers");
  const std::size_t M = frames.M;
  const std::size_t Q = query.Q();
  const std::size_t d = layers.front().d;
  if (frames.d != d || query.d() != d)
    throw std::invalid_argument("mix: feature dim mismatch");
  if (M + Q > layers.front().max_positions)
    throw std::invalid_argument("mix: sequence longer than positional table");

  Matrix seq(M + Q, d);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t k = 0; k < d; ++k)
      seq.at(i, k) = frames.pooled.at(i, k) + layers.front().pos.at(i, k);
  for (std::size_t q = 0; q < Q; ++q)
    for (std::size_t k = 0; k < d; ++k)
      seq.at(M + q, k) =
          query.embeddings.at(q, k) + layers.front().pos.at(M + q, k);

  for (const auto& layer : layers) seq = apply_mixer_layer(seq, layer);

  MixedFeatures mf;
  mf.frames_bl = Matrix(M, d);
  mf.query_bl = Matrix(Q, d);
  for (std::size_t i = 0; i < M; ++i)
    std::copy(seq.row_ptr(i), seq.row_ptr(i) + d, mf.frames_bl.row_ptr(i));
  for (std::size_t q = 0; q < Q; ++q)
    std::copy(seq.row_ptr(M + q), seq.row_ptr(M + q) + d,
              mf.query_bl.row_ptr(q));
  return mf;
}

inline MixedFeatures mix(const FrameFeatureSet& frames,
                         const QueryFeatureSet& query,
                         const MixerParams& params) {
  return mix(frames, query, std::vector<MixerParams>{params});
}

// --- FVMW mixer weight file ---
// magic "FVMW", u32 version, u64 head_count, head_dim, d, max_positions,
// then f64 row-major blocks in the order: wq bq wk bk wv bv wo bo
// ln1_gain ln1_bias ln2_gain ln2_bias ffn_w1 ffn_b1 ffn_w2 ffn_b2 pos.

inline constexpr std::uint32_t kMixerVersion = 1;

inline void save_mixer(const MixerParams& p, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_mixer: cannot open " + path);
  io::write_magic(os, "FVMW");
  io::write_le<std::uint32_t>(os, kMixerVersion);
  io::write_le<std::uint64_t>(os, p.head_count);
  io::write_le<std::uint64_t>(os, p.head_dim);
  io::write_le<std::uint64_t>(os, p.d);
  io::write_le<std::uint64_t>(os, p.max_positions);
  io::write_f64_block(os, p.wq.data);
  io::write_f64_block(os, p.bq);
  io::write_f64_block(os, p.wk.data);
  io::write_f64_block(os, p.bk);
  io::write_f64_block(os, p.wv.data);
  io::write_f64_block(os, p.bv);
  io::write_f64_block(os, p.wo.data);
  io::write_f64_block(os, p.bo);
  io::write_f64_block(os, p.ln1_gain);
  io::write_f64_block(os, p.ln1_bias);
  io::write_f64_block(os, p.ln2_gain);
  io::write_f64_block(os, p.ln2_bias);
  io::write_f64_block(os, p.ffn_w1.data);
  io::write_f64_block(os, p.ffn_b1);
  io::write_f64_block(os, p.ffn_w2.data);
  io::write_f64_block(os, p.ffn_b2);
  io::write_f64_block(os, p.pos.data);
  if (!os) throw std::runtime_error("save_mixer: write failed for " + path);
}

inline MixerParams load_mixer(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_mixer: cannot open " + path);
  io::expect_magic(is, "FVMW", path);
  if (io::read_le<std::uint32_t>(is) != kMixerVersion)
    throw std::runtime_error("load_mixer: unsupported version in " + path);
  MixerParams p;
  p.head_count = io::read_le<std::uint64_t>(is);
  p.head_dim = io::read_le<std::uint64_t>(is);
  p.d = io::read_le<std::uint64_t>(is);
  p.max_positions = io::read_le<std::uint64_t>(is);
  if (p.d != p.head_count * p.head_dim)
    throw std::runtime_error("load_mixer: inconsistent dims in " + path);
  const std::size_t d = p.d;
  auto mat = [&](std::size_t r, std::size_t c) {
    return Matrix(r, c, io::read_f64_block(is, r * c));
  };
  p.wq = mat(d, d);
  p.bq = io::read_f64_block(is, d);
  p.wk = mat(d, d);
  p.bk = io::read_f64_block(is, d);
  p.wv = mat(d, d);
  p.bv = io::read_f64_block(is, d);
  p.wo = mat(d, d);
  p.bo = io::read_f64_block(is, d);
  p.ln1_gain = io::read_f64_block(is, d);
  p.ln1_bias = io::read_f64_block(is, d);
  p.ln2_gain = io::read_f64_block(is, d);
  p.ln2_bias = io::read_f64_block(is, d);
  p.ffn_w1 = mat(4 * d, d);
  p.ffn_b1 = io::read_f64_block(is, 4 * d);
  p.ffn_w2 = mat(d, 4 * d);
  p.ffn_b2 = io::read_f64_block(is, d);
  p.pos = mat(p.max_positions, d);
  return p;
}

}  // namespace framepick
