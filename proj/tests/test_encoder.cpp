#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "framepick/encoder.hpp"

using namespace framepick;

namespace {

FrameFeatureSet random_frames(std::size_t M, std::size_t N, std::size_t d,
                              std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> tokens(M * N * d);
  for (auto& x : tokens) x = rng.next_gaussian();
  return make_frame_feature_set("vid", M, N, d, std::move(tokens));
}

QueryFeatureSet random_query(std::size_t Q, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  QueryFeatureSet q;
  q.query_id = "qry";
  q.embeddings = Matrix(Q, d);
  for (auto& x : q.embeddings.data) x = rng.next_gaussian();
  return q;
}

// Independent scalar forward pass for a single-element sequence. With one
// position, causal attention reduces to attending to itself with weight 1,
// so the layer is two residual MLP-ish blocks written out by hand here.
std::vector<double> single_token_oracle(const std::vector<double>& x,
                                        const MixerParams& p) {
  const std::size_t d = p.d;
  auto ln = [&](const std::vector<double>& v, const std::vector<double>& g,
                const std::vector<double>& b) {
    double mean = 0.0;
    for (double t : v) mean += t;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double t : v) var += (t - mean) * (t - mean);
    var /= static_cast<double>(d);
    std::vector<double> out(d);
    for (std::size_t i = 0; i < d; ++i)
      out[i] = (v[i] - mean) / std::sqrt(var + 1e-5) * g[i] + b[i];
    return out;
  };
  auto aff = [](const Matrix& w, const std::vector<double>& b,
                const std::vector<double>& v) {
    std::vector<double> out(w.rows);
    for (std::size_t i = 0; i < w.rows; ++i) {
      out[i] = b[i];
      for (std::size_t k = 0; k < w.cols; ++k) out[i] += w.at(i, k) * v[k];
    }
    return out;
  };

  auto u = ln(x, p.ln1_gain, p.ln1_bias);
  auto v = aff(p.wv, p.bv, u);     // attention output == own value vector
  auto proj = aff(p.wo, p.bo, v);
  std::vector<double> mid(d);
  for (std::size_t k = 0; k < d; ++k) mid[k] = x[k] + proj[k];

  auto u2 = ln(mid, p.ln2_gain, p.ln2_bias);
  auto hid = aff(p.ffn_w1, p.ffn_b1, u2);
  for (auto& t : hid) t = 0.5 * t * (1.0 + std::erf(t / std::sqrt(2.0)));
  auto out = aff(p.ffn_w2, p.ffn_b2, hid);
  for (std::size_t k = 0; k < d; ++k) out[k] += mid[k];
  return out;
}

}  // namespace

TEST_CASE("pool_frame_tokens matches scalar mean") {
  const std::size_t M = 3, N = 4, d = 2;
  Rng rng(2);
  std::vector<double> tokens(M * N * d);
  for (auto& x : tokens) x = rng.next_gaussian();
  auto pooled = pool_frame_tokens(tokens, M, N, d);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      double mean = 0.0;
      for (std::size_t t = 0; t < N; ++t) mean += tokens[(i * N + t) * d + k];
      mean /= static_cast<double>(N);
      REQUIRE_THAT(pooled.at(i, k), Catch::Matchers::WithinAbs(mean, 1e-14));
    }
  REQUIRE_THROWS_AS(pool_frame_tokens(tokens, M, N, d + 1),
                    std::invalid_argument);
}

TEST_CASE("sinusoidal positions expected values") {
  auto pos = sinusoidal_positions(4, 6);
  for (std::size_t k = 0; k < 6; k += 2) {
    REQUIRE_THAT(pos.at(0, k), Catch::Matchers::WithinAbs(0.0, 1e-15));
    REQUIRE_THAT(pos.at(0, k + 1), Catch::Matchers::WithinAbs(1.0, 1e-15));
  }
  REQUIRE_THAT(pos.at(2, 0), Catch::Matchers::WithinAbs(std::sin(2.0), 1e-15));
  REQUIRE_THAT(pos.at(3, 1), Catch::Matchers::WithinAbs(std::cos(3.0), 1e-15));
}

TEST_CASE("seeded mixer is deterministic and query/key aligned") {
  auto a = make_seeded_mixer(2, 4, 16, 99);
  auto b = make_seeded_mixer(2, 4, 16, 99);
  auto c = make_seeded_mixer(2, 4, 16, 100);
  REQUIRE(a.wv == b.wv);
  REQUIRE(a.ffn_w1 == b.ffn_w1);
  REQUIRE(a.wq == a.wk);
  REQUIRE_FALSE(a.wv == c.wv);
  REQUIRE(a.d == 8);
  REQUIRE(a.ffn_dim() == 32);
}

TEST_CASE("single-token mixer layer matches independent scalar oracle") {
  for (std::uint64_t seed : {4ULL, 5ULL, 6ULL}) {
    auto p = make_seeded_mixer(2, 3, 4, seed);
    Rng rng(seed + 77);
    Matrix seq(1, p.d);
    for (auto& x : seq.data) x = rng.next_gaussian();
    auto got = apply_mixer_layer(seq, p);
    auto want = single_token_oracle(seq.row(0), p);
    for (std::size_t k = 0; k < p.d; ++k)
      REQUIRE_THAT(got.at(0, k), Catch::Matchers::WithinAbs(want[k], 1e-10));
  }
}

TEST_CASE("mixer attention is causal") {
  auto p = make_seeded_mixer(2, 4, 16, 3);
  Rng rng(55);
  Matrix seq(5, p.d);
  for (auto& x : seq.data) x = rng.next_gaussian();
  auto base = apply_mixer_layer(seq, p);

  Matrix later = seq;
  for (std::size_t k = 0; k < p.d; ++k) later.at(4, k) += 1.0;
  auto perturbed = apply_mixer_layer(later, p);
  // rows 0..3 must be untouched by a change at position 4
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < p.d; ++k)
      REQUIRE(perturbed.at(i, k) == base.at(i, k));

  Matrix earlier = seq;
  for (std::size_t k = 0; k < p.d; ++k) earlier.at(0, k) += 1.0;
  auto forward_flow = apply_mixer_layer(earlier, p);
  double diff = 0.0;
  for (std::size_t k = 0; k < p.d; ++k)
    diff += std::abs(forward_flow.at(4, k) - base.at(4, k));
  REQUIRE(diff > 0.0);
}

TEST_CASE("mix splits the sequence and validates shapes") {
  auto p = make_seeded_mixer(2, 4, 16, 12);
  auto frames = random_frames(6, 2, p.d, 1);
  auto query = random_query(3, p.d, 2);
  auto mf = mix(frames, query, p);
  REQUIRE(mf.frames_bl.rows == 6);
  REQUIRE(mf.query_bl.rows == 3);
  REQUIRE(mf.frames_bl.cols == p.d);

  // identical to running the full sequence by hand
  Matrix seq(9, p.d);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < p.d; ++k)
      seq.at(i, k) = frames.pooled.at(i, k) + p.pos.at(i, k);
  for (std::size_t q = 0; q < 3; ++q)
    for (std::size_t k = 0; k < p.d; ++k)
      seq.at(6 + q, k) = query.embeddings.at(q, k) + p.pos.at(6 + q, k);
  auto full = apply_mixer_layer(seq, p);
  for (std::size_t i = 0; i < 6; ++i)
    REQUIRE(mf.frames_bl.row(i) == full.row(i));
  for (std::size_t q = 0; q < 3; ++q)
    REQUIRE(mf.query_bl.row(q) == full.row(6 + q));

  auto bad_query = random_query(3, p.d + 1, 2);
  REQUIRE_THROWS_AS(mix(frames, bad_query, p), std::invalid_argument);
  auto small = make_seeded_mixer(2, 4, 4, 12);  // table shorter than M+Q
  REQUIRE_THROWS_AS(mix(frames, query, small), std::invalid_argument);
}

TEST_CASE("two-layer stack differs from one layer and is deterministic") {
  auto p0 = make_seeded_mixer(2, 4, 16, 21);
  auto p1 = make_seeded_mixer(2, 4, 16, 22);
  auto frames = random_frames(4, 2, p0.d, 8);
  auto query = random_query(2, p0.d, 9);
  auto one = mix(frames, query, p0);
  auto two = mix(frames, query, std::vector<MixerParams>{p0, p1});
  REQUIRE_FALSE(one.frames_bl == two.frames_bl);
  auto two_again = mix(frames, query, std::vector<MixerParams>{p0, p1});
  REQUIRE(two.frames_bl == two_again.frames_bl);
}

TEST_CASE("mixer weights round-trip through the binary format") {
  auto p = make_seeded_mixer(4, 8, 32, 1234);
  const auto path =
      (std::filesystem::temp_directory_path() / "mixer_rt.fvmw").string();
  save_mixer(p, path);
  auto q = load_mixer(path);
  REQUIRE(q.head_count == p.head_count);
  REQUIRE(q.head_dim == p.head_dim);
  REQUIRE(q.max_positions == p.max_positions);
  REQUIRE(q.wq == p.wq);
  REQUIRE(q.wk == p.wk);
  REQUIRE(q.wv == p.wv);
  REQUIRE(q.wo == p.wo);
  REQUIRE(q.ffn_w1 == p.ffn_w1);
  REQUIRE(q.ffn_w2 == p.ffn_w2);
  REQUIRE(q.ffn_b1 == p.ffn_b1);
  REQUIRE(q.ffn_b2 == p.ffn_b2);
  REQUIRE(q.ln1_gain == p.ln1_gain);
  REQUIRE(q.ln2_bias == p.ln2_bias);
  REQUIRE(q.pos == p.pos);
  std::remove(path.c_str());
  REQUIRE_THROWS(load_mixer(path));
}

TEST_CASE("tensor files round-trip") {
  io::Tensor t;
  t.dims = {2, 3, 4};
  Rng rng(6);
  t.data.resize(24);
  for (auto& x : t.data) x = rng.next_gaussian();
  const auto path =
      (std::filesystem::temp_directory_path() / "tensor_rt.fvtn").string();
  io::save_tensor(t, path);
  auto u = io::load_tensor(path);
  REQUIRE(u.dims == t.dims);
  REQUIRE(u.data == t.data);
  std::remove(path.c_str());
}
