#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "framepick/trainer.hpp"

using namespace framepick;

namespace {

/// Small end-to-end dataset: seeded tasks, ranked, mixed by a frozen mixer.
std::vector<TrainingRecord> tiny_dataset(std::size_t count,
                                         const MixerParams& mixer,
                                         std::uint64_t base_seed) {
  TaskGenConfig cfg;
  cfg.M = 8;
  cfg.d = mixer.d;
  cfg.num_relevant = 4;
  cfg.group_sizes = {2, 2};
  cfg.noise_sigma = 0.05;
  auto oracle = make_synthetic_oracle();
  std::vector<TrainingRecord> out;
  for (std::size_t i = 0; i < count; ++i) {
    auto task = make_synthetic_task(cfg, base_seed, i);
    auto [frames, query] = generate_features(task);
    TrainingRecord tr;
    tr.record = rank_record(task, 2, oracle);
    tr.mixed = mix(frames, query, mixer);
    out.push_back(std::move(tr));
  }
  return out;
}

bool same_params(const RewardHeadParams& a, const RewardHeadParams& b) {
  return a == b;
}

}  // namespace

TEST_CASE("sample_k draws distinct entries deterministically") {
  auto t = make_synthetic_task(TaskGenConfig{}, 5, 0);
  auto rec = rank_record(t, 2, make_synthetic_oracle());

  Rng r1(77), r2(77);
  auto s1 = sample_k(rec, 6, r1);
  auto s2 = sample_k(rec, 6, r2);
  REQUIRE(s1.size() == 6);
  std::set<std::vector<std::size_t>> uniq;
  for (const auto& sc : s1) uniq.insert(sc.combination.frame_indices);
  REQUIRE(uniq.size() == 6);
  for (std::size_t i = 0; i < 6; ++i)
    REQUIRE(s1[i].combination == s2[i].combination);

  Rng r3(78);
  auto s3 = sample_k(rec, 6, r3);
  bool all_same = true;
  for (std::size_t i = 0; i < 6; ++i)
    all_same = all_same && s1[i].combination == s3[i].combination;
  REQUIRE_FALSE(all_same);

  Rng r4(1);
  auto all = sample_k(rec, rec.scored.size(), r4);
  REQUIRE(all.size() == rec.scored.size());
  REQUIRE_THROWS_AS(sample_k(rec, rec.scored.size() + 1, r4),
                    std::invalid_argument);
}

TEST_CASE("make_pairs emits every unordered pair, better rank first") {
  std::vector<ScoredCombination> sampled(4);
  sampled[0] = {Combination{{0, 1}}, 1.0, 3};
  sampled[1] = {Combination{{0, 2}}, 0.5, 1};
  sampled[2] = {Combination{{1, 2}}, 2.0, 4};
  sampled[3] = {Combination{{2, 3}}, 0.7, 2};
  auto pairs = make_pairs(sampled);
  REQUIRE(pairs.size() == 6);  // C(4,2)
  std::map<std::vector<std::size_t>, std::size_t> rank_of;
  for (const auto& sc : sampled) rank_of[sc.combination.frame_indices] = sc.rank;
  for (const auto& [w, l] : pairs)
    REQUIRE(rank_of[w.frame_indices] < rank_of[l.frame_indices]);
}

TEST_CASE("ranking loss identities") {
  REQUIRE_THAT(ranking_loss({1.0, 2.0}, {1.0, 2.0}),
               Catch::Matchers::WithinAbs(std::log(2.0), 1e-15));
  REQUIRE_THAT(ranking_loss({50.0}, {0.0}), Catch::Matchers::WithinAbs(0.0, 1e-15));
  REQUIRE_THAT(ranking_loss({0.0}, {50.0}), Catch::Matchers::WithinAbs(50.0, 1e-9));
  REQUIRE_THROWS_AS(ranking_loss({1.0}, {1.0, 2.0}), std::invalid_argument);
  REQUIRE_THROWS_AS(ranking_loss({}, {}), std::invalid_argument);
}

TEST_CASE("zero epochs leaves the state untouched") {
  auto mixer = make_seeded_mixer(2, 6, 32, 3);
  auto recs = tiny_dataset(3, mixer, 10);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.h = 6;
  auto st = make_train_state(mixer.d, cfg);
  auto before = st.params;
  const auto rng_before = st.rng_state;
  train(recs, st, cfg);
  REQUIRE(same_params(st.params, before));
  REQUIRE(st.step == 0);
  REQUIRE(st.epoch == 0);
  REQUIRE(st.rng_state == rng_before);
}

TEST_CASE("training is bit-reproducible") {
  auto mixer = make_seeded_mixer(2, 6, 32, 3);
  auto recs = tiny_dataset(6, mixer, 10);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.h = 6;
  cfg.batch_size = 4;

  auto st1 = make_train_state(mixer.d, cfg);
  auto st2 = make_train_state(mixer.d, cfg);
  std::vector<TrainLogRow> log1, log2;
  train(recs, st1, cfg, &log1);
  train(recs, st2, cfg, &log2);
  REQUIRE(same_params(st1.params, st2.params));
  REQUIRE(st1.step == st2.step);
  REQUIRE(st1.rng_state == st2.rng_state);
  REQUIRE(log1.size() == log2.size());
  for (std::size_t i = 0; i < log1.size(); ++i) {
    REQUIRE(log1[i].loss == log2[i].loss);
    REQUIRE(log1[i].grad_norm == log2[i].grad_norm);
  }
}

TEST_CASE("loss trends down over training") {
  auto mixer = make_seeded_mixer(2, 6, 32, 3);
  auto recs = tiny_dataset(12, mixer, 20);
  TrainConfig cfg;
  cfg.epochs = 120;
  cfg.learning_rate = 3e-3;
  cfg.h = 6;
  cfg.batch_size = 12;
  auto st = make_train_state(mixer.d, cfg);
  std::vector<TrainLogRow> log;
  train(recs, st, cfg, &log);
  REQUIRE(log.size() >= 10);
  REQUIRE(log.back().loss < 0.8 * log.front().loss);
  for (const auto& row : log) REQUIRE(std::isfinite(row.grad_norm));
}

TEST_CASE("top1_only pairs always have the rank-1 winner") {
  auto t = make_synthetic_task(TaskGenConfig{}, 6, 0);
  auto rec = rank_record(t, 2, make_synthetic_oracle());
  const Combination* best = nullptr;
  for (const auto& sc : rec.scored)
    if (sc.rank == 1) best = &sc.combination;
  Rng rng(4);
  auto pairs = detail::top1_pairs(rec, 5, rng);
  REQUIRE(pairs.size() == 4);  // K-1
  for (const auto& [w, l] : pairs) {
    REQUIRE(w == *best);
    REQUIRE_FALSE(l == *best);
  }
}

TEST_CASE("non-finite loss aborts and names the record") {
  auto mixer = make_seeded_mixer(2, 6, 32, 3);
  auto recs = tiny_dataset(2, mixer, 30);
  for (auto& x : recs[1].mixed.frames_bl.data)
    x = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.h = 6;
  auto st = make_train_state(mixer.d, cfg);
  REQUIRE_THROWS_WITH(train(recs, st, cfg),
                      Catch::Matchers::ContainsSubstring(recs[1].record.video_id));
}

TEST_CASE("checkpoint round-trip and resume reproduce straight-through training") {
  auto mixer = make_seeded_mixer(2, 6, 32, 3);
  auto recs = tiny_dataset(6, mixer, 40);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.h = 6;
  cfg.batch_size = 3;

  auto straight = make_train_state(mixer.d, cfg);
  train(recs, straight, cfg);

  auto half_cfg = cfg;
  half_cfg.epochs = 3;
  auto staged = make_train_state(mixer.d, cfg);
  train(recs, staged, half_cfg);

  const auto path =
      (std::filesystem::temp_directory_path() / "resume.fvck").string();
  save_checkpoint(staged, path);
  auto resumed = load_checkpoint(path);
  REQUIRE(same_params(resumed.params, staged.params));
  REQUIRE(resumed.step == staged.step);
  REQUIRE(resumed.epoch == 3);
  REQUIRE(resumed.rng_state == staged.rng_state);
  REQUIRE(resumed.running_loss == staged.running_loss);
  REQUIRE(resumed.adam_m.query_ffn == staged.adam_m.query_ffn);
  REQUIRE(resumed.adam_v.frame_ffn == staged.adam_v.frame_ffn);
  std::remove(path.c_str());

  train(recs, resumed, cfg);  // continues epochs 3..6
  REQUIRE(same_params(resumed.params, straight.params));
  REQUIRE(resumed.step == straight.step);
  REQUIRE(resumed.rng_state == straight.rng_state);
}

TEST_CASE("gradient check passes on healthy gradients") {
  GradCheckConfig gc;
  auto report = gradient_check(gc, {1, 2});
  REQUIRE(report.passed);
  REQUIRE(report.max_rel_error < gc.tolerance);
  REQUIRE(report.tensors.size() == 16);  // 8 tensors x 2 seeds
}

TEST_CASE("gradient check detects a corrupted gradient") {
  GradCheckConfig gc;
  gc.corruption = 0.5;
  auto report = gradient_check(gc, {1});
  REQUIRE_FALSE(report.passed);
  REQUIRE(report.max_rel_error >= gc.tolerance);
}
