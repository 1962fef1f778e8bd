// framepick command line: dataset generation, reward-head training, frame
// selection, evaluation, and gradient checking.
//
// Exit codes: 0 success, 1 internal error, 2 bad input/paths, 3 missing
// artifacts (e.g. trained weights).

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "framepick/datagen.hpp"
#include "framepick/evalharness.hpp"
#include "framepick/selector.hpp"
#include "framepick/trainer.hpp"

namespace fs = std::filesystem;
using namespace framepick;

namespace {

struct BadInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr std::uint64_t kDefaultSeed = 20240901;

/// Everything a run can configure. JSON config file values are applied
/// first, command line flags win.
struct RunConfig {
  // task generation
  std::size_t M = 16, N = 4, d = 32, Q = 5;
  std::size_t num_relevant = 4;
  std::vector<std::size_t> group_sizes = {2, 2};
  double noise_sigma = 0.05;
  double alignment = 2.0;
  double alignment_skew = 0.05;
  double content_scale = 0.4;
  double jitter_scale = 0.6;
  double token_noise = 0.25;
  double loss_base = 5.0;
  double loss_gain = 2.0;
  std::size_t num_tasks = 100;
  std::size_t T = 2;
  double avg_loss_threshold = 7.0;
  double variance_fraction = 0.3;
  std::uint64_t enumeration_cap = kDefaultEnumerationCap;

  // mixer
  std::size_t head_count = 4;
  std::size_t head_dim = 8;
  std::size_t mixer_layers = 1;

  // training
  std::size_t K = 4;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  bool top1_only = false;
  std::size_t h = 16;

  std::uint64_t seed = kDefaultSeed;
  std::size_t jobs = 1;
};

void apply_json_config(RunConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw BadInputError("config file not found: " + path);
  ordered_json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw BadInputError("config parse error in " + path + ": " + e.what());
  }
  static const std::set<std::string> known = {
      "M", "N", "d", "Q", "num_relevant", "group_sizes", "noise_sigma",
      "alignment", "alignment_skew", "content_scale", "jitter_scale",
      "token_noise", "loss_base", "loss_gain", "num_tasks", "T",
      "avg_loss_threshold", "variance_fraction", "enumeration_cap",
      "head_count", "head_dim", "mixer_layers", "K", "learning_rate",
      "batch_size", "epochs", "top1_only", "h", "seed", "jobs"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key))
      throw BadInputError("unknown config key '" + key + "' in " + path);
    (void)value;
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("M", cfg.M);
  get("N", cfg.N);
  get("d", cfg.d);
  get("Q", cfg.Q);
  get("num_relevant", cfg.num_relevant);
  get("group_sizes", cfg.group_sizes);
  get("noise_sigma", cfg.noise_sigma);
  get("alignment", cfg.alignment);
  get("alignment_skew", cfg.alignment_skew);
  get("content_scale", cfg.content_scale);
  get("jitter_scale", cfg.jitter_scale);
  get("token_noise", cfg.token_noise);
  get("loss_base", cfg.loss_base);
  get("loss_gain", cfg.loss_gain);
  get("num_tasks", cfg.num_tasks);
  get("T", cfg.T);
  get("avg_loss_threshold", cfg.avg_loss_threshold);
  get("variance_fraction", cfg.variance_fraction);
  get("enumeration_cap", cfg.enumeration_cap);
  get("head_count", cfg.head_count);
  get("head_dim", cfg.head_dim);
  get("mixer_layers", cfg.mixer_layers);
  get("K", cfg.K);
  get("learning_rate", cfg.learning_rate);
  get("batch_size", cfg.batch_size);
  get("epochs", cfg.epochs);
  get("top1_only", cfg.top1_only);
  get("h", cfg.h);
  get("seed", cfg.seed);
  get("jobs", cfg.jobs);
}

TaskGenConfig task_gen_config(const RunConfig& cfg, double noise_sigma) {
  TaskGenConfig tg;
  tg.M = cfg.M;
  tg.N = cfg.N;
  tg.d = cfg.d;
  tg.Q = cfg.Q;
  tg.num_relevant = cfg.num_relevant;
  tg.group_sizes = cfg.group_sizes;
  tg.noise_sigma = noise_sigma;
  tg.alignment = cfg.alignment;
  tg.alignment_skew = cfg.alignment_skew;
  tg.content_scale = cfg.content_scale;
  tg.jitter_scale = cfg.jitter_scale;
  tg.token_noise = cfg.token_noise;
  tg.loss_base = cfg.loss_base;
  tg.loss_gain = cfg.loss_gain;
  return tg;
}

std::vector<MixerParams> seeded_mixer_stack(const RunConfig& cfg) {
  if (cfg.head_count * cfg.head_dim != cfg.d)
    throw BadInputError("head_count * head_dim must equal d");
  std::vector<MixerParams> stack;
  const std::size_t max_pos = cfg.M + cfg.Q + 16;
  for (std::size_t l = 0; l < cfg.mixer_layers; ++l)
    stack.push_back(make_seeded_mixer(cfg.head_count, cfg.head_dim, max_pos,
                                      hash_combine(cfg.seed, 0x4D58 + l)));
  return stack;
}

std::vector<std::string> mixer_paths(const fs::path& dir, std::size_t layers) {
  std::vector<std::string> paths;
  if (layers == 1) {
    paths.push_back((dir / "mixer.fvmw").string());
  } else {
    for (std::size_t l = 0; l < layers; ++l)
      paths.push_back((dir / ("mixer." + std::to_string(l) + ".fvmw")).string());
  }
  return paths;
}

std::vector<MixerParams> load_mixer_stack(const std::vector<std::string>& paths) {
  std::vector<MixerParams> stack;
  for (const auto& p : paths) {
    if (!fs::exists(p))
      throw MissingArtifactError("mixer weights not found: " + p);
    stack.push_back(load_mixer(p));
  }
  return stack;
}

/// Runs fn(i) for i in [0, n) across `jobs` threads. Outputs must be stored
/// by index so the result is order-independent.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n == 0 ? 1 : n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < jobs; ++t) {
    threads.emplace_back([&, t]() {
      for (std::size_t i = t; i < n; i += jobs) fn(i);
    });
  }
  for (auto& th : threads) th.join();
}

// --- gen-data ---

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const auto tg = task_gen_config(cfg, cfg.noise_sigma);
  const auto oracle = make_synthetic_oracle();

  std::vector<SyntheticTask> tasks(cfg.num_tasks);
  std::vector<RankedCombinationRecord> records(cfg.num_tasks);
  parallel_for(cfg.num_tasks, cfg.jobs, [&](std::size_t i) {
    tasks[i] = make_synthetic_task(tg, cfg.seed, i);
    records[i] = rank_record(tasks[i], cfg.T, oracle, cfg.enumeration_cap);
  });

  const std::size_t generated = records.size();
  auto kept = filter_by_avg_loss(std::move(records), cfg.avg_loss_threshold);
  const std::size_t after_avg = kept.size();
  kept = filter_by_variance(std::move(kept), cfg.variance_fraction);
  const std::size_t after_var = kept.size();

  std::set<std::string> kept_ids;
  for (const auto& r : kept) kept_ids.insert(r.video_id);

  {
    std::ofstream os(fs::path(out_dir) / "tasks.jsonl", std::ios::binary);
    for (const auto& t : tasks) os << to_json(t).dump() << '\n';
  }
  {
    std::ofstream os(fs::path(out_dir) / "records.jsonl", std::ios::binary);
    for (const auto& r : kept) os << to_json(r).dump() << '\n';
  }
  for (const auto& t : tasks) {
    if (!kept_ids.count(t.video_id)) continue;
    auto [frames, query] = generate_features(t);
    io::Tensor tok;
    tok.dims = {t.M, t.N, t.d};
    tok.data = frames.tokens;
    io::save_tensor(tok, (fs::path(out_dir) / (t.video_id + ".fvtn")).string());
    io::Tensor qe;
    qe.dims = {t.Q, t.d};
    qe.data = query.embeddings.data;
    io::save_tensor(qe, (fs::path(out_dir) / (t.query_id + ".fvtn")).string());
  }

  std::cout << "generated records: " << generated << "\n"
            << "after avg-loss filter (threshold " << cfg.avg_loss_threshold
            << "): " << after_avg << "\n"
            << "after variance filter (fraction " << cfg.variance_fraction
            << "): " << after_var << "\n"
            << "output dir: " << out_dir << "\n";
  return 0;
}

// --- train ---

std::vector<TrainingRecord> load_training_records(
    const RunConfig& cfg, const std::string& data_dir,
    const std::vector<MixerParams>& mixer) {
  const fs::path records_path = fs::path(data_dir) / "records.jsonl";
  if (!fs::exists(records_path))
    throw BadInputError("dataset not found: " + records_path.string());

  std::vector<TrainingRecord> out;
  std::ifstream is(records_path);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto rec = record_from_json(ordered_json::parse(line));
    const auto video_path = fs::path(data_dir) / (rec.video_id + ".fvtn");
    const auto query_path = fs::path(data_dir) / (rec.query_id + ".fvtn");
    if (!fs::exists(video_path) || !fs::exists(query_path))
      throw BadInputError("feature sidecar missing for record " + rec.video_id);
    auto tok = io::load_tensor(video_path.string());
    auto qe = io::load_tensor(query_path.string());
    if (tok.dims.size() != 3 || qe.dims.size() != 2)
      throw BadInputError("unexpected tensor rank in sidecars for " + rec.video_id);
    auto frames = make_frame_feature_set(rec.video_id, tok.dims[0], tok.dims[1],
                                         tok.dims[2], std::move(tok.data));
    if (frames.d != cfg.d)
      throw BadInputError("dataset feature dim " + std::to_string(frames.d) +
                          " does not match configured d " + std::to_string(cfg.d));
    QueryFeatureSet query;
    query.query_id = rec.query_id;
    query.embeddings = Matrix(qe.dims[0], qe.dims[1], std::move(qe.data));
    TrainingRecord tr;
    tr.mixed = mix(frames, query, mixer);
    tr.record = std::move(rec);
    out.push_back(std::move(tr));
  }
  if (out.empty())
    throw BadInputError("dataset is empty: " + records_path.string());
  return out;
}

int cmd_train(const RunConfig& cfg, const std::string& data_dir,
              const std::string& out_dir, const std::string& mixer_in,
              const std::string& resume) {
  fs::create_directories(out_dir);

  std::vector<MixerParams> mixer;
  std::vector<std::string> out_paths = mixer_paths(out_dir, cfg.mixer_layers);
  if (!mixer_in.empty()) {
    mixer = load_mixer_stack({mixer_in});
  } else {
    mixer = seeded_mixer_stack(cfg);
  }
  for (std::size_t l = 0; l < mixer.size(); ++l)
    save_mixer(mixer[l], out_paths[l]);

  auto records = load_training_records(cfg, data_dir, mixer);

  TrainConfig tc;
  tc.K = cfg.K;
  tc.learning_rate = cfg.learning_rate;
  tc.batch_size = cfg.batch_size;
  tc.epochs = cfg.epochs;
  tc.seed = cfg.seed;
  tc.top1_only = cfg.top1_only;
  tc.h = cfg.h;

  TrainState state = resume.empty() ? make_train_state(cfg.d, tc)
                                    : load_checkpoint(resume);
  std::vector<TrainLogRow> log;
  train(records, state, tc, &log);

  save_checkpoint(state, (fs::path(out_dir) / "checkpoint.fvck").string());
  save_heads(state.params, (fs::path(out_dir) / "heads.fvrh").string());
  {
    std::ofstream os(fs::path(out_dir) / "train_log.csv", std::ios::binary);
    os << "step,epoch,loss,grad_norm\n";
    for (const auto& row : log)
      os << row.step << ',' << row.epoch << ',' << row.loss << ','
         << row.grad_norm << '\n';
  }
  std::cout << "trained " << state.epoch << " epochs, " << state.step
            << " steps; final loss " << state.running_loss << "\n"
            << "weights: " << (fs::path(out_dir) / "heads.fvrh").string() << "\n";
  return 0;
}

// --- select ---

int cmd_select(const RunConfig& cfg, const std::string& frames_path,
               const std::string& query_path, const std::string& mixer_path,
               const std::string& heads_path, const std::string& out_path) {
  if (!fs::exists(frames_path))
    throw BadInputError("frames tensor not found: " + frames_path);
  if (!fs::exists(query_path))
    throw BadInputError("query tensor not found: " + query_path);
  if (!fs::exists(heads_path))
    throw MissingArtifactError("trained heads not found: " + heads_path);
  auto mixer = load_mixer_stack({mixer_path});
  auto heads = load_heads(heads_path);

  auto tok = io::load_tensor(frames_path);
  auto qe = io::load_tensor(query_path);
  if (tok.dims.size() != 3)
    throw BadInputError("frames tensor must have rank 3 (M,N,d)");
  if (qe.dims.size() != 2)
    throw BadInputError("query tensor must have rank 2 (Q,d)");
  auto frames = make_frame_feature_set(fs::path(frames_path).stem().string(),
                                       tok.dims[0], tok.dims[1], tok.dims[2],
                                       std::move(tok.data));
  QueryFeatureSet query;
  query.query_id = fs::path(query_path).stem().string();
  query.embeddings = Matrix(qe.dims[0], qe.dims[1], std::move(qe.data));

  auto result = select_top_t(frames, query, mixer, heads, cfg.T);
  ordered_json j{{"video_id", frames.video_id},
                 {"query_id", query.query_id},
                 {"T", cfg.T},
                 {"selected", result.selected.frame_indices},
                 {"frame_rewards", result.frame_rewards}};
  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream os(out_path, std::ios::binary);
    os << j.dump(2) << "\n";
  }
  return 0;
}

// --- eval ---

EvalReport merge_reports(std::vector<EvalReport> parts) {
  EvalReport merged;
  std::map<std::string, MethodAggregate> agg;
  for (auto& part : parts) {
    for (auto& row : part.rows) merged.rows.push_back(std::move(row));
    for (const auto& a : part.aggregates) {
      auto& m = agg[a.method + "/" + std::to_string(a.T)];
      const double n_old = static_cast<double>(m.tasks);
      const double n_new = static_cast<double>(a.tasks);
      const double n_tot = n_old + n_new;
      auto blend = [&](double acc, double add) {
        return (acc * n_old + add * n_new) / n_tot;
      };
      m.method = a.method;
      m.T = a.T;
      m.mean_recall = blend(m.mean_recall, a.mean_recall);
      m.mean_regret = blend(m.mean_regret, a.mean_regret);
      m.mean_oracle_loss = blend(m.mean_oracle_loss, a.mean_oracle_loss);
      m.mean_kendall_tau = blend(m.mean_kendall_tau, a.mean_kendall_tau);
      m.tasks += a.tasks;
    }
  }
  for (auto& [_, a] : agg) merged.aggregates.push_back(a);
  return merged;
}

int cmd_eval(const RunConfig& cfg, const std::vector<std::string>& method_names,
             const std::vector<std::size_t>& t_values,
             const std::string& mixer_path, const std::string& heads_path,
             const std::string& out_csv, const std::string& out_json) {
  std::vector<Method> methods;
  for (const auto& name : method_names) {
    if (name == "uniform") methods.push_back(Method::kUniform);
    else if (name == "matching") methods.push_back(Method::kMatching);
    else if (name == "learned") methods.push_back(Method::kLearned);
    else throw BadInputError("unknown method: " + name);
  }
  const bool learned =
      std::find(methods.begin(), methods.end(), Method::kLearned) != methods.end();

  std::vector<MixerParams> mixer;
  RewardHeadParams heads;
  if (learned) {
    if (heads_path.empty() || !fs::exists(heads_path))
      throw MissingArtifactError("trained heads not found: " + heads_path);
    mixer = load_mixer_stack({mixer_path});
    heads = load_heads(heads_path);
  }

  // Held-out tasks are seeded from this run's seed; use a seed range
  // disjoint from the training dataset's. Evaluation is always noise-free.
  const auto tg = task_gen_config(cfg, 0.0);
  std::vector<SyntheticTask> tasks(cfg.num_tasks);
  for (std::size_t i = 0; i < cfg.num_tasks; ++i)
    tasks[i] = make_synthetic_task(tg, cfg.seed, i);

  std::vector<std::size_t> ts = t_values.empty()
                                    ? std::vector<std::size_t>{cfg.T}
                                    : t_values;
  std::vector<EvalReport> parts;
  for (auto t : ts) {
    EvalConfig ec;
    ec.T = t;
    ec.cap = cfg.enumeration_cap;
    const std::size_t jobs = std::max<std::size_t>(1, cfg.jobs);
    if (jobs == 1) {
      parts.push_back(run_eval(tasks, methods, ec, learned ? &mixer : nullptr,
                               learned ? &heads : nullptr));
    } else {
      std::vector<std::vector<SyntheticTask>> chunks(jobs);
      for (std::size_t i = 0; i < tasks.size(); ++i)
        chunks[i % jobs].push_back(tasks[i]);
      std::vector<EvalReport> chunk_reports(jobs);
      parallel_for(jobs, jobs, [&](std::size_t c) {
        if (!chunks[c].empty())
          chunk_reports[c] =
              run_eval(chunks[c], methods, ec, learned ? &mixer : nullptr,
                       learned ? &heads : nullptr);
      });
      auto merged = merge_reports(std::move(chunk_reports));
      // deterministic row order regardless of chunking
      std::stable_sort(merged.rows.begin(), merged.rows.end(),
                       [](const EvalRow& a, const EvalRow& b) {
                         if (a.task_id != b.task_id) return a.task_id < b.task_id;
                         return a.method < b.method;
                       });
      parts.push_back(std::move(merged));
    }
  }
  auto report = merge_reports(std::move(parts));

  if (!out_csv.empty()) {
    std::ofstream os(out_csv, std::ios::binary);
    os << report_to_csv(report);
  }
  if (!out_json.empty()) {
    std::ofstream os(out_json, std::ios::binary);
    os << report_to_json(report).dump(2) << "\n";
  }
  for (const auto& a : report.aggregates)
    std::cout << a.method << " T=" << a.T << " tasks=" << a.tasks
              << " recall=" << a.mean_recall << " regret=" << a.mean_regret
              << " loss=" << a.mean_oracle_loss
              << " tau=" << a.mean_kendall_tau << "\n";
  return 0;
}

// --- gradcheck ---

int cmd_gradcheck(const std::vector<std::uint64_t>& seeds, bool verbose) {
  GradCheckConfig gc;
  auto report = gradient_check(gc, seeds);
  if (verbose) {
    for (const auto& t : report.tensors)
      std::cout << t.tensor << " max_rel_error=" << t.max_rel_error << "\n";
  }
  std::cout << (report.passed ? "PASS" : "FAIL")
            << " max_rel_error=" << report.max_rel_error << "\n";
  return report.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;

  // The config file is applied before flag parsing so that flags win.
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    try {
      if (arg == "--config" && i + 1 < argc) {
        apply_json_config(cfg, argv[i + 1]);
      } else if (arg.rfind("--config=", 0) == 0) {
        apply_json_config(cfg, arg.substr(9));
      }
    } catch (const BadInputError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }

  CLI::App app{"combination-supervised frame selection pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (flags override)");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "root seed for all randomness");
    sub->add_option("--jobs", cfg.jobs, "parallelism degree");
    sub->add_option("--config", config_path, "JSON config file (flags override)");
  };

  // gen-data
  std::string out_dir = "data";
  auto* gen = app.add_subcommand("gen-data", "generate ranked combination data");
  add_common(gen);
  gen->add_option("--out", out_dir, "output directory");
  gen->add_option("--num-tasks", cfg.num_tasks, "tasks to generate");
  gen->add_option("--m", cfg.M, "candidate frames per task");
  gen->add_option("--t", cfg.T, "frames per combination");
  gen->add_option("--noise-sigma", cfg.noise_sigma, "oracle loss noise");
  gen->add_option("--avg-loss-threshold", cfg.avg_loss_threshold,
                  "drop records with mean loss strictly above this");
  gen->add_option("--variance-fraction", cfg.variance_fraction,
                  "keep this top fraction by loss variance");

  // train
  std::string data_dir = "data", train_out = "run", mixer_in, resume;
  auto* tr = app.add_subcommand("train", "train the reward heads");
  add_common(tr);
  tr->add_option("--data", data_dir, "dataset directory (records.jsonl + .fvtn)");
  tr->add_option("--out", train_out, "output directory for weights and logs");
  tr->add_option("--mixer", mixer_in, "load frozen mixer weights instead of seeding");
  tr->add_option("--resume", resume, "resume from a checkpoint file");
  tr->add_option("--epochs", cfg.epochs, "training epochs");
  tr->add_option("--k", cfg.K, "combinations sampled per record");
  tr->add_option("--lr", cfg.learning_rate, "learning rate");
  tr->add_option("--batch-size", cfg.batch_size, "records per optimizer step");
  tr->add_option("--hdim", cfg.h, "reward head output dim");
  tr->add_flag("--top1-only", cfg.top1_only, "train rank-1 vs others only");

  // select
  std::string frames_path, query_path, heads_path, mixer_path, select_out;
  auto* sel = app.add_subcommand("select", "select top-T frames for one input");
  add_common(sel);
  sel->add_option("--frames", frames_path, "frame tokens .fvtn")->required();
  sel->add_option("--query", query_path, "query embedding .fvtn")->required();
  sel->add_option("--mixer", mixer_path, "mixer weights .fvmw")->required();
  sel->add_option("--heads", heads_path, "trained heads .fvrh")->required();
  sel->add_option("--t", cfg.T, "frames to select");
  sel->add_option("--out", select_out, "write selection JSON here (default stdout)");

  // eval
  std::vector<std::string> methods = {"uniform", "matching", "learned"};
  std::vector<std::size_t> t_values;
  std::string eval_mixer, eval_heads, out_csv, out_json;
  auto* ev = app.add_subcommand("eval", "compare selection methods on held-out tasks");
  add_common(ev);
  ev->add_option("--methods", methods, "subset of uniform,matching,learned");
  ev->add_option("--t", t_values, "frames to select (repeat for a sweep)");
  ev->add_option("--m", cfg.M, "candidate frames per held-out task");
  ev->add_option("--num-tasks", cfg.num_tasks, "held-out tasks to generate");
  ev->add_option("--mixer", eval_mixer, "mixer weights .fvmw");
  ev->add_option("--heads", eval_heads, "trained heads .fvrh");
  ev->add_option("--out-csv", out_csv, "per-task CSV report path");
  ev->add_option("--out-json", out_json, "aggregate JSON report path");

  // gradcheck
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  bool verbose = false;
  auto* gch = app.add_subcommand("gradcheck",
                                 "finite-difference check of analytic gradients");
  gch->add_option("--seeds", seeds, "seeds to check");
  gch->add_flag("--verbose", verbose, "per-tensor detail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(cfg, out_dir);
    if (tr->parsed()) return cmd_train(cfg, data_dir, train_out, mixer_in, resume);
    if (sel->parsed())
      return cmd_select(cfg, frames_path, query_path, mixer_path, heads_path,
                        select_out);
    if (ev->parsed())
      return cmd_eval(cfg, methods, t_values, eval_mixer, eval_heads, out_csv,
                      out_json);
    if (gch->parsed()) return cmd_gradcheck(seeds, verbose);
  } catch (const BadInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
