#include "origami/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "origami/datagen.hpp"
#include "origami/metrics.hpp"
#include "origami/pipeline.hpp"
#include "origami/rng.hpp"

namespace origami {
namespace {

constexpr uint64_t kDataSeed = 17;
constexpr uint64_t kSplitSeed = 11;

TrainConfig dungeon_train_config(int64_t batches, int64_t batch_size, int64_t eval_every) {
  TrainConfig tc;
  tc.model.d = 128;
  tc.model.h = 4;
  tc.model.layers = 4;
  tc.model.n = 0;  // fit to the longest training document
  tc.batch_size = batch_size;
  tc.total_batches = batches;
  tc.eval_every = eval_every;
  tc.target_key = "treasure";
  return tc;
}

int64_t steps_taken(const TrainResult& tr) {
  return tr.log.empty() ? 0 : tr.log.back().step;
}

}  // namespace

ExperimentResult dungeons_pe(const DungeonsPeOptions& opt) {
  DungeonsConfig data = dungeons_preset("hard");
  data.n_instances = opt.instances;
  data.seed = kDataSeed;
  const std::vector<Document> corpus = generate_dungeons(data);
  const DatasetSplit sp = split(corpus, 0.8, kSplitSeed);

  ExperimentResult result;
  result.preset = "dungeons-pe";
  const PositionEncodingKind kinds[] = {
      PositionEncodingKind::KVPE, PositionEncodingKind::AbsoluteLearned,
      PositionEncodingKind::Sinusoidal, PositionEncodingKind::NoneKind};
  for (const PositionEncodingKind pe : kinds) {
    const bool trace_arm = pe == PositionEncodingKind::KVPE;
    const std::vector<uint64_t>& seeds = trace_arm ? opt.seeds : opt.baseline_seeds;
    for (const uint64_t seed : seeds) {
      TrainConfig tc = dungeon_train_config(opt.total_batches, opt.batch_size, opt.eval_every);
      tc.model.pe_kind = pe;
      tc.seed = seed;
      if (trace_arm && opt.early_stop >= 0) tc.stop_at_test_accuracy = opt.early_stop;
      const TrainResult tr = train(sp.train, sp.test, tc);

      ExperimentRun run;
      run.arm = pe_kind_name(pe);
      run.seed = seed;
      run.steps = steps_taken(tr);
      run.n_success = tr.n_success;
      run.test_accuracy = tr.final_test_accuracy;
      const std::vector<Document> seen = materialized_training_corpus(sp.train, tc);
      const EvalSet train_set =
          build_eval_set(seen, tr.vocab, tr.config.model.n, tc.target_key);
      run.train_accuracy = eval_accuracy(tr.config.model, tr.params, train_set).accuracy();
      run.log = tr.log;
      result.runs.push_back(std::move(run));
    }
  }
  return result;
}

ExperimentResult guardrails_comparison(const GuardrailsOptions& opt) {
  DungeonsConfig data = dungeons_preset("easy");
  data.n_instances = opt.instances;
  data.seed = kDataSeed;
  const std::vector<Document> corpus = generate_dungeons(data);
  const DatasetSplit sp = split(corpus, 0.8, kSplitSeed);

  ExperimentResult result;
  result.preset = "guardrails";
  for (const bool masked : {true, false}) {
    for (const uint64_t seed : opt.seeds) {
      TrainConfig tc = dungeon_train_config(opt.max_batches, opt.batch_size, opt.eval_every);
      tc.guardrails = masked;
      tc.seed = seed;
      tc.stop_at_test_accuracy = 1.0;
      const TrainResult tr = train(sp.train, sp.test, tc);

      ExperimentRun run;
      run.arm = masked ? "guardrails" : "no-guardrails";
      run.seed = seed;
      run.steps = steps_taken(tr);
      run.n_success = tr.n_success;
      run.test_accuracy = tr.final_test_accuracy;
      run.log = tr.log;
      result.runs.push_back(std::move(run));
    }
  }
  return result;
}

ExperimentResult upscaling_sweep(const UpscalingOptions& opt) {
  const std::vector<Document> corpus = generate_lookup_corpus(opt.instances, kDataSeed);
  const DatasetSplit sp = split(corpus, 0.5, kSplitSeed);

  struct Arm {
    std::string name;
    int64_t u;
    bool shuffle;
  };
  std::vector<Arm> arms;
  if (opt.include_ordered) arms.push_back({"u1-ordered", 1, false});
  for (const int64_t u : opt.factors)
    arms.push_back({"u" + std::to_string(u), u, true});

  ExperimentResult result;
  result.preset = "upscaling";
  for (const Arm& arm : arms) {
    for (const uint64_t seed : opt.seeds) {
      TrainConfig tc;
      tc.model.d = 64;
      tc.model.h = 4;
      tc.model.layers = 2;
      tc.model.n = 0;
      tc.batch_size = opt.batch_size;
      tc.total_batches = opt.total_batches;
      tc.eval_every = opt.eval_every;
      tc.upscale = arm.u;
      tc.shuffle = arm.shuffle;
      tc.seed = seed;
      tc.target_key = "label";
      const TrainResult tr = train(sp.train, sp.test, tc);

      ExperimentRun run;
      run.arm = arm.name;
      run.seed = seed;
      run.steps = steps_taken(tr);
      run.n_success = tr.n_success;
      run.test_accuracy = tr.final_test_accuracy;
      const std::vector<Document> seen = materialized_training_corpus(sp.train, tc);
      run.train_loss = corpus_loss(tr.config.model, tr.params, tr.vocab, seen, tc.guardrails);
      run.test_loss = corpus_loss(tr.config.model, tr.params, tr.vocab, sp.test, tc.guardrails);
      run.log = tr.log;
      result.runs.push_back(std::move(run));
    }
  }
  return result;
}

std::vector<Document> generate_lookup_corpus(int64_t n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("corpus size must be positive");
  static const char* kShapes[8] = {"circle", "square",  "hexagon", "cross",
                                   "star",   "crescent", "wedge",   "spiral"};
  static const char* kHues[10] = {"red",    "green", "blue", "amber", "teal",
                                  "violet", "gray",  "pink", "olive", "cyan"};
  static const char* kTags[8] = {"north", "south", "east", "west",
                                 "up",    "down",  "near", "far"};
  static const char* kLabels[3] = {"alpha", "beta", "gamma"};

  Rng rng(seed);
  int table[8][8];
  for (auto& row : table)
    for (int& cell : row) cell = static_cast<int>(rng.uniform_int(0, 2));

  std::vector<Document> corpus;
  corpus.reserve(static_cast<size_t>(n));
  for (int64_t k = 0; k < n; ++k) {
    const int64_t f1 = rng.uniform_int(0, 7);
    const int64_t f2 = rng.uniform_int(0, 7);
    Document::Object obj;
    obj.emplace_back("shape", kShapes[f1]);
    obj.emplace_back("grade", f2);
    obj.emplace_back("width", 0.25 * static_cast<double>(rng.uniform_int(0, 7)));
    obj.emplace_back("hue", kHues[rng.uniform_int(0, 9)]);
    obj.emplace_back("count", rng.uniform_int(0, 9));
    obj.emplace_back("flag", rng.uniform_int(0, 1) == 1);
    obj.emplace_back("tag", kTags[rng.uniform_int(0, 7)]);
    obj.emplace_back("size", rng.uniform_int(0, 5));
    obj.emplace_back("rank", rng.uniform_int(0, 11));
    obj.emplace_back("label", kLabels[table[f1][f2]]);
    corpus.emplace_back(std::move(obj));
  }
  return corpus;
}

namespace {

void csv_cell(std::ofstream& out, double v) {
  if (v >= 0) out << canonical_float(v);
}

}  // namespace

void write_experiment_report(const ExperimentResult& result, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const ExperimentRun& run : result.runs)
    write_metrics_csv(out_dir + "/" + run.arm + "-seed" + std::to_string(run.seed) + ".csv",
                      run.log);

  std::ofstream runs(out_dir + "/runs.csv", std::ios::binary);
  if (!runs) throw std::runtime_error("cannot write " + out_dir + "/runs.csv");
  runs << "arm,seed,steps,n_success,train_accuracy,test_accuracy,train_loss,test_loss\n";
  for (const ExperimentRun& r : result.runs) {
    runs << r.arm << ',' << r.seed << ',' << r.steps << ',';
    if (r.n_success >= 0) runs << r.n_success;
    runs << ',';
    csv_cell(runs, r.train_accuracy);
    runs << ',' << canonical_float(r.test_accuracy) << ',';
    csv_cell(runs, r.train_loss);
    runs << ',';
    csv_cell(runs, r.test_loss);
    runs << '\n';
  }
  if (!runs.flush()) throw std::runtime_error("failed writing " + out_dir + "/runs.csv");

  std::vector<std::string> arm_order;
  std::map<std::string, std::vector<const ExperimentRun*>> by_arm;
  for (const ExperimentRun& r : result.runs) {
    if (!by_arm.count(r.arm)) arm_order.push_back(r.arm);
    by_arm[r.arm].push_back(&r);
  }

  std::ofstream agg(out_dir + "/aggregate.csv", std::ios::binary);
  if (!agg) throw std::runtime_error("cannot write " + out_dir + "/aggregate.csv");
  agg << "arm,runs,converged,test_accuracy_mean,test_accuracy_std,"
         "train_accuracy_mean,train_accuracy_std,n_success_mean,n_success_std,"
         "loss_gap_mean,loss_gap_std\n";
  for (const std::string& arm : arm_order) {
    const std::vector<const ExperimentRun*>& group = by_arm[arm];
    std::vector<double> acc, train_acc, success, gap;
    int64_t converged = 0;
    for (const ExperimentRun* r : group) {
      acc.push_back(r->test_accuracy);
      if (r->train_accuracy >= 0) train_acc.push_back(r->train_accuracy);
      if (r->n_success >= 0) {
        success.push_back(static_cast<double>(r->n_success));
        ++converged;
      }
      if (r->train_loss >= 0 && r->test_loss >= 0)
        gap.push_back(r->test_loss - r->train_loss);
    }
    const Aggregate a_acc = aggregate(acc);
    agg << arm << ',' << group.size() << ',' << converged << ','
        << canonical_float(a_acc.mean) << ',' << canonical_float(a_acc.stddev) << ',';
    if (!train_acc.empty()) {
      const Aggregate a = aggregate(train_acc);
      agg << canonical_float(a.mean) << ',' << canonical_float(a.stddev) << ',';
    } else {
      agg << ",,";
    }
    if (!success.empty()) {
      const Aggregate a = aggregate(success);
      agg << canonical_float(a.mean) << ',' << canonical_float(a.stddev) << ',';
    } else {
      agg << ",,";
    }
    if (!gap.empty()) {
      const Aggregate a = aggregate(gap);
      agg << canonical_float(a.mean) << ',' << canonical_float(a.stddev);
    } else {
      agg << ',';
    }
    agg << '\n';
  }
  if (!agg.flush()) throw std::runtime_error("failed writing " + out_dir + "/aggregate.csv");
}

ExperimentResult run_experiment(const std::string& preset, const std::vector<uint64_t>& seeds,
                                const std::string& out_dir) {
  ExperimentResult result;
  if (preset == "dungeons-pe") {
    DungeonsPeOptions opt;
    if (!seeds.empty()) {
      opt.seeds = seeds;
      opt.baseline_seeds = seeds;
    }
    result = dungeons_pe(opt);
  } else if (preset == "guardrails") {
    GuardrailsOptions opt;
    if (!seeds.empty()) opt.seeds = seeds;
    result = guardrails_comparison(opt);
  } else if (preset == "upscaling") {
    UpscalingOptions opt;
    if (!seeds.empty()) opt.seeds = seeds;
    result = upscaling_sweep(opt);
  } else {
    throw std::invalid_argument("unknown experiment preset: " + preset);
  }
  if (!out_dir.empty()) write_experiment_report(result, out_dir);
  return result;
}

}  // namespace origami
