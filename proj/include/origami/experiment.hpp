#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "origami/document.hpp"
#include "origami/training.hpp"

namespace origami {

struct ExperimentRun {
  std::string arm;
  uint64_t seed = 0;
  int64_t steps = 0;           // optimizer steps actually taken
  int64_t n_success = -1;      // first step evaluating at accuracy 1.0
  double train_accuracy = -1;  // negative: not measured for this preset
  double test_accuracy = 0;
  double train_loss = -1;
  double test_loss = -1;
  std::vector<MetricsRow> log;
};

struct ExperimentResult {
  std::string preset;
  std::vector<ExperimentRun> runs;
};

// Position-encoding ablation on hard dungeons (doors and keys shuffled):
// every encoding fits the training split, only the stack-trace encoding
// generalizes. Train accuracy is measured on the materialized corpus the
// model actually saw.
struct DungeonsPeOptions {
  int64_t instances = 10000;
  std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};           // stack-trace arm
  std::vector<uint64_t> baseline_seeds = {0, 1, 2, 3, 4};  // per baseline
  int64_t total_batches = 3000;
  int64_t batch_size = 100;
  int64_t eval_every = 100;
  // The generalizing arm may stop once test accuracy sustains this level;
  // baselines always consume the full budget. Negative disables.
  double early_stop = 0.995;
};
ExperimentResult dungeons_pe(const DungeonsPeOptions& opt);

// Convergence-speed comparison on easy dungeons: identical configs except
// for grammar masking of the training loss. Both arms stop at their first
// perfect evaluation; runs that never get there report n_success -1.
struct GuardrailsOptions {
  int64_t instances = 10000;
  std::vector<uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  int64_t max_batches = 1500;
  int64_t batch_size = 100;
  int64_t eval_every = 10;
};
ExperimentResult guardrails_comparison(const GuardrailsOptions& opt);

// Shuffle-augmentation sweep on the synthetic lookup corpus: more shuffled
// copies per document shrink the generalization gap within a fixed step
// budget. The "u1-ordered" arm trains on unshuffled documents.
struct UpscalingOptions {
  int64_t instances = 700;
  std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<int64_t> factors = {1, 5, 100, 1000};
  bool include_ordered = true;
  int64_t total_batches = 3000;
  int64_t batch_size = 50;
  int64_t eval_every = 100;
};
ExperimentResult upscaling_sweep(const UpscalingOptions& opt);

// Flat classification documents: two feature fields index a seeded 8x8
// lookup table of three labels, the remaining fields are uninformative
// noise in mixed types. The label key comes last in insertion order.
std::vector<Document> generate_lookup_corpus(int64_t n, uint64_t seed);

// Per-run step logs plus runs.csv and aggregate.csv (mean, sample std)
// under out_dir, created if missing.
void write_experiment_report(const ExperimentResult& result, const std::string& out_dir);

// Named preset at full scale; a non-empty seed list overrides the default
// seeds of every arm. Writes the report to out_dir when non-empty.
ExperimentResult run_experiment(const std::string& preset, const std::vector<uint64_t>& seeds,
                                const std::string& out_dir);

}  // namespace origami
