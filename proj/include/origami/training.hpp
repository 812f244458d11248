#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "origami/document.hpp"
#include "origami/metrics.hpp"
#include "origami/model.hpp"
#include "origami/tokenizer.hpp"

namespace origami {

struct TrainConfig {
  ModelConfig model;  // model.v is always derived from the vocabulary;
                      // model.n <= 0 means fit to the longest training doc
  int64_t batch_size = 100;
  double lr = 1e-3;
  int64_t total_batches = 1000;
  bool guardrails = true;
  int64_t eval_every = 100;

  // Data augmentation: u materialized shuffles per training document.
  // online_shuffle instead re-permutes keys freshly every epoch.
  int64_t upscale = 1;
  bool shuffle = true;
  bool online_shuffle = false;
  std::optional<std::string> pin_last;

  uint64_t seed = 0;
  std::string target_key;  // empty: no held-out evaluation
  double stop_at_test_accuracy = -1.0;  // >= 0 enables early stopping
  std::optional<int32_t> vocab_max;
  double max_grad_norm = 0.0;  // > 0 enables global-norm gradient clipping

  void validate() const;
};

struct MetricsRow {
  int64_t step = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  bool has_eval = false;
};

struct TrainResult {
  TrainConfig config;  // with model.v / model.n / model.seed resolved
  Parameters<float> params;
  Vocabulary vocab;
  std::vector<MetricsRow> log;  // one row per optimizer step taken
  int64_t n_success = -1;  // first step whose evaluation scored 1.0, -1: never
  double final_test_accuracy = 0.0;
  int64_t discarded_train = 0;  // overlong after upscaling
  int64_t discarded_test = 0;   // overlong or target key out of vocabulary
};

// Builds the vocabulary from the raw training documents, materializes the
// upscaled corpus, and runs `total_batches` Adam steps, evaluating held-out
// accuracy by masked greedy decoding every eval_every steps (and on the
// final step). Fully deterministic given the config.
TrainResult train(const std::vector<Document>& train_docs,
                  const std::vector<Document>& test_docs, const TrainConfig& config);

// The exact training corpus train() encodes: the upscaled shuffles in
// materialized mode, the length-filtered raw documents in online mode
// (whose per-epoch orders are drawn inside the batcher).
std::vector<Document> materialized_training_corpus(const std::vector<Document>& train_docs,
                                                   const TrainConfig& config);

// "step,train_loss,test_accuracy" with the accuracy column blank on rows
// without an evaluation.
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& log);

}  // namespace origami
