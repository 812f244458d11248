#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "origami/document.hpp"
#include "origami/inference.hpp"
#include "origami/model.hpp"
#include "origami/pipeline.hpp"
#include "origami/tokenizer.hpp"

namespace origami {

struct MetricsReport {
  int64_t total = 0;
  int64_t correct = 0;  // exact matches (set-equal for arrays)
  int64_t discarded = 0;
  double accuracy = 0.0;

  // Multi-label metrics over binary label indicators.
  int64_t tp = 0, fp = 0, fn = 0;
  double micro_precision = 0.0, micro_recall = 0.0, micro_f1 = 0.0;
  double samples_precision = 0.0, samples_recall = 0.0, samples_f1 = 0.0;
};

enum class TaskKind { Single, Multi };

MetricsReport score_single(int64_t total, int64_t correct, int64_t discarded);

struct LabelOutcome {
  std::vector<std::string> truth;       // serialized label set
  std::vector<std::string> prediction;  // empty when discarded
  bool discarded = false;
};

MetricsReport score_multi(const std::vector<LabelOutcome>& outcomes);

// Pre-encoded evaluation prompts for single-token targets: prefixes
// [Start, ...context..., Key(target)] batched once, scored with one forward
// pass per chunk. Built once, reused across evaluation points.
struct EvalSet {
  std::vector<Batch> chunks;
  std::vector<std::vector<int64_t>> rows;       // per chunk: logits row per doc
  std::vector<std::vector<int32_t>> truth_ids;  // -1 when the truth fell out of vocabulary
  std::vector<uint8_t> value_mask;              // admissible tokens in value position
  int64_t total = 0;
  int64_t discarded = 0;  // overlong or target key out of vocabulary
};

// Requires every document to hold a primitive value under target_key.
EvalSet build_eval_set(const std::vector<Document>& docs, const Vocabulary& vocab,
                       int64_t max_len, const std::string& target_key, int64_t chunk_size = 128);

struct EvalCounts {
  int64_t total = 0;
  int64_t correct = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

EvalCounts eval_accuracy(const ModelConfig& cfg, const Parameters<float>& params,
                         const EvalSet& set);

// Mean next-token NLL over every counted position of the corpus, with the
// same masking the training loss uses. Overlong documents are skipped.
double corpus_loss(const ModelConfig& cfg, const Parameters<float>& params,
                   const Vocabulary& vocab, const std::vector<Document>& docs,
                   bool guardrails, int64_t chunk_size = 128);

// Full evaluation: fast batched path when the task is Single and all truths
// are primitives, per-document constrained decoding otherwise. Discarded
// instances (overlong, OOV target key) score incorrect.
MetricsReport evaluate(const ModelConfig& cfg, const Parameters<float>& params,
                       const Vocabulary& vocab, const std::vector<Document>& docs,
                       const std::string& target_key, TaskKind task,
                       const GenerateOptions& options = {});

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n-1)
};

Aggregate aggregate(const std::vector<double>& values);

}  // namespace origami
