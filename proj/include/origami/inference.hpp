#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "origami/automaton.hpp"
#include "origami/document.hpp"
#include "origami/model.hpp"
#include "origami/tokenizer.hpp"

namespace origami {

struct GenerateOptions {
  bool greedy = true;  // argmax over the masked distribution, ties to lowest id
  double temperature = 1.0;
  uint64_t seed = 0;
  bool no_duplicate_keys = true;
  size_t max_new_tokens = 256;
};

struct Prompt {
  Document context;  // the document with the target key removed
  std::string target_key;
  GenerateOptions options;
};

// Appends the target key to the context pairs and decodes its value under
// validity masks: one token for a primitive, n recursive element values for
// an n-array, balanced braces for a nested object. Every output is
// grammatical by construction.
Document predict_field(const ModelConfig& cfg, const Parameters<float>& params,
                       const Vocabulary& vocab, const Prompt& prompt);

// Extends a valid sequence prefix until End and returns the detokenized
// document. A prefix that is already accepted detokenizes as-is.
Document autocomplete(const ModelConfig& cfg, const Parameters<float>& params,
                      const Vocabulary& vocab, const std::vector<Token>& prefix,
                      const GenerateOptions& options = {});

struct ClassifyResult {
  Document truth;
  Document prediction;  // Null when the instance was discarded
  bool correct = false;
  bool discarded = false;  // document overlong for the model; scored incorrect
};

// Removes the ground-truth value under target_key, predicts it, and compares:
// exact equality for single values, set comparison for array labels.
ClassifyResult classify(const ModelConfig& cfg, const Parameters<float>& params,
                        const Vocabulary& vocab, const Document& doc,
                        const std::string& target_key, const GenerateOptions& options = {});

// Array labels compare as sets of serialized elements; duplicates in the
// prediction are ignored.
bool set_equal_labels(const Document& truth, const Document& prediction);

}  // namespace origami
