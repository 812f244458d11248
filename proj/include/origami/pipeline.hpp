#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "origami/automaton.hpp"
#include "origami/document.hpp"
#include "origami/rng.hpp"
#include "origami/tokenizer.hpp"

namespace origami {

struct DatasetSplit {
  std::vector<Document> train;
  std::vector<Document> test;
  uint64_t seed = 0;
  double fraction = 0;
};

// Uniformly permutes the key/value pairs of every object level, recursing
// into values; array element order is preserved. pin_last keeps that
// top-level key in final position (sensitivity flag, off by default).
Document shuffle_document(const Document& doc, uint64_t seed,
                          const std::optional<std::string>& pin_last = std::nullopt);

// u independent shuffles per input document, materialized. shuffle=false
// (only meaningful with u=1) passes documents through unchanged: the
// ordered baseline.
std::vector<Document> upscale(const std::vector<Document>& corpus, int64_t u, uint64_t seed,
                              bool shuffle = true,
                              const std::optional<std::string>& pin_last = std::nullopt);

// Seeded uniform shuffle, then prefix/suffix split at round(fraction*size).
DatasetSplit split(const std::vector<Document>& corpus, double fraction, uint64_t seed);

// One tokenized document, unpadded, with everything the model consumes:
// vocabulary ids, the automaton state class after each token (selects the
// admissible-token mask for the next prediction), the recorded-stack symbol
// rows (CSR), and the first position holding Unknown where a key belongs
// (loss is cut there: the suffix is uninterpretable).
struct EncodedDoc {
  std::vector<int32_t> ids;
  std::vector<uint8_t> mask_class;
  std::vector<int64_t> trace_offsets;  // ids.size()+1
  std::vector<int32_t> trace_symbols;
  size_t loss_cut = SIZE_MAX;

  size_t length() const { return ids.size(); }
};

EncodedDoc encode_document(const Document& doc, const Vocabulary& vocab);

struct EncodeCorpusResult {
  std::vector<EncodedDoc> docs;
  std::vector<size_t> kept_indices;  // into the input corpus
  size_t discarded = 0;              // overlong
};

// Encodes every document, dropping those longer than max_len when given.
EncodeCorpusResult encode_corpus(const std::vector<Document>& corpus, const Vocabulary& vocab,
                                 std::optional<size_t> max_len = std::nullopt);

// Dense b-row training batch, right-padded to the longest member.
struct Batch {
  int64_t b = 0;
  int64_t n = 0;
  std::vector<int32_t> ids;        // b*n
  std::vector<int32_t> targets;    // b*n, ids shifted left by one, Pad at the end
  std::vector<uint8_t> loss_mask;  // b*n, off on Pad targets and beyond loss_cut
  std::vector<uint8_t> mask_class; // b*n
  std::vector<int64_t> trace_offsets;  // b*n+1
  std::vector<int32_t> trace_symbols;
  bool guardrails = true;

  int32_t id(int64_t r, int64_t i) const { return ids[static_cast<size_t>(r * n + i)]; }
};

Batch assemble_batch(const std::vector<const EncodedDoc*>& docs, bool guardrails);

// Deterministic batch stream: epoch-reshuffled document order, fixed batch
// size (wrapping into the next epoch rather than emitting short batches).
// With online_shuffle the documents are re-permuted and re-encoded at every
// draw instead of being served from the materialized encoding.
class Batcher {
 public:
  Batcher(std::vector<EncodedDoc> docs, int64_t batch_size, bool guardrails, uint64_t seed);
  // Online-shuffle variant; keeps the raw documents around.
  Batcher(std::vector<Document> docs, const Vocabulary& vocab, int64_t batch_size,
          bool guardrails, uint64_t seed,
          const std::optional<std::string>& pin_last = std::nullopt);

  Batch next();
  int64_t batch_size() const { return batch_size_; }
  size_t corpus_size() const;

 private:
  size_t draw_index();

  std::vector<EncodedDoc> docs_;
  std::vector<Document> raw_docs_;  // online_shuffle only
  const Vocabulary* vocab_ = nullptr;
  std::optional<std::string> pin_last_;
  int64_t batch_size_;
  bool guardrails_;
  Rng rng_;
  std::vector<size_t> order_;
  size_t cursor_ = 0;
  uint64_t draws_ = 0;
};

// One pass over the corpus in deterministic seeded order (convenience for
// tests and small jobs; training uses Batcher).
std::vector<Batch> make_batches(const std::vector<Document>& corpus, const Vocabulary& vocab,
                                std::optional<size_t> max_len, int64_t batch_size,
                                bool guardrails, uint64_t seed);

}  // namespace origami
