#include "origami/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace origami {

namespace {

Document shuffle_rec(const Document& doc, Rng& rng) {
  switch (doc.kind()) {
    case Document::Kind::Object: {
      Document::Object pairs = doc.as_object();
      rng.shuffle(pairs);
      for (auto& [k, v] : pairs) v = shuffle_rec(v, rng);
      return Document{std::move(pairs)};
    }
    case Document::Kind::Array: {
      Document::Array out = doc.as_array();
      for (auto& el : out) el = shuffle_rec(el, rng);
      return Document{std::move(out)};
    }
    default:
      return doc;
  }
}

}  // namespace

Document shuffle_document(const Document& doc, uint64_t seed,
                          const std::optional<std::string>& pin_last) {
  if (!doc.is_object()) throw std::invalid_argument("can only shuffle an object document");
  Rng rng(seed);
  Document out = shuffle_rec(doc, rng);
  if (pin_last) {
    auto& pairs = out.as_object();
    auto it = std::find_if(pairs.begin(), pairs.end(),
                           [&](const auto& p) { return p.first == *pin_last; });
    if (it != pairs.end()) std::rotate(it, it + 1, pairs.end());
  }
  return out;
}

std::vector<Document> upscale(const std::vector<Document>& corpus, int64_t u, uint64_t seed,
                              bool shuffle, const std::optional<std::string>& pin_last) {
  if (u < 1) throw std::invalid_argument("upscaling factor must be >= 1");
  std::vector<Document> out;
  out.reserve(corpus.size() * static_cast<size_t>(u));
  uint64_t instance = 0;
  for (int64_t rep = 0; rep < u; ++rep)
    for (const Document& doc : corpus) {
      out.push_back(shuffle ? shuffle_document(doc, mix_seed(seed, instance), pin_last) : doc);
      ++instance;
    }
  return out;
}

DatasetSplit split(const std::vector<Document>& corpus, double fraction, uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("fraction must be in (0, 1)");
  std::vector<size_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto cut = static_cast<size_t>(
      std::llround(fraction * static_cast<double>(corpus.size())));
  if (cut == 0 || cut == corpus.size()) throw std::invalid_argument("split leaves one side empty");
  DatasetSplit result;
  result.seed = seed;
  result.fraction = fraction;
  result.train.reserve(cut);
  result.test.reserve(corpus.size() - cut);
  for (size_t i = 0; i < corpus.size(); ++i)
    (i < cut ? result.train : result.test).push_back(corpus[order[i]]);
  return result;
}

EncodedDoc encode_document(const Document& doc, const Vocabulary& vocab) {
  const std::vector<Token> tokens = tokenize(doc);
  EncodedDoc out;
  out.ids.reserve(tokens.size());
  out.mask_class.reserve(tokens.size());
  out.trace_offsets.reserve(tokens.size() + 1);
  out.trace_offsets.push_back(0);
  Automaton a;
  for (size_t i = 0; i < tokens.size(); ++i) {
    const Token& t = tokens[i];
    int32_t id = vocab.id_of(t);
    if (id < 0) {
      id = Vocabulary::kUnknownId;
      if (t.is_key() && out.loss_cut == SIZE_MAX) out.loss_cut = i;
    }
    out.ids.push_back(id);
    a.step(t);
    out.mask_class.push_back(static_cast<uint8_t>(a.mask_class()));
    for (const StackSymbol& s : a.recorded()) out.trace_symbols.push_back(symbol_to_id(s, vocab));
    out.trace_offsets.push_back(static_cast<int64_t>(out.trace_symbols.size()));
  }
  return out;
}

EncodeCorpusResult encode_corpus(const std::vector<Document>& corpus, const Vocabulary& vocab,
                                 std::optional<size_t> max_len) {
  EncodeCorpusResult result;
  result.docs.reserve(corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    EncodedDoc enc = encode_document(corpus[i], vocab);
    if (max_len && enc.length() > *max_len) {
      ++result.discarded;
      continue;
    }
    result.docs.push_back(std::move(enc));
    result.kept_indices.push_back(i);
  }
  return result;
}

Batch assemble_batch(const std::vector<const EncodedDoc*>& docs, bool guardrails) {
  Batch batch;
  batch.b = static_cast<int64_t>(docs.size());
  batch.guardrails = guardrails;
  for (const EncodedDoc* d : docs)
    batch.n = std::max(batch.n, static_cast<int64_t>(d->length()));
  const size_t total = static_cast<size_t>(batch.b * batch.n);
  batch.ids.assign(total, Vocabulary::kPadId);
  batch.targets.assign(total, Vocabulary::kPadId);
  batch.loss_mask.assign(total, 0);
  batch.mask_class.assign(total, static_cast<uint8_t>(MaskClass::AcceptedPad));
  batch.trace_offsets.assign(total + 1, 0);

  for (int64_t r = 0; r < batch.b; ++r) {
    const EncodedDoc& d = *docs[static_cast<size_t>(r)];
    const auto len = static_cast<int64_t>(d.length());
    const size_t base = static_cast<size_t>(r * batch.n);
    for (int64_t i = 0; i < len; ++i) {
      batch.ids[base + static_cast<size_t>(i)] = d.ids[static_cast<size_t>(i)];
      batch.mask_class[base + static_cast<size_t>(i)] = d.mask_class[static_cast<size_t>(i)];
      if (i + 1 < len) {
        batch.targets[base + static_cast<size_t>(i)] = d.ids[static_cast<size_t>(i) + 1];
        if (static_cast<size_t>(i) + 1 < d.loss_cut) batch.loss_mask[base + static_cast<size_t>(i)] = 1;
      }
    }
  }
  // Second pass for the CSR trace so offsets stay monotone across rows.
  for (int64_t r = 0; r < batch.b; ++r) {
    const EncodedDoc& d = *docs[static_cast<size_t>(r)];
    const auto len = static_cast<int64_t>(d.length());
    const size_t base = static_cast<size_t>(r * batch.n);
    for (int64_t i = 0; i < batch.n; ++i) {
      const size_t p = base + static_cast<size_t>(i);
      if (i < len) {
        const auto lo = static_cast<size_t>(d.trace_offsets[static_cast<size_t>(i)]);
        const auto hi = static_cast<size_t>(d.trace_offsets[static_cast<size_t>(i) + 1]);
        batch.trace_symbols.insert(batch.trace_symbols.end(), d.trace_symbols.begin() + lo,
                                   d.trace_symbols.begin() + hi);
      }
      batch.trace_offsets[p + 1] = static_cast<int64_t>(batch.trace_symbols.size());
    }
  }
  return batch;
}

Batcher::Batcher(std::vector<EncodedDoc> docs, int64_t batch_size, bool guardrails, uint64_t seed)
    : docs_(std::move(docs)), batch_size_(batch_size), guardrails_(guardrails), rng_(seed) {
  if (docs_.empty()) throw std::invalid_argument("batcher needs a non-empty corpus");
  if (batch_size_ < 1) throw std::invalid_argument("batch size must be >= 1");
}

Batcher::Batcher(std::vector<Document> docs, const Vocabulary& vocab, int64_t batch_size,
                 bool guardrails, uint64_t seed, const std::optional<std::string>& pin_last)
    : raw_docs_(std::move(docs)),
      vocab_(&vocab),
      pin_last_(pin_last),
      batch_size_(batch_size),
      guardrails_(guardrails),
      rng_(seed) {
  if (raw_docs_.empty()) throw std::invalid_argument("batcher needs a non-empty corpus");
  if (batch_size_ < 1) throw std::invalid_argument("batch size must be >= 1");
}

size_t Batcher::corpus_size() const {
  return raw_docs_.empty() ? docs_.size() : raw_docs_.size();
}

size_t Batcher::draw_index() {
  if (cursor_ >= order_.size()) {
    order_.resize(corpus_size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    rng_.shuffle(order_);
    cursor_ = 0;
  }
  return order_[cursor_++];
}

Batch Batcher::next() {
  std::vector<EncodedDoc> fresh;
  std::vector<const EncodedDoc*> chosen;
  chosen.reserve(static_cast<size_t>(batch_size_));
  if (raw_docs_.empty()) {
    for (int64_t i = 0; i < batch_size_; ++i) chosen.push_back(&docs_[draw_index()]);
  } else {
    fresh.reserve(static_cast<size_t>(batch_size_));
    for (int64_t i = 0; i < batch_size_; ++i) {
      const Document shuffled =
          shuffle_document(raw_docs_[draw_index()], rng_.next_u64(), pin_last_);
      fresh.push_back(encode_document(shuffled, *vocab_));
    }
    for (const EncodedDoc& d : fresh) chosen.push_back(&d);
  }
  ++draws_;
  return assemble_batch(chosen, guardrails_);
}

std::vector<Batch> make_batches(const std::vector<Document>& corpus, const Vocabulary& vocab,
                                std::optional<size_t> max_len, int64_t batch_size,
                                bool guardrails, uint64_t seed) {
  EncodeCorpusResult enc = encode_corpus(corpus, vocab, max_len);
  std::vector<size_t> order(enc.docs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<Batch> out;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    std::vector<const EncodedDoc*> chosen;
    const size_t stop = std::min(order.size(), start + static_cast<size_t>(batch_size));
    for (size_t i = start; i < stop; ++i) chosen.push_back(&enc.docs[order[i]]);
    out.push_back(assemble_batch(chosen, guardrails));
  }
  return out;
}

}  // namespace origami
