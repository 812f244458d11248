#include "origami/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "origami/automaton.hpp"

namespace origami {

MetricsReport score_single(int64_t total, int64_t correct, int64_t discarded) {
  MetricsReport r;
  r.total = total;
  r.correct = correct;
  r.discarded = discarded;
  r.accuracy = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  return r;
}

MetricsReport score_multi(const std::vector<LabelOutcome>& outcomes) {
  MetricsReport r;
  r.total = static_cast<int64_t>(outcomes.size());
  double sp = 0, sr = 0, sf = 0;
  for (const LabelOutcome& o : outcomes) {
    const std::set<std::string> t(o.truth.begin(), o.truth.end());
    const std::set<std::string> p(o.discarded ? std::set<std::string>{}
                                              : std::set<std::string>(o.prediction.begin(),
                                                                      o.prediction.end()));
    if (o.discarded) ++r.discarded;
    int64_t tp_i = 0;
    for (const auto& label : p) tp_i += t.count(label);
    const auto fp_i = static_cast<int64_t>(p.size()) - tp_i;
    const auto fn_i = static_cast<int64_t>(t.size()) - tp_i;
    r.tp += tp_i;
    r.fp += fp_i;
    r.fn += fn_i;
    if (!o.discarded && t == p) ++r.correct;
    const double pi = p.empty() ? 0.0 : static_cast<double>(tp_i) / static_cast<double>(p.size());
    const double ri = t.empty() ? (p.empty() ? 1.0 : 0.0)
                                : static_cast<double>(tp_i) / static_cast<double>(t.size());
    sp += pi;
    sr += ri;
    sf += (pi + ri) > 0 ? 2 * pi * ri / (pi + ri) : 0.0;
  }
  r.accuracy = r.total == 0 ? 0.0 : static_cast<double>(r.correct) / static_cast<double>(r.total);
  r.micro_precision = (r.tp + r.fp) == 0 ? 0.0 : static_cast<double>(r.tp) / (r.tp + r.fp);
  r.micro_recall = (r.tp + r.fn) == 0 ? 0.0 : static_cast<double>(r.tp) / (r.tp + r.fn);
  const double pr = r.micro_precision + r.micro_recall;
  r.micro_f1 = pr == 0 ? 0.0 : 2 * r.micro_precision * r.micro_recall / pr;
  if (r.total > 0) {
    r.samples_precision = sp / static_cast<double>(r.total);
    r.samples_recall = sr / static_cast<double>(r.total);
    r.samples_f1 = sf / static_cast<double>(r.total);
  }
  return r;
}

EvalSet build_eval_set(const std::vector<Document>& docs, const Vocabulary& vocab,
                       int64_t max_len, const std::string& target_key, int64_t chunk_size) {
  if (chunk_size < 1) throw std::invalid_argument("chunk_size must be positive");
  EvalSet set;
  set.total = static_cast<int64_t>(docs.size());
  set.value_mask =
      class_masks(vocab)[static_cast<size_t>(MaskClass::ExpectValue)];

  const Token target_tok = Token::key(target_key);
  const bool key_known = vocab.id_of(target_tok) >= 0;

  struct Item {
    EncodedDoc enc;
    int32_t truth_id;
  };
  std::vector<Item> items;
  for (const Document& doc : docs) {
    const Document* truth = doc.find(target_key);
    if (!truth) throw std::invalid_argument("target key '" + target_key + "' missing from document");
    if (!truth->is_primitive())
      throw std::invalid_argument("eval set requires primitive values under '" + target_key + "'");
    if (!key_known) {
      ++set.discarded;
      continue;
    }

    // Same discard policy as training: the whole document must fit.
    if (static_cast<int64_t>(tokenize(doc).size()) > max_len) {
      ++set.discarded;
      continue;
    }

    Document::Object context;
    for (const auto& [k, v] : doc.as_object())
      if (k != target_key) context.emplace_back(k, v);
    std::vector<Token> prefix = tokenize(Document(std::move(context)));
    prefix.pop_back();
    prefix.push_back(target_tok);

    Item item;
    item.truth_id = vocab.id_of(Token::value(*truth));
    EncodedDoc& enc = item.enc;
    Automaton pda;
    for (const Token& t : prefix) {
      pda.step(t);
      const int32_t id = vocab.id_of(t);
      enc.ids.push_back(id >= 0 ? id : Vocabulary::kUnknownId);
      enc.mask_class.push_back(static_cast<uint8_t>(pda.mask_class()));
      enc.trace_offsets.push_back(static_cast<int64_t>(enc.trace_symbols.size()));
      for (const StackSymbol& s : pda.recorded())
        enc.trace_symbols.push_back(symbol_to_id(s, vocab));
    }
    enc.trace_offsets.push_back(static_cast<int64_t>(enc.trace_symbols.size()));
    items.push_back(std::move(item));
  }

  // Longest-first packing keeps padding small within a chunk.
  std::vector<size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return items[a].enc.length() > items[b].enc.length();
  });

  for (size_t at = 0; at < order.size(); at += static_cast<size_t>(chunk_size)) {
    const size_t hi = std::min(order.size(), at + static_cast<size_t>(chunk_size));
    std::vector<const EncodedDoc*> ptrs;
    std::vector<int64_t> rows;
    std::vector<int32_t> truths;
    for (size_t i = at; i < hi; ++i) {
      ptrs.push_back(&items[order[i]].enc);
      truths.push_back(items[order[i]].truth_id);
    }
    Batch batch = assemble_batch(ptrs, true);
    for (size_t i = at; i < hi; ++i)
      rows.push_back(static_cast<int64_t>(i - at) * batch.n +
                     static_cast<int64_t>(items[order[i]].enc.length()) - 1);
    set.chunks.push_back(std::move(batch));
    set.rows.push_back(std::move(rows));
    set.truth_ids.push_back(std::move(truths));
  }
  return set;
}

EvalCounts eval_accuracy(const ModelConfig& cfg, const Parameters<float>& params,
                         const EvalSet& set) {
  EvalCounts counts;
  counts.total = set.total;
  for (size_t c = 0; c < set.chunks.size(); ++c) {
    const RowMatrix<float> logits = forward<float>(cfg, params, set.chunks[c]);
    for (size_t i = 0; i < set.rows[c].size(); ++i) {
      const auto row = logits.row(set.rows[c][i]);
      int32_t best = -1;
      float best_v = 0;
      for (Eigen::Index j = 0; j < row.size(); ++j) {
        if (!set.value_mask[static_cast<size_t>(j)]) continue;
        if (best < 0 || row(j) > best_v) {
          best_v = row(j);
          best = static_cast<int32_t>(j);
        }
      }
      if (best == set.truth_ids[c][i]) ++counts.correct;
    }
  }
  return counts;
}

double corpus_loss(const ModelConfig& cfg, const Parameters<float>& params,
                   const Vocabulary& vocab, const std::vector<Document>& docs,
                   bool guardrails, int64_t chunk_size) {
  if (chunk_size < 1) throw std::invalid_argument("chunk_size must be positive");
  const MaskSet masks = class_masks(vocab);
  EncodeCorpusResult enc = encode_corpus(docs, vocab, static_cast<size_t>(cfg.n));

  // Pack similar lengths together to keep padding overhead low.
  std::vector<const EncodedDoc*> order;
  order.reserve(enc.docs.size());
  for (const EncodedDoc& d : enc.docs) order.push_back(&d);
  std::stable_sort(order.begin(), order.end(),
                   [](const EncodedDoc* a, const EncodedDoc* b) {
                     return a->length() > b->length();
                   });

  double weighted = 0.0;
  int64_t positions = 0;
  for (size_t at = 0; at < order.size(); at += static_cast<size_t>(chunk_size)) {
    const size_t stop = std::min(order.size(), at + static_cast<size_t>(chunk_size));
    const std::vector<const EncodedDoc*> span(order.begin() + at, order.begin() + stop);
    const Batch batch = assemble_batch(span, guardrails);
    const LossResult<float> r =
        loss_and_gradients<float>(cfg, params, batch, masks, nullptr, nullptr);
    weighted += static_cast<double>(r.loss) * static_cast<double>(r.positions);
    positions += r.positions;
  }
  return positions == 0 ? 0.0 : weighted / static_cast<double>(positions);
}

MetricsReport evaluate(const ModelConfig& cfg, const Parameters<float>& params,
                       const Vocabulary& vocab, const std::vector<Document>& docs,
                       const std::string& target_key, TaskKind task,
                       const GenerateOptions& options) {
  bool all_primitive = true;
  for (const Document& doc : docs) {
    const Document* truth = doc.find(target_key);
    if (!truth) throw std::invalid_argument("target key '" + target_key + "' missing from document");
    if (!truth->is_primitive()) all_primitive = false;
  }

  if (vocab.id_of(Token::key(target_key)) < 0) {
    // Unseen key: nothing can be predicted, every instance counts against accuracy.
    if (task == TaskKind::Single)
      return score_single(static_cast<int64_t>(docs.size()), 0,
                          static_cast<int64_t>(docs.size()));
    std::vector<LabelOutcome> outcomes(docs.size());
    for (size_t i = 0; i < docs.size(); ++i) {
      const Document* truth = docs[i].find(target_key);
      if (truth->is_array())
        for (const Document& d : truth->as_array())
          outcomes[i].truth.push_back(serialize_json(d));
      else
        outcomes[i].truth.push_back(serialize_json(*truth));
      outcomes[i].discarded = true;
    }
    return score_multi(outcomes);
  }

  if (task == TaskKind::Single && all_primitive && options.greedy) {
    const EvalSet set = build_eval_set(docs, vocab, cfg.n, target_key);
    const EvalCounts counts = eval_accuracy(cfg, params, set);
    return score_single(counts.total, counts.correct, set.discarded);
  }

  if (task == TaskKind::Single) {
    int64_t correct = 0, discarded = 0;
    for (const Document& doc : docs) {
      ClassifyResult r;
      try {
        r = classify(cfg, params, vocab, doc, target_key, options);
      } catch (const std::out_of_range&) {
        r.discarded = true;  // generation ran past the model's maximum length
      } catch (const std::runtime_error&) {
        r.discarded = true;  // max_new_tokens exhausted
      }
      if (r.discarded) ++discarded;
      if (r.correct) ++correct;
    }
    return score_single(static_cast<int64_t>(docs.size()), correct, discarded);
  }

  std::vector<LabelOutcome> outcomes;
  outcomes.reserve(docs.size());
  for (const Document& doc : docs) {
    LabelOutcome o;
    const Document* truth = doc.find(target_key);
    if (truth->is_array())
      for (const Document& d : truth->as_array()) o.truth.push_back(serialize_json(d));
    else
      o.truth.push_back(serialize_json(*truth));
    ClassifyResult r;
    try {
      r = classify(cfg, params, vocab, doc, target_key, options);
    } catch (const std::out_of_range&) {
      r.discarded = true;
    } catch (const std::runtime_error&) {
      r.discarded = true;
    }
    if (r.discarded) {
      o.discarded = true;
    } else if (r.prediction.is_array()) {
      for (const Document& d : r.prediction.as_array()) o.prediction.push_back(serialize_json(d));
    } else {
      o.prediction.push_back(serialize_json(r.prediction));
    }
    outcomes.push_back(std::move(o));
  }
  return score_multi(outcomes);
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  if (values.empty()) return a;
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
  if (values.size() < 2) return a;
  double ss = 0;
  for (double v : values) ss += (v - a.mean) * (v - a.mean);
  a.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return a;
}

}  // namespace origami
