#include "origami/inference.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <stdexcept>

#include "origami/rng.hpp"

namespace origami {

namespace {

int32_t vocab_id(const Vocabulary& vocab, const Token& t) {
  const int32_t id = vocab.id_of(t);
  return id >= 0 ? id : Vocabulary::kUnknownId;
}

std::vector<int32_t> trace_ids(const Automaton& pda, const Vocabulary& vocab) {
  std::vector<int32_t> ids;
  ids.reserve(pda.recorded().size());
  for (const StackSymbol& s : pda.recorded()) ids.push_back(symbol_to_id(s, vocab));
  return ids;
}

int32_t pick_token(const RowVector<float>& logits, const std::vector<uint8_t>& mask,
                   const GenerateOptions& opts, Rng& rng) {
  RowVector<float> scaled = logits;
  if (!opts.greedy && opts.temperature != 1.0) {
    if (opts.temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
    scaled /= static_cast<float>(opts.temperature);
  }
  const RowVector<float> probs = masked_distribution<float>(scaled, mask);
  if (opts.greedy) {
    int32_t best = -1;
    float best_p = -1.0f;
    for (Eigen::Index j = 0; j < probs.size(); ++j)
      if (mask[static_cast<size_t>(j)] && probs(j) > best_p) {
        best_p = probs(j);
        best = static_cast<int32_t>(j);
      }
    return best;
  }
  const double u = rng.uniform_real();
  double cum = 0;
  int32_t last_valid = -1;
  for (Eigen::Index j = 0; j < probs.size(); ++j) {
    if (!mask[static_cast<size_t>(j)]) continue;
    last_valid = static_cast<int32_t>(j);
    cum += static_cast<double>(probs(j));
    if (u < cum) return last_valid;
  }
  return last_valid;  // rounding left u just above the final cumulative sum
}

// Feeds the prefix, then decodes masked tokens until `done(pda)`. Returns the
// generated suffix only.
std::vector<Token> decode_until(const ModelConfig& cfg, const Parameters<float>& params,
                                const Vocabulary& vocab, const std::vector<Token>& prefix,
                                const GenerateOptions& opts,
                                const std::function<bool(const Automaton&)>& done) {
  Automaton pda;
  InferenceSession<float> session(cfg, params);
  const DecodeOptions dopts{opts.no_duplicate_keys};
  Rng rng(opts.seed);

  if (prefix.empty()) throw std::invalid_argument("decoding needs a non-empty prefix");
  RowVector<float> logits;
  for (const Token& t : prefix) {
    pda.step(t);
    logits = session.feed(vocab_id(vocab, t), trace_ids(pda, vocab));
  }

  std::vector<Token> out;
  while (!done(pda)) {
    if (out.size() >= opts.max_new_tokens)
      throw std::runtime_error("generation exceeded max_new_tokens (" +
                               std::to_string(opts.max_new_tokens) + ")");
    const std::vector<uint8_t> mask = pda.valid_next(vocab, dopts);
    const int32_t id = pick_token(logits, mask, opts, rng);
    const Token& t = vocab.token(id);
    pda.step(t);
    out.push_back(t);
    if (done(pda)) break;
    logits = session.feed(id, trace_ids(pda, vocab));
  }
  return out;
}

}  // namespace

Document predict_field(const ModelConfig& cfg, const Parameters<float>& params,
                       const Vocabulary& vocab, const Prompt& prompt) {
  if (!prompt.context.is_object())
    throw std::invalid_argument("prompt context must be an object");
  if (prompt.context.find(prompt.target_key) != nullptr)
    throw std::invalid_argument("target key '" + prompt.target_key +
                                "' already present in the prompt context");
  const Token key_tok = Token::key(prompt.target_key);
  if (vocab.id_of(key_tok) < 0)
    throw std::invalid_argument("target key '" + prompt.target_key + "' not in the vocabulary");

  std::vector<Token> prefix = tokenize(prompt.context);
  prefix.pop_back();  // End reopens as ExpectKeyOrClose
  prefix.push_back(key_tok);

  const auto value_done = [](const Automaton& pda) {
    return pda.depth() == 1 && pda.control() == Automaton::Control::ExpectKeyOrClose;
  };
  std::vector<Token> value =
      decode_until(cfg, params, vocab, prefix, prompt.options, value_done);

  std::vector<Token> wrapped;
  wrapped.push_back(Token::start());
  wrapped.push_back(key_tok);
  wrapped.insert(wrapped.end(), value.begin(), value.end());
  wrapped.push_back(Token::end());
  const Document doc = detokenize(wrapped);
  return *doc.find(prompt.target_key);
}

Document autocomplete(const ModelConfig& cfg, const Parameters<float>& params,
                      const Vocabulary& vocab, const std::vector<Token>& prefix,
                      const GenerateOptions& options) {
  const auto accepted = [](const Automaton& pda) { return pda.accepted(); };
  std::vector<Token> suffix = decode_until(cfg, params, vocab, prefix, options, accepted);
  std::vector<Token> full = prefix;
  full.insert(full.end(), suffix.begin(), suffix.end());
  return detokenize(full);
}

bool set_equal_labels(const Document& truth, const Document& prediction) {
  if (!truth.is_array() || !prediction.is_array()) return false;
  std::set<std::string> t, p;
  for (const Document& d : truth.as_array()) t.insert(serialize_json(d));
  for (const Document& d : prediction.as_array()) p.insert(serialize_json(d));
  return t == p;
}

ClassifyResult classify(const ModelConfig& cfg, const Parameters<float>& params,
                        const Vocabulary& vocab, const Document& doc,
                        const std::string& target_key, const GenerateOptions& options) {
  if (!doc.is_object()) throw std::invalid_argument("classification input must be an object");
  const Document* truth = doc.find(target_key);
  if (!truth) throw std::invalid_argument("target key '" + target_key + "' missing from document");

  ClassifyResult result;
  result.truth = *truth;

  Document::Object context_pairs;
  for (const auto& [k, v] : doc.as_object())
    if (k != target_key) context_pairs.emplace_back(k, v);

  if (tokenize(doc).size() > static_cast<size_t>(cfg.n)) {
    result.discarded = true;
    return result;
  }

  Prompt prompt;
  prompt.context = Document(std::move(context_pairs));
  prompt.target_key = target_key;
  prompt.options = options;
  result.prediction = predict_field(cfg, params, vocab, prompt);
  result.correct = result.truth.is_array() ? set_equal_labels(result.truth, result.prediction)
                                           : result.truth == result.prediction;
  return result;
}

}  // namespace origami
