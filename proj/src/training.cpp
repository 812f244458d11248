#include "origami/training.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <utility>

#include "origami/automaton.hpp"
#include "origami/pipeline.hpp"
#include "origami/rng.hpp"

namespace origami {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (total_batches < 0) throw std::invalid_argument("total_batches must be non-negative");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be positive");
  if (upscale < 1) throw std::invalid_argument("upscale must be positive");
  if (stop_at_test_accuracy > 1.0)
    throw std::invalid_argument("stop_at_test_accuracy cannot exceed 1");
  if (max_grad_norm < 0.0) throw std::invalid_argument("max_grad_norm cannot be negative");
}

namespace {

int64_t longest_document(const std::vector<Document>& docs) {
  size_t longest = 0;
  for (const Document& d : docs) longest = std::max(longest, tokenize(d).size());
  return static_cast<int64_t>(longest);
}

int64_t fitted_context(const TrainConfig& config, const std::vector<Document>& train_docs) {
  return config.model.n > 0 ? config.model.n : longest_document(train_docs);
}

void clip_gradients(Parameters<float>& grads, double max_norm) {
  double sq = 0.0;
  visit_tensors(grads, [&sq](const std::string&, const RowMatrix<float>& t) {
    sq += t.template cast<double>().squaredNorm();
  });
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const float scale = static_cast<float>(max_norm / (norm + 1e-6));
  visit_tensors(grads, [scale](const std::string&, RowMatrix<float>& t) { t *= scale; });
}

}  // namespace

TrainResult train(const std::vector<Document>& train_docs,
                  const std::vector<Document>& test_docs, const TrainConfig& config) {
  config.validate();
  if (train_docs.empty()) throw std::invalid_argument("empty training corpus");

  TrainResult result;
  result.vocab = build_vocabulary(train_docs, config.vocab_max);

  ModelConfig m = config.model;
  m.v = result.vocab.size();
  m.seed = mix_seed(config.seed, 0);
  if (m.n <= 0) m.n = longest_document(train_docs);
  m.validate();

  const uint64_t batcher_seed = mix_seed(config.seed, 2);
  Rng dropout_rng(mix_seed(config.seed, 3));

  std::vector<Document> corpus = materialized_training_corpus(train_docs, config);

  std::optional<Batcher> batcher;
  if (config.online_shuffle) {
    // materialized_training_corpus already applied the length filter.
    result.discarded_train = static_cast<int64_t>(train_docs.size() - corpus.size());
    if (corpus.empty()) throw std::runtime_error("no training documents fit the context length");
    batcher.emplace(std::move(corpus), result.vocab, config.batch_size, config.guardrails,
                    batcher_seed, config.pin_last);
  } else {
    EncodeCorpusResult enc = encode_corpus(corpus, result.vocab, static_cast<size_t>(m.n));
    result.discarded_train = static_cast<int64_t>(enc.discarded);
    if (enc.docs.empty())
      throw std::runtime_error("no training documents fit the context length");
    batcher.emplace(std::move(enc.docs), config.batch_size, config.guardrails, batcher_seed);
  }

  const MaskSet masks = class_masks(result.vocab);

  std::optional<EvalSet> eval_set;
  if (!config.target_key.empty() && !test_docs.empty()) {
    eval_set = build_eval_set(test_docs, result.vocab, m.n, config.target_key);
    result.discarded_test = eval_set->discarded;
  }

  result.params = init_parameters<float>(m);
  Parameters<float> grads = result.params.zeros_like();
  AdamState<float> adam = init_adam(result.params);
  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;

  result.log.reserve(static_cast<size_t>(config.total_batches));
  for (int64_t step = 1; step <= config.total_batches; ++step) {
    const Batch batch = batcher->next();
    visit_tensors(grads, [](const std::string&, RowMatrix<float>& t) { t.setZero(); });
    LossResult<float> loss;
    try {
      loss = loss_and_gradients(m, result.params, batch, masks, &grads,
                                m.dropout > 0.0f ? &dropout_rng : nullptr);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(std::string(e.what()) + " at training step " +
                               std::to_string(step));
    }
    if (config.max_grad_norm > 0.0) clip_gradients(grads, config.max_grad_norm);
    adam_step(result.params, grads, adam, adam_cfg);

    MetricsRow row;
    row.step = step;
    row.train_loss = static_cast<double>(loss.loss);
    if (eval_set && (step % config.eval_every == 0 || step == config.total_batches)) {
      const EvalCounts counts = eval_accuracy(m, result.params, *eval_set);
      row.test_accuracy = counts.accuracy();
      row.has_eval = true;
      result.final_test_accuracy = row.test_accuracy;
      if (result.n_success < 0 && counts.total > 0 && counts.correct == counts.total)
        result.n_success = step;
      result.log.push_back(row);
      if (config.stop_at_test_accuracy >= 0.0 &&
          row.test_accuracy >= config.stop_at_test_accuracy)
        break;
    } else {
      result.log.push_back(row);
    }
  }

  result.config = config;
  result.config.model = m;
  return result;
}

std::vector<Document> materialized_training_corpus(const std::vector<Document>& train_docs,
                                                   const TrainConfig& config) {
  if (config.online_shuffle) {
    // Token count is invariant under key permutation, so one upfront
    // length filter holds for every epoch's reshuffle.
    const int64_t n = fitted_context(config, train_docs);
    std::vector<Document> kept;
    kept.reserve(train_docs.size());
    for (const Document& d : train_docs)
      if (static_cast<int64_t>(tokenize(d).size()) <= n) kept.push_back(d);
    return kept;
  }
  return upscale(train_docs, config.upscale, mix_seed(config.seed, 1), config.shuffle,
                 config.pin_last);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,train_loss,test_accuracy\n";
  for (const MetricsRow& row : log) {
    out << row.step << ',' << canonical_float(row.train_loss) << ',';
    if (row.has_eval) out << canonical_float(row.test_accuracy);
    out << '\n';
  }
  if (!out.flush()) throw std::runtime_error("failed writing " + path);
}

}  // namespace origami
