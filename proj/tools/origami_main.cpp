#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "origami/datagen.hpp"
#include "origami/document.hpp"
#include "origami/experiment.hpp"
#include "origami/inference.hpp"
#include "origami/metrics.hpp"
#include "origami/model.hpp"
#include "origami/pipeline.hpp"
#include "origami/rng.hpp"
#include "origami/tokenizer.hpp"
#include "origami/training.hpp"

namespace {

using namespace origami;

std::vector<Document> read_corpus(const std::string& path, bool skip_invalid) {
  JsonlOptions opts;
  opts.skip_invalid = skip_invalid;
  JsonlResult r = load_jsonl(path, opts);
  for (const std::string& w : r.warnings) std::cerr << "warning: " << w << "\n";
  return std::move(r.docs);
}

std::ostream& open_sink(std::ofstream& file, const std::string& path) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot write " + path);
  return file;
}

int cmd_build_vocab(const std::string& input, const std::string& output,
                    std::optional<int32_t> max_size) {
  const std::vector<Document> docs = read_corpus(input, false);
  const Vocabulary vocab = build_vocabulary(docs, max_size);
  vocab.save(output);
  std::cout << "vocabulary: " << vocab.size() << " tokens from " << docs.size()
            << " documents -> " << output << "\n";
  return 0;
}

int cmd_tokenize(const std::string& input, const std::string& vocab_path,
                 const std::string& output) {
  const std::vector<Document> docs = read_corpus(input, false);
  std::optional<Vocabulary> vocab;
  if (!vocab_path.empty()) vocab = Vocabulary::load(vocab_path);

  std::ofstream file;
  std::ostream& out = open_sink(file, output);
  for (const Document& doc : docs) {
    const std::vector<Token> tokens = tokenize(doc);
    out << "{\"tokens\": [";
    for (size_t i = 0; i < tokens.size(); ++i) {
      if (i) out << ", ";
      out << '"' << escape_json_string(tokens[i].to_string()) << '"';
    }
    out << "]";
    if (vocab) {
      out << ", \"ids\": [";
      for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out << ", ";
        const int32_t id = vocab->id_of(tokens[i]);
        out << (id >= 0 ? id : Vocabulary::kUnknownId);
      }
      out << "]";
    }
    out << "}\n";
  }
  return 0;
}

int cmd_validate(const std::string& input, bool skip_invalid) {
  JsonlOptions opts;
  opts.skip_invalid = skip_invalid;
  JsonlResult r = load_jsonl(input, opts);
  for (const std::string& w : r.warnings) std::cerr << "warning: " << w << "\n";
  size_t failures = r.warnings.size();
  for (size_t i = 0; i < r.docs.size(); ++i) {
    const std::vector<Token> tokens = tokenize(r.docs[i]);
    if (!accepts(tokens) || !(detokenize(tokens) == r.docs[i])) {
      std::cerr << "line " << r.line_numbers[i] << ": round trip failed\n";
      ++failures;
    }
  }
  std::cout << r.docs.size() << " documents ok, " << failures << " rejected\n";
  return failures == 0 || skip_invalid ? 0 : 1;
}

struct TrainArgs {
  std::string train_path, test_path, target, out_dir;
  ModelConfig model;
  int64_t batch_size = 100, steps = 1000, eval_every = 100, upscale = 1;
  double lr = 1e-3, stop_at = -1.0, clip = 0.0;
  bool guardrails = true, shuffle = true, online_shuffle = false;
  std::string pe = "kvpe", pin_last;
  int32_t ctx = 0;
  std::optional<int32_t> vocab_max;
  uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a) {
  TrainConfig tc;
  tc.model = a.model;
  tc.model.n = a.ctx;
  tc.model.pe_kind = pe_kind_from_name(a.pe);
  tc.batch_size = a.batch_size;
  tc.lr = a.lr;
  tc.total_batches = a.steps;
  tc.guardrails = a.guardrails;
  tc.eval_every = a.eval_every;
  tc.upscale = a.upscale;
  tc.shuffle = a.shuffle;
  tc.online_shuffle = a.online_shuffle;
  if (!a.pin_last.empty()) tc.pin_last = a.pin_last;
  tc.seed = a.seed;
  tc.target_key = a.target;
  tc.stop_at_test_accuracy = a.stop_at;
  tc.vocab_max = a.vocab_max;
  tc.max_grad_norm = a.clip;

  const std::vector<Document> train_docs = read_corpus(a.train_path, false);
  std::vector<Document> test_docs;
  if (!a.test_path.empty()) test_docs = read_corpus(a.test_path, false);

  const TrainResult r = train(train_docs, test_docs, tc);

  std::filesystem::create_directories(a.out_dir);
  save_checkpoint(a.out_dir, r.config.model, r.params, r.vocab);
  write_metrics_csv(a.out_dir + "/metrics.csv", r.log);

  std::cout << "trained " << (r.log.empty() ? 0 : r.log.back().step) << " steps, final loss "
            << canonical_float(r.log.empty() ? 0.0 : r.log.back().train_loss);
  if (!tc.target_key.empty() && !test_docs.empty()) {
    std::cout << ", test accuracy " << canonical_float(r.final_test_accuracy);
    if (r.n_success >= 0) std::cout << ", first perfect evaluation at step " << r.n_success;
  }
  std::cout << "\n";
  if (r.discarded_train > 0)
    std::cerr << "warning: " << r.discarded_train << " training documents discarded (overlong)\n";
  if (r.discarded_test > 0)
    std::cerr << "warning: " << r.discarded_test << " test documents discarded\n";
  std::cout << "checkpoint -> " << a.out_dir << "\n";
  return 0;
}

GenerateOptions decode_options(bool greedy, double temperature, uint64_t seed,
                               int64_t max_tokens) {
  GenerateOptions o;
  o.greedy = greedy;
  o.temperature = temperature;
  o.seed = seed;
  o.max_new_tokens = max_tokens;
  return o;
}

int cmd_predict(const std::string& ckpt, const std::string& input, const std::string& target,
                const std::string& output, bool sample, double temperature, uint64_t seed,
                int64_t max_tokens) {
  const Checkpoint c = load_checkpoint(ckpt);
  const std::vector<Document> docs = read_corpus(input, false);
  const GenerateOptions opts = decode_options(!sample, temperature, seed, max_tokens);

  std::ofstream file;
  std::ostream& out = open_sink(file, output);
  int64_t correct = 0, scored = 0, discarded = 0;
  for (const Document& doc : docs) {
    if (doc.find(target)) {
      const ClassifyResult r = classify(c.config, c.params, c.vocab, doc, target, opts);
      if (r.discarded) {
        ++discarded;
        out << "{\"discarded\": true}\n";
        continue;
      }
      ++scored;
      if (r.correct) ++correct;
      out << "{\"prediction\": " << serialize_json(r.prediction)
          << ", \"truth\": " << serialize_json(r.truth)
          << ", \"correct\": " << (r.correct ? "true" : "false") << "}\n";
    } else {
      const Document pred = predict_field(c.config, c.params, c.vocab, {doc, target, opts});
      out << "{\"prediction\": " << serialize_json(pred) << "}\n";
    }
  }
  if (scored > 0)
    std::cerr << "accuracy " << canonical_float(static_cast<double>(correct) / scored) << " on "
              << scored << " labeled documents (" << discarded << " discarded)\n";
  return 0;
}

int cmd_generate(const std::string& ckpt, int64_t count, uint64_t seed, bool greedy,
                 double temperature, int64_t max_tokens, const std::string& output) {
  const Checkpoint c = load_checkpoint(ckpt);
  std::ofstream file;
  std::ostream& out = open_sink(file, output);
  int64_t produced = 0;
  for (int64_t i = 0; i < count; ++i) {
    const GenerateOptions opts =
        decode_options(greedy, temperature, mix_seed(seed, static_cast<uint64_t>(i)), max_tokens);
    try {
      const Document doc = autocomplete(c.config, c.params, c.vocab, {Token::start()}, opts);
      out << serialize_json(doc) << "\n";
      ++produced;
    } catch (const std::runtime_error& e) {
      std::cerr << "sample " << i << " abandoned: " << e.what() << "\n";
    }
  }
  std::cerr << produced << " of " << count << " documents generated\n";
  return produced == count ? 0 : 1;
}

void print_report(const MetricsReport& r, TaskKind task, std::ostream& out) {
  out << "documents: " << r.total << " (" << r.discarded << " discarded)\n";
  out << "accuracy: " << canonical_float(r.accuracy) << "\n";
  if (task == TaskKind::Multi) {
    out << "micro precision/recall/F1: " << canonical_float(r.micro_precision) << " "
        << canonical_float(r.micro_recall) << " " << canonical_float(r.micro_f1) << "\n";
    out << "samples precision/recall/F1: " << canonical_float(r.samples_precision) << " "
        << canonical_float(r.samples_recall) << " " << canonical_float(r.samples_f1) << "\n";
  }
}

std::string report_json(const MetricsReport& r) {
  std::string s = "{";
  s += "\"total\": " + std::to_string(r.total);
  s += ", \"correct\": " + std::to_string(r.correct);
  s += ", \"discarded\": " + std::to_string(r.discarded);
  s += ", \"accuracy\": " + canonical_float(r.accuracy);
  s += ", \"tp\": " + std::to_string(r.tp);
  s += ", \"fp\": " + std::to_string(r.fp);
  s += ", \"fn\": " + std::to_string(r.fn);
  s += ", \"micro_precision\": " + canonical_float(r.micro_precision);
  s += ", \"micro_recall\": " + canonical_float(r.micro_recall);
  s += ", \"micro_f1\": " + canonical_float(r.micro_f1);
  s += ", \"samples_precision\": " + canonical_float(r.samples_precision);
  s += ", \"samples_recall\": " + canonical_float(r.samples_recall);
  s += ", \"samples_f1\": " + canonical_float(r.samples_f1);
  s += "}";
  return s;
}

int cmd_evaluate(const std::string& ckpt, const std::string& input, const std::string& target,
                 const std::string& task_name, const std::string& report_path) {
  const Checkpoint c = load_checkpoint(ckpt);
  const std::vector<Document> docs = read_corpus(input, false);
  const TaskKind task = task_name == "multi" ? TaskKind::Multi : TaskKind::Single;
  const MetricsReport r = evaluate(c.config, c.params, c.vocab, docs, target, task);
  print_report(r, task, std::cout);
  if (!report_path.empty()) {
    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + report_path);
    out << report_json(r) << "\n";
  }
  return 0;
}

int cmd_gen_dungeons(const DungeonsConfig& cfg, const std::string& output) {
  cfg.validate();
  const std::vector<Document> docs = generate_dungeons(cfg);
  save_jsonl(output, docs);
  std::ofstream meta(output + ".meta.json", std::ios::binary);
  if (!meta) throw std::runtime_error("cannot write " + output + ".meta.json");
  meta << serialize_json(dungeons_metadata(cfg)) << "\n";
  std::cout << docs.size() << " instances -> " << output << "\n";
  return 0;
}

int cmd_csv2jsonl(const std::string& input, const std::string& output,
                  const std::vector<std::string>& hints) {
  std::map<std::string, ColumnType> typed;
  for (const std::string& h : hints) {
    const size_t eq = h.find('=');
    if (eq == std::string::npos) throw std::runtime_error("hint must look like column=type: " + h);
    const std::string name = h.substr(0, eq), type = h.substr(eq + 1);
    if (type == "int")
      typed[name] = ColumnType::Int;
    else if (type == "float")
      typed[name] = ColumnType::Float;
    else if (type == "bool")
      typed[name] = ColumnType::Bool;
    else if (type == "str")
      typed[name] = ColumnType::Str;
    else
      throw std::runtime_error("unknown column type: " + type);
  }
  const std::vector<Document> docs = csv_to_documents(input, typed);
  save_jsonl(output, docs);
  std::cout << docs.size() << " rows -> " << output << "\n";
  return 0;
}

int cmd_experiment(const std::string& preset, const std::vector<uint64_t>& seeds,
                   const std::string& out_dir) {
  const ExperimentResult result = run_experiment(preset, seeds, out_dir);
  std::cout << result.preset << ": " << result.runs.size() << " runs -> " << out_dir << "\n";
  for (const ExperimentRun& r : result.runs) {
    std::cout << "  " << r.arm << " seed " << r.seed << ": test accuracy "
              << canonical_float(r.test_accuracy);
    if (r.train_accuracy >= 0) std::cout << ", train accuracy " << canonical_float(r.train_accuracy);
    if (r.n_success >= 0) std::cout << ", first perfect evaluation at step " << r.n_success;
    if (r.train_loss >= 0 && r.test_loss >= 0)
      std::cout << ", loss gap " << canonical_float(r.test_loss - r.train_loss);
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structure-aware autoregressive modeling of JSON documents"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Key-value configuration file; command-line flags win");

  // build-vocab
  std::string bv_input, bv_output;
  std::optional<int32_t> bv_max;
  auto* bv = app.add_subcommand("build-vocab", "Build a vocabulary file from a JSONL corpus");
  bv->add_option("--input,-i", bv_input, "Input JSONL corpus")->required();
  bv->add_option("--output,-o", bv_output, "Vocabulary file to write")->required();
  bv->add_option("--max-size", bv_max, "Keep only the most frequent tokens");

  // tokenize
  std::string tk_input, tk_vocab, tk_output;
  auto* tk = app.add_subcommand("tokenize", "Print token sequences for a JSONL corpus");
  tk->add_option("--input,-i", tk_input, "Input JSONL corpus")->required();
  tk->add_option("--vocab", tk_vocab, "Vocabulary file; adds token ids to the output");
  tk->add_option("--output,-o", tk_output, "Output path (default stdout)");

  // validate
  std::string va_input;
  bool va_skip = false;
  auto* va = app.add_subcommand("validate", "Check a JSONL corpus for parse and round-trip errors");
  va->add_option("--input,-i", va_input, "Input JSONL corpus")->required();
  va->add_flag("--skip-invalid", va_skip, "Warn on invalid lines instead of failing");

  // train
  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint directory");
  tr->add_option("--train", ta.train_path, "Training JSONL corpus")->required();
  tr->add_option("--test", ta.test_path, "Held-out JSONL corpus");
  tr->add_option("--target", ta.target, "Key evaluated by constrained decoding");
  tr->add_option("--out,-o", ta.out_dir, "Checkpoint directory to write")->required();
  tr->add_option("--d", ta.model.d, "Embedding width");
  tr->add_option("--heads", ta.model.h, "Attention heads");
  tr->add_option("--layers", ta.model.layers, "Transformer layers");
  tr->add_option("--ctx", ta.ctx, "Context length; 0 fits the longest training document");
  tr->add_option("--pe", ta.pe, "Position encoding")
      ->check(CLI::IsMember({"kvpe", "absolute", "sinusoidal", "none"}));
  tr->add_option("--dropout", ta.model.dropout, "Dropout rate");
  tr->add_option("--batch-size", ta.batch_size, "Documents per step");
  tr->add_option("--lr", ta.lr, "Adam learning rate");
  tr->add_option("--steps", ta.steps, "Optimizer steps");
  tr->add_option("--eval-every", ta.eval_every, "Steps between held-out evaluations");
  tr->add_flag("--guardrails,!--no-guardrails", ta.guardrails,
               "Mask grammatically invalid tokens in the training loss");
  tr->add_option("--upscale", ta.upscale, "Materialized shuffles per training document");
  tr->add_flag("--shuffle,!--no-shuffle", ta.shuffle, "Shuffle object keys when materializing");
  tr->add_flag("--online-shuffle", ta.online_shuffle, "Re-shuffle keys every epoch instead");
  tr->add_option("--pin-last", ta.pin_last, "Keep this key in final position when shuffling");
  tr->add_option("--seed", ta.seed, "Run seed");
  tr->add_option("--stop-at", ta.stop_at, "Stop once test accuracy reaches this value");
  tr->add_option("--vocab-max", ta.vocab_max, "Vocabulary truncation size");
  tr->add_option("--clip", ta.clip, "Global gradient-norm clip; 0 disables");

  // predict
  std::string pr_ckpt, pr_input, pr_target, pr_output;
  bool pr_sample = false;
  double pr_temp = 1.0;
  uint64_t pr_seed = 0;
  int64_t pr_max_tokens = 256;
  auto* pr = app.add_subcommand("predict", "Predict a field for each document");
  pr->add_option("--checkpoint,-c", pr_ckpt, "Checkpoint directory")->required();
  pr->add_option("--input,-i", pr_input, "Input JSONL corpus")->required();
  pr->add_option("--target", pr_target, "Key to predict")->required();
  pr->add_option("--output,-o", pr_output, "Output path (default stdout)");
  pr->add_flag("--sample", pr_sample, "Sample instead of greedy decoding");
  pr->add_option("--temperature", pr_temp, "Sampling temperature");
  pr->add_option("--seed", pr_seed, "Sampling seed");
  pr->add_option("--max-tokens", pr_max_tokens, "Decoding budget per document");

  // generate
  std::string ge_ckpt, ge_output;
  int64_t ge_count = 10, ge_max_tokens = 256;
  uint64_t ge_seed = 0;
  bool ge_greedy = false;
  double ge_temp = 1.0;
  auto* ge = app.add_subcommand("generate", "Sample complete documents from a checkpoint");
  ge->add_option("--checkpoint,-c", ge_ckpt, "Checkpoint directory")->required();
  ge->add_option("--count,-n", ge_count, "Documents to generate");
  ge->add_option("--seed", ge_seed, "Sampling seed");
  ge->add_flag("--greedy", ge_greedy, "Greedy decoding (one deterministic document)");
  ge->add_option("--temperature", ge_temp, "Sampling temperature");
  ge->add_option("--max-tokens", ge_max_tokens, "Decoding budget per document");
  ge->add_option("--output,-o", ge_output, "Output path (default stdout)");

  // evaluate
  std::string ev_ckpt, ev_input, ev_target, ev_task = "single", ev_report;
  auto* ev = app.add_subcommand("evaluate", "Score field prediction on a labeled corpus");
  ev->add_option("--checkpoint,-c", ev_ckpt, "Checkpoint directory")->required();
  ev->add_option("--input,-i", ev_input, "Labeled JSONL corpus")->required();
  ev->add_option("--target", ev_target, "Key to predict")->required();
  ev->add_option("--task", ev_task, "single: exact match; multi: label-set metrics")
      ->check(CLI::IsMember({"single", "multi"}));
  ev->add_option("--report", ev_report, "Write the full report as JSON here");

  // gen-dungeons
  DungeonsConfig dg;
  std::string dg_preset = "hard", dg_output;
  auto* dgc = app.add_subcommand("gen-dungeons", "Generate a synthetic dungeon corpus");
  dgc->add_option("--preset", dg_preset, "hard: doors and keys shuffled; easy: keys only")
      ->check(CLI::IsMember({"hard", "easy"}));
  dgc->add_option("--count", dg.n_instances, "Instances to generate");
  dgc->add_option("--seed", dg.seed, "Generation seed");
  dgc->add_option("--output,-o", dg_output, "Output JSONL path")->required();
  auto* dg_min = dgc->add_option("--min-doors", dg.min_doors, "Fewest doors per dungeon");
  auto* dg_max = dgc->add_option("--max-doors", dg.max_doors, "Most doors per dungeon");
  auto* dg_keys = dgc->add_option("--keys", dg.keys_per_door, "Key labels per door");
  auto* dg_mon = dgc->add_flag("--monsters,!--no-monsters", dg.include_monsters,
                               "Populate rooms with monsters");
  auto* dg_sd = dgc->add_flag("--shuffle-doors,!--no-shuffle-doors", dg.shuffle_doors,
                              "Shuffle corridor order");
  auto* dg_sk = dgc->add_flag("--shuffle-keys,!--no-shuffle-keys", dg.shuffle_keys,
                              "Shuffle keys within rooms");

  // csv2jsonl
  std::string cv_input, cv_output;
  std::vector<std::string> cv_hints;
  auto* cv = app.add_subcommand("csv2jsonl", "Convert a CSV table to JSONL documents");
  cv->add_option("--input,-i", cv_input, "Input CSV file")->required();
  cv->add_option("--output,-o", cv_output, "Output JSONL path")->required();
  cv->add_option("--hint", cv_hints, "Column type override, e.g. age=int (repeatable)");

  // experiment
  std::string ex_preset, ex_out;
  std::vector<uint64_t> ex_seeds;
  auto* ex = app.add_subcommand("experiment", "Run a named experiment preset");
  ex->add_option("--preset", ex_preset, "dungeons-pe, guardrails, or upscaling")
      ->required()
      ->check(CLI::IsMember({"dungeons-pe", "guardrails", "upscaling"}));
  ex->add_option("--seeds", ex_seeds, "Seeds to run (default: preset seeds)");
  ex->add_option("--out,-o", ex_out, "Report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (bv->parsed()) return cmd_build_vocab(bv_input, bv_output, bv_max);
    if (tk->parsed()) return cmd_tokenize(tk_input, tk_vocab, tk_output);
    if (va->parsed()) return cmd_validate(va_input, va_skip);
    if (tr->parsed()) return cmd_train(ta);
    if (pr->parsed())
      return cmd_predict(pr_ckpt, pr_input, pr_target, pr_output, pr_sample, pr_temp, pr_seed,
                         pr_max_tokens);
    if (ge->parsed())
      return cmd_generate(ge_ckpt, ge_count, ge_seed, ge_greedy, ge_temp, ge_max_tokens,
                          ge_output);
    if (ev->parsed()) return cmd_evaluate(ev_ckpt, ev_input, ev_target, ev_task, ev_report);
    if (dgc->parsed()) {
      DungeonsConfig cfg = dungeons_preset(dg_preset);
      cfg.n_instances = dg.n_instances;
      cfg.seed = dg.seed;
      if (dg_min->count()) cfg.min_doors = dg.min_doors;
      if (dg_max->count()) cfg.max_doors = dg.max_doors;
      if (dg_keys->count()) cfg.keys_per_door = dg.keys_per_door;
      if (dg_mon->count()) cfg.include_monsters = dg.include_monsters;
      if (dg_sd->count()) cfg.shuffle_doors = dg.shuffle_doors;
      if (dg_sk->count()) cfg.shuffle_keys = dg.shuffle_keys;
      return cmd_gen_dungeons(cfg, dg_output);
    }
    if (cv->parsed()) return cmd_csv2jsonl(cv_input, cv_output, cv_hints);
    if (ex->parsed()) return cmd_experiment(ex_preset, ex_seeds, ex_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
