// kgdialog command-line interface.
//
// Exit codes: 0 success, 1 data/validation error, 2 usage error,
// 3 internal invariant violation (including gradcheck failures).

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "kgdialog/checkpoint.hpp"
#include "kgdialog/corpus.hpp"
#include "kgdialog/detector.hpp"
#include "kgdialog/entity_filter.hpp"
#include "kgdialog/generator.hpp"
#include "kgdialog/gradcheck_suite.hpp"
#include "kgdialog/metrics.hpp"
#include "kgdialog/pipeline.hpp"
#include "kgdialog/selector.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

namespace corpus = kgdialog::corpus;
namespace entity_filter = kgdialog::entity_filter;
namespace detector = kgdialog::detector;
namespace selector = kgdialog::selector;
namespace generator = kgdialog::generator;
namespace metrics = kgdialog::metrics;
namespace pipeline = kgdialog::pipeline;
namespace checkpoint = kgdialog::checkpoint;
namespace neural = kgdialog::neural;
namespace textproc = kgdialog::textproc;
using corpus::KnowledgeBase;
using corpus::Split;

std::string default_path(const std::string& value, const char* filename) {
  if (!value.empty()) return value;
  if (const char* dir = std::getenv("KGDIALOG_DATA")) {
    return std::string(dir) + "/" + filename;
  }
  return filename;
}

void write_output(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw corpus::LoadError("cannot write file: " + out_path);
  out << text << '\n';
}

struct DataOptions {
  std::string logs, labels, knowledge;

  std::vector<corpus::Dialog> load_dialogs() const {
    return corpus::load_dialogs(default_path(logs, "logs.json"));
  }
  Split load_split() const {
    Split split;
    split.dialogs = load_dialogs();
    split.labels = corpus::load_labels(default_path(labels, "labels.json"));
    if (split.dialogs.size() != split.labels.size()) {
      throw corpus::LoadError("dialogs/labels count mismatch");
    }
    return split;
  }
  KnowledgeBase load_kb() const {
    return corpus::load_knowledge(default_path(knowledge, "knowledge.json"));
  }
};

void add_data_options(CLI::App* cmd, DataOptions& data) {
  cmd->add_option("--logs", data.logs, "dialog logs JSON");
  cmd->add_option("--labels", data.labels, "turn labels JSON");
  cmd->add_option("--knowledge", data.knowledge, "knowledge base JSON");
}

struct FilterOptions {
  std::optional<std::size_t> t1, t3;
  std::size_t t2 = 5;

  entity_filter::FilterConfig config() const {
    entity_filter::FilterConfig cfg;
    cfg.t1_override = t1;
    cfg.t3_override = t3;
    cfg.t2 = t2;
    return cfg;
  }
};

void add_filter_options(CLI::App* cmd, FilterOptions& filter) {
  cmd->add_option("--t1", filter.t1,
                  "absolute utterance-df ceiling (default N_utt/100)");
  cmd->add_option("--t2", filter.t2, "entity-name-df ceiling");
  cmd->add_option("--t3", filter.t3,
                  "absolute fuzzy utterance-df ceiling (default N_utt/2000)");
}

struct TrainOptions {
  double lr = 1e-4;
  std::size_t warmup = 500;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  std::size_t dim = 64;
  std::size_t vocab_min_freq = 1;
  double gamma = 2.0;

  neural::TrainConfig train_config() const {
    neural::TrainConfig cfg;
    cfg.lr = lr;
    cfg.warmup_steps = warmup;
    cfg.batch_size = batch_size;
    cfg.epochs = epochs;
    cfg.seed = seed;
    return cfg;
  }
  detector::EncoderConfig encoder_config() const {
    return {dim, vocab_min_freq, 0};
  }
};

void add_train_options(CLI::App* cmd, TrainOptions& train) {
  cmd->add_option("--lr", train.lr, "learning rate");
  cmd->add_option("--warmup", train.warmup, "linear warmup steps");
  cmd->add_option("--batch-size", train.batch_size, "batch size");
  cmd->add_option("--epochs", train.epochs, "training epochs");
  cmd->add_option("--seed", train.seed, "random seed");
  cmd->add_option("--dim", train.dim, "encoder dimension");
  cmd->add_option("--vocab-min-freq", train.vocab_min_freq,
                  "minimum token frequency for the vocabulary");
  cmd->add_option("--gamma", train.gamma, "focal loss gamma");
}

entity_filter::EntityPatterns build_patterns_for(
    const std::vector<corpus::Dialog>& dialogs, const KnowledgeBase& kb,
    const entity_filter::FilterConfig& cfg, bool fuzzy) {
  const std::vector<textproc::TokenSeq> utterances =
      entity_filter::split_utterances(dialogs);
  entity_filter::EntityPatterns patterns =
      entity_filter::build_patterns(kb, utterances, cfg);
  if (fuzzy) entity_filter::fuzzy_extend(patterns, utterances, cfg);
  return patterns;
}

int run_ingest(const DataOptions& data) {
  const Split split = data.load_split();
  const KnowledgeBase kb = data.load_kb();
  const corpus::ValidationReport report =
      corpus::validate_split(split.dialogs, split.labels, kb);
  for (const std::string& finding : report.findings) {
    std::cerr << "finding: " << finding << '\n';
  }
  if (!report.ok()) return kExitData;
  std::cout << "ok: " << split.dialogs.size() << " dialogs, "
            << kb.entity_count() << " entities, " << kb.snippet_count()
            << " snippets\n";
  return kExitOk;
}

int run_build_filter(const DataOptions& data, const FilterOptions& filter,
                     bool no_fuzzy, const std::string& out_path) {
  const Split split = data.load_split();
  const KnowledgeBase kb = data.load_kb();
  const entity_filter::EntityPatterns patterns =
      build_patterns_for(split.dialogs, kb, filter.config(), !no_fuzzy);
  const entity_filter::FilterStats stats =
      entity_filter::filter_stats(split.dialogs, split.labels, patterns, kb);
  const nlohmann::json j = {
      {"total_entities", stats.total_entities},
      {"avg_matched", stats.avg_matched},
      {"recall", stats.recall},
      {"knowledge_turns", stats.knowledge_turns},
      {"fuzzy", !no_fuzzy},
      {"thresholds",
       {{"t1", patterns.thresholds.t1},
        {"t2", patterns.thresholds.t2},
        {"t3", patterns.thresholds.t3}}},
  };
  write_output(out_path, j.dump(2));
  return kExitOk;
}

int run_train_detector(const DataOptions& data, const DataOptions& val_data,
                       const TrainOptions& train, std::size_t ensemble_size,
                       const std::string& out_path) {
  const Split split = data.load_split();
  const Split val = val_data.logs.empty() ? split : val_data.load_split();
  detector::DetectorEnsemble ensemble = detector::train_detector_ensemble(
      split, val, train.encoder_config(), train.train_config(), {train.gamma},
      ensemble_size);

  // Tune t_ktd on validation mean probabilities.
  std::vector<double> probs;
  std::vector<bool> golds;
  for (std::size_t i = 0; i < val.dialogs.size(); ++i) {
    probs.push_back(detector::ensemble_probability(ensemble, val.dialogs[i]));
    golds.push_back(val.labels[i].target);
  }
  const bool both_classes =
      std::find(golds.begin(), golds.end(), true) != golds.end() &&
      std::find(golds.begin(), golds.end(), false) != golds.end();
  if (both_classes) {
    ensemble.threshold = detector::tune_threshold(probs, golds);
    for (detector::DetectorModel& model : ensemble.models) {
      model.threshold = ensemble.threshold;
    }
  }
  checkpoint::save_detector(out_path, ensemble);
  std::cout << "saved " << out_path << " (members=" << ensemble.models.size()
            << ", threshold=" << ensemble.threshold << ")\n";
  return kExitOk;
}

int run_detect(const std::string& model_path, const DataOptions& data,
               double threshold, const std::string& out_path) {
  const detector::DetectorEnsemble ensemble =
      checkpoint::load_detector(model_path);
  const std::vector<corpus::Dialog> dialogs = data.load_dialogs();
  const double t = threshold >= 0.0 ? threshold : ensemble.threshold;
  nlohmann::json out = nlohmann::json::array();
  for (const corpus::Dialog& dialog : dialogs) {
    out.push_back(
        {{"prob", detector::ensemble_probability(ensemble, dialog)},
         {"target", detector::ensemble_detect(ensemble, dialog, t)}});
  }
  write_output(out_path, out.dump(2));
  return kExitOk;
}

int run_train_selector(const std::string& stage, const DataOptions& data,
                       const DataOptions& val_data, const TrainOptions& train,
                       const FilterOptions& filter,
                       const std::string& out_path) {
  const Split split = data.load_split();
  const Split val = val_data.logs.empty() ? split : val_data.load_split();
  const KnowledgeBase kb = data.load_kb();

  if (stage == "embedding") {
    const neural::EncoderParams encoder = selector::train_embedding_encoder(
        split, kb, train.encoder_config(), train.train_config(), {});
    checkpoint::save_encoder(out_path, encoder);
    std::cout << "saved " << out_path << "\n";
    return kExitOk;
  }

  selector::SelectorTrainData train_data;
  train_data.train = split;
  train_data.val = val;
  train_data.kb = &kb;
  entity_filter::EntityPatterns patterns;
  if (stage == "entity") {
    patterns = build_patterns_for(split.dialogs, kb, filter.config(), true);
    train_data.patterns = &patterns;
  }
  const selector::RankerModel model = selector::train_ranker(
      stage == "entity" ? selector::RankerStage::kEntity
                        : selector::RankerStage::kKnowledge,
      train_data, train.encoder_config(), train.train_config(),
      {train.gamma});
  checkpoint::save_ranker(out_path, model);
  std::cout << "saved " << out_path << "\n";
  return kExitOk;
}

pipeline::LoadedModels load_selection_models(
    const pipeline::PipelineConfig& config, const KnowledgeBase& kb) {
  pipeline::LoadedModels models;
  auto load_rankers = [](const std::vector<std::string>& paths,
                         selector::RankerStage stage) {
    std::vector<selector::RankerModel> out;
    for (const std::string& path : paths) {
      selector::RankerModel model = checkpoint::load_ranker(path);
      if (model.stage != stage) {
        throw corpus::LoadError("select: wrong ranker stage in " + path);
      }
      out.push_back(std::move(model));
    }
    return out;
  };
  switch (config.mode) {
    case pipeline::SelectionMode::kEmbedding:
      if (config.embedding_path.empty()) {
        throw corpus::LoadError("select: embedding checkpoint required");
      }
      models.embedding_index = selector::build_embedding_index(
          kb, checkpoint::load_encoder(config.embedding_path));
      break;
    case pipeline::SelectionMode::kTwoStage:
      models.entity_rankers = load_rankers(config.entity_ranker_paths,
                                           selector::RankerStage::kEntity);
      if (models.entity_rankers.empty()) {
        throw corpus::LoadError("select: entity ranker checkpoint required");
      }
      [[fallthrough]];
    case pipeline::SelectionMode::kAllCandidates:
      models.knowledge_rankers = load_rankers(
          config.knowledge_ranker_paths, selector::RankerStage::kKnowledge);
      if (models.knowledge_rankers.empty()) {
        throw corpus::LoadError("select: knowledge ranker checkpoint required");
      }
      break;
  }
  return models;
}

int run_select(const pipeline::PipelineConfig& config,
               const std::string& labels_path, const std::string& out_path) {
  const std::vector<corpus::Dialog> dialogs =
      corpus::load_dialogs(config.logs_path);
  const KnowledgeBase kb = corpus::load_knowledge(config.knowledge_path);
  const pipeline::LoadedModels models = load_selection_models(config, kb);

  std::vector<bool> wanted(dialogs.size(), true);
  if (!labels_path.empty()) {
    const std::vector<corpus::TurnLabel> labels =
        corpus::load_labels(labels_path);
    if (labels.size() != dialogs.size()) {
      throw corpus::LoadError("select: labels/logs count mismatch");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) wanted[i] = labels[i].target;
  }

  entity_filter::EntityPatterns patterns;
  if (config.mode == pipeline::SelectionMode::kTwoStage &&
      !config.no_entity_filter) {
    patterns = build_patterns_for(dialogs, kb, config.filter, true);
  }

  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < dialogs.size(); ++i) {
    nlohmann::json rec = {{"knowledge", nlohmann::json::array()}};
    if (wanted[i]) {
      const selector::RankedSnippets ranked = pipeline::select_snippets(
          config, models, dialogs[i], kb, patterns);
      for (const auto& entry : ranked) {
        rec["knowledge"].push_back({{"domain", entry.key.domain},
                                    {"entity_id", entry.key.entity_id},
                                    {"doc_id", entry.key.doc_id},
                                    {"score", entry.score}});
      }
    }
    out.push_back(std::move(rec));
  }
  write_output(out_path, out.dump(2));
  return kExitOk;
}

std::vector<generator::GeneratorExample> generator_examples(
    const Split& split, const KnowledgeBase& kb) {
  std::vector<generator::GeneratorExample> examples;
  for (std::size_t i = 0; i < split.dialogs.size(); ++i) {
    const corpus::TurnLabel& label = split.labels[i];
    if (!label.target || !label.response.has_value()) continue;
    const corpus::Snippet* snippet = kb.find(label.snippets.front());
    if (snippet == nullptr) {
      throw corpus::LoadError("train-generator: label " + std::to_string(i) +
                              " references an unknown snippet");
    }
    examples.push_back({split.dialogs[i], *snippet, *label.response});
  }
  return examples;
}

int run_train_generator(const DataOptions& data, const TrainOptions& train,
                        bool no_pointer, std::size_t max_positions,
                        const std::string& out_path) {
  const Split split = data.load_split();
  const KnowledgeBase kb = data.load_kb();
  const std::vector<generator::GeneratorExample> examples =
      generator_examples(split, kb);
  if (examples.empty()) {
    throw corpus::LoadError("train-generator: no knowledge-seeking turns");
  }
  generator::GeneratorConfig gen_cfg;
  gen_cfg.dim = train.dim;
  gen_cfg.vocab_min_freq = train.vocab_min_freq;
  gen_cfg.max_positions = max_positions;
  gen_cfg.use_pointer = !no_pointer;
  const generator::Seq2SeqParams params =
      generator::train_generator(examples, gen_cfg, train.train_config());
  checkpoint::save_seq2seq(out_path, params);
  std::cout << "saved " << out_path
            << " (per-token NLL=" << generator::mean_token_nll(params, examples)
            << ")\n";
  return kExitOk;
}

int run_generate(const std::string& model_path, const DataOptions& data,
                 const std::string& selections_path, std::size_t max_len,
                 bool no_pointer, const std::string& out_path) {
  generator::Seq2SeqParams params = checkpoint::load_seq2seq(model_path);
  if (no_pointer) params.use_pointer = false;
  const std::vector<corpus::Dialog> dialogs = data.load_dialogs();
  const KnowledgeBase kb = data.load_kb();

  // Snippets to ground each response: gold labels or a select output.
  std::vector<std::optional<corpus::SnippetRef>> grounding(dialogs.size());
  if (!selections_path.empty()) {
    std::ifstream in(selections_path, std::ios::binary);
    if (!in) throw corpus::LoadError("cannot open file: " + selections_path);
    nlohmann::json sel = nlohmann::json::parse(in, nullptr, false);
    if (sel.is_discarded() || !sel.is_array() ||
        sel.size() != dialogs.size()) {
      throw corpus::LoadError("generate: malformed selections file");
    }
    for (std::size_t i = 0; i < dialogs.size(); ++i) {
      const nlohmann::json& knowledge = sel[i].at("knowledge");
      if (knowledge.empty()) continue;
      grounding[i] = corpus::SnippetRef{
          knowledge[0].at("domain").get<std::string>(),
          knowledge[0].at("entity_id").get<std::string>(),
          knowledge[0].at("doc_id").get<std::string>()};
    }
  } else {
    const std::vector<corpus::TurnLabel> labels =
        corpus::load_labels(default_path(data.labels, "labels.json"));
    if (labels.size() != dialogs.size()) {
      throw corpus::LoadError("generate: labels/logs count mismatch");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i].target) grounding[i] = labels[i].snippets.front();
    }
  }

  std::vector<metrics::PredictionRecord> records(dialogs.size());
  for (std::size_t i = 0; i < dialogs.size(); ++i) {
    if (!grounding[i].has_value()) continue;
    records[i].target = true;
    records[i].snippets = {*grounding[i]};
    const generator::GenInput input =
        generator::build_gen_input(dialogs[i], kb.at(*grounding[i]),
                                   params.vocab);
    records[i].response = generator::greedy_decode(params, input, max_len);
  }
  write_output(out_path, metrics::predictions_to_json(records));
  return kExitOk;
}

int run_run_pipeline(const pipeline::PipelineConfig& config) {
  const std::vector<metrics::PredictionRecord> records =
      pipeline::run_pipeline(config);
  write_output(config.out_path, metrics::predictions_to_json(records));
  return kExitOk;
}

int run_evaluate(const std::string& predictions_path, const DataOptions& data,
                 const std::string& out_path) {
  const std::vector<metrics::PredictionRecord> preds =
      metrics::load_predictions(predictions_path);
  const std::vector<corpus::TurnLabel> labels =
      corpus::load_labels(default_path(data.labels, "labels.json"));
  const KnowledgeBase kb = data.load_kb();
  if (preds.size() != labels.size()) {
    throw corpus::LoadError("evaluate: predictions/labels count mismatch");
  }
  const metrics::MetricReport report =
      metrics::pipeline_score(preds, labels, kb);
  write_output(out_path, report.to_json());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowledge-grounded dialog pipeline"};
  app.require_subcommand(1);

  // ingest
  DataOptions ingest_data;
  CLI::App* ingest = app.add_subcommand("ingest", "load and validate a split");
  add_data_options(ingest, ingest_data);

  // build-filter
  DataOptions filter_data;
  FilterOptions filter_opts;
  bool filter_no_fuzzy = false;
  std::string filter_out;
  CLI::App* build_filter = app.add_subcommand(
      "build-filter", "build entity patterns and report candidate stats");
  add_data_options(build_filter, filter_data);
  add_filter_options(build_filter, filter_opts);
  build_filter->add_flag("--no-fuzzy", filter_no_fuzzy,
                         "exact N-gram matching only");
  build_filter->add_option("--out", filter_out, "stats JSON path (- stdout)");

  // train-detector
  DataOptions td_data, td_val;
  TrainOptions td_train;
  std::size_t td_ensemble = 5;
  std::string td_out = "detector.ckpt.json";
  CLI::App* train_det =
      app.add_subcommand("train-detector", "train the turn detector");
  add_data_options(train_det, td_data);
  train_det->add_option("--val-logs", td_val.logs, "validation logs JSON");
  train_det->add_option("--val-labels", td_val.labels,
                        "validation labels JSON");
  add_train_options(train_det, td_train);
  train_det->add_option("--ensemble-size", td_ensemble,
                        "bagging ensemble size (odd)");
  train_det->add_option("--out", td_out, "checkpoint path");

  // detect
  DataOptions detect_data;
  std::string detect_model, detect_out;
  double detect_threshold = -1.0;
  CLI::App* detect =
      app.add_subcommand("detect", "score turns with a trained detector");
  detect->add_option("--model", detect_model, "detector checkpoint")
      ->required();
  add_data_options(detect, detect_data);
  detect->add_option("--threshold", detect_threshold,
                     "decision threshold t_ktd (default: checkpoint)");
  detect->add_option("--out", detect_out, "output JSON path (- stdout)");

  // train-selector
  DataOptions ts_data, ts_val;
  TrainOptions ts_train;
  FilterOptions ts_filter;
  std::string ts_stage = "entity";
  std::string ts_out = "selector.ckpt.json";
  CLI::App* train_sel =
      app.add_subcommand("train-selector", "train a selection model");
  train_sel->add_option("--stage", ts_stage, "entity|knowledge|embedding")
      ->check(CLI::IsMember({"entity", "knowledge", "embedding"}));
  add_data_options(train_sel, ts_data);
  train_sel->add_option("--val-logs", ts_val.logs, "validation logs JSON");
  train_sel->add_option("--val-labels", ts_val.labels,
                        "validation labels JSON");
  add_train_options(train_sel, ts_train);
  add_filter_options(train_sel, ts_filter);
  train_sel->add_option("--out", ts_out, "checkpoint path");

  // select
  pipeline::PipelineConfig select_cfg;
  std::string select_mode = "two-stage";
  std::string select_labels, select_out;
  std::size_t select_k = 5;
  CLI::App* select =
      app.add_subcommand("select", "rank knowledge snippets per turn");
  select->add_option("--logs", select_cfg.logs_path, "dialog logs JSON");
  select->add_option("--knowledge", select_cfg.knowledge_path,
                     "knowledge base JSON");
  select->add_option("--labels", select_labels,
                     "only rank gold knowledge-seeking turns");
  select->add_option("--mode", select_mode,
                     "two-stage|all-candidates|embedding")
      ->check(CLI::IsMember({"two-stage", "all-candidates", "embedding"}));
  select->add_option("--entity-model", select_cfg.entity_ranker_paths,
                     "entity ranker checkpoint (repeatable)");
  select->add_option("--knowledge-model", select_cfg.knowledge_ranker_paths,
                     "knowledge ranker checkpoint (repeatable)");
  select->add_option("--embedding-model", select_cfg.embedding_path,
                     "embedding encoder checkpoint");
  select->add_option("--k", select_k, "ranked list size");
  select->add_flag("--no-entity-filter", select_cfg.no_entity_filter,
                   "rank every entity instead of the filtered candidates");
  FilterOptions select_filter;
  add_filter_options(select, select_filter);
  select->add_option("--out", select_out, "output JSON path (- stdout)");

  // train-generator
  DataOptions tg_data;
  TrainOptions tg_train;
  bool tg_no_pointer = false;
  std::size_t tg_max_positions = 256;
  std::string tg_out = "generator.ckpt.json";
  CLI::App* train_gen =
      app.add_subcommand("train-generator", "train the response generator");
  add_data_options(train_gen, tg_data);
  add_train_options(train_gen, tg_train);
  train_gen->add_flag("--no-pointer", tg_no_pointer,
                      "train without the copy mechanism (ablation)");
  train_gen->add_option("--max-positions", tg_max_positions,
                        "encoder position table size");
  train_gen->add_option("--out", tg_out, "checkpoint path");

  // generate
  DataOptions gen_data;
  std::string gen_model, gen_selections, gen_out;
  std::size_t gen_max_len = 64;
  bool gen_no_pointer = false;
  CLI::App* generate =
      app.add_subcommand("generate", "decode responses for selected snippets");
  generate->add_option("--model", gen_model, "generator checkpoint")
      ->required();
  add_data_options(generate, gen_data);
  generate->add_option("--selections", gen_selections,
                       "select output JSON (default: gold labels)");
  generate->add_option("--max-len", gen_max_len, "maximum response tokens");
  generate->add_flag("--no-pointer", gen_no_pointer,
                     "decode without the copy mechanism (ablation)");
  generate->add_option("--out", gen_out, "output JSON path (- stdout)");

  // run-pipeline
  std::string rp_config_path, rp_mode;
  pipeline::PipelineConfig rp_flags;
  FilterOptions rp_filter;
  bool rp_no_pointer = false, rp_no_entity_filter = false;
  double rp_threshold = -1.0;
  CLI::App* run_pipe =
      app.add_subcommand("run-pipeline", "run detection, selection, generation");
  run_pipe->add_option("--config", rp_config_path, "pipeline config JSON");
  run_pipe->add_option("--logs", rp_flags.logs_path, "dialog logs JSON");
  run_pipe->add_option("--knowledge", rp_flags.knowledge_path,
                       "knowledge base JSON");
  run_pipe->add_option("--detector", rp_flags.detector_path,
                       "detector checkpoint");
  run_pipe->add_option("--entity-model", rp_flags.entity_ranker_paths,
                       "entity ranker checkpoint (repeatable)");
  run_pipe->add_option("--knowledge-model", rp_flags.knowledge_ranker_paths,
                       "knowledge ranker checkpoint (repeatable)");
  run_pipe->add_option("--embedding-model", rp_flags.embedding_path,
                       "embedding encoder checkpoint");
  run_pipe->add_option("--generator", rp_flags.generator_path,
                       "generator checkpoint");
  run_pipe->add_option("--out", rp_flags.out_path, "predictions JSON path");
  run_pipe->add_option("--mode", rp_mode, "two-stage|all-candidates|embedding")
      ->check(CLI::IsMember({"two-stage", "all-candidates", "embedding"}));
  run_pipe->add_option("--threshold", rp_threshold, "detection threshold");
  run_pipe->add_option("--k", rp_flags.top_k, "ranked list size");
  run_pipe->add_option("--max-len", rp_flags.max_len,
                       "maximum response tokens");
  run_pipe->add_flag("--no-pointer", rp_no_pointer,
                     "decode without the copy mechanism");
  run_pipe->add_flag("--no-entity-filter", rp_no_entity_filter,
                     "rank every entity instead of the filtered candidates");
  run_pipe->add_option("--seed", rp_flags.seed, "random seed");
  add_filter_options(run_pipe, rp_filter);

  // evaluate
  DataOptions eval_data;
  std::string eval_predictions, eval_out;
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "score a predictions file");
  evaluate->add_option("--predictions", eval_predictions, "predictions JSON")
      ->required();
  add_data_options(evaluate, eval_data);
  evaluate->add_option("--out", eval_out, "report JSON path (- stdout)");

  // chat
  std::string chat_config_path, chat_mode;
  pipeline::PipelineConfig chat_flags;
  double chat_threshold = -1.0;
  CLI::App* chat = app.add_subcommand("chat", "interactive dialog session");
  chat->add_option("--config", chat_config_path, "pipeline config JSON");
  chat->add_option("--logs", chat_flags.logs_path,
                   "utterance corpus for the entity filter");
  chat->add_option("--knowledge", chat_flags.knowledge_path,
                   "knowledge base JSON");
  chat->add_option("--detector", chat_flags.detector_path,
                   "detector checkpoint");
  chat->add_option("--entity-model", chat_flags.entity_ranker_paths,
                   "entity ranker checkpoint (repeatable)");
  chat->add_option("--knowledge-model", chat_flags.knowledge_ranker_paths,
                   "knowledge ranker checkpoint (repeatable)");
  chat->add_option("--embedding-model", chat_flags.embedding_path,
                   "embedding encoder checkpoint");
  chat->add_option("--generator", chat_flags.generator_path,
                   "generator checkpoint");
  chat->add_option("--mode", chat_mode, "two-stage|all-candidates|embedding")
      ->check(CLI::IsMember({"two-stage", "all-candidates", "embedding"}));
  chat->add_option("--threshold", chat_threshold, "detection threshold");
  FilterOptions chat_filter;
  add_filter_options(chat, chat_filter);

  // gradcheck
  std::uint64_t gc_seed = 0;
  std::size_t gc_points = 100;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference checks for all trainable operations");
  gradcheck->add_option("--seed", gc_seed, "random seed");
  gradcheck->add_option("--points", gc_points, "random points per operation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  // Merges a config file with the flags bound above; flags win.
  auto assemble_config = [](const std::string& config_path,
                            const pipeline::PipelineConfig& flags,
                            CLI::App* cmd, const std::string& mode_name,
                            double threshold, const FilterOptions& filter,
                            bool no_pointer, bool no_entity_filter) {
    pipeline::PipelineConfig cfg;
    if (!config_path.empty()) {
      cfg = pipeline::PipelineConfig::from_file(config_path);
    }
    auto flag_given = [cmd](const char* name) {
      const CLI::Option* opt = cmd->get_option_no_throw(name);
      return opt != nullptr && opt->count() > 0;
    };
    if (!flags.logs_path.empty()) cfg.logs_path = flags.logs_path;
    if (!flags.knowledge_path.empty()) cfg.knowledge_path = flags.knowledge_path;
    if (!flags.detector_path.empty()) cfg.detector_path = flags.detector_path;
    if (!flags.entity_ranker_paths.empty()) {
      cfg.entity_ranker_paths = flags.entity_ranker_paths;
    }
    if (!flags.knowledge_ranker_paths.empty()) {
      cfg.knowledge_ranker_paths = flags.knowledge_ranker_paths;
    }
    if (!flags.embedding_path.empty()) cfg.embedding_path = flags.embedding_path;
    if (!flags.generator_path.empty()) cfg.generator_path = flags.generator_path;
    if (!flags.out_path.empty()) cfg.out_path = flags.out_path;
    if (!mode_name.empty()) cfg.mode = pipeline::parse_selection_mode(mode_name);
    if (threshold >= 0.0) cfg.threshold = threshold;
    if (flag_given("--k")) cfg.top_k = flags.top_k;
    if (flag_given("--max-len")) cfg.max_len = flags.max_len;
    if (no_pointer) cfg.no_pointer = true;
    if (no_entity_filter) cfg.no_entity_filter = true;
    if (flag_given("--seed")) cfg.seed = flags.seed;
    if (filter.t1.has_value()) cfg.filter.t1_override = filter.t1;
    if (flag_given("--t2")) cfg.filter.t2 = filter.t2;
    if (filter.t3.has_value()) cfg.filter.t3_override = filter.t3;
    cfg.logs_path = default_path(cfg.logs_path, "logs.json");
    cfg.knowledge_path = default_path(cfg.knowledge_path, "knowledge.json");
    return cfg;
  };

  try {
    if (*ingest) return run_ingest(ingest_data);
    if (*build_filter) {
      return run_build_filter(filter_data, filter_opts, filter_no_fuzzy,
                              filter_out);
    }
    if (*train_det) {
      return run_train_detector(td_data, td_val, td_train, td_ensemble,
                                td_out);
    }
    if (*detect) {
      return run_detect(detect_model, detect_data, detect_threshold,
                        detect_out);
    }
    if (*train_sel) {
      return run_train_selector(ts_stage, ts_data, ts_val, ts_train,
                                ts_filter, ts_out);
    }
    if (*select) {
      select_cfg.mode = pipeline::parse_selection_mode(select_mode);
      select_cfg.top_k = select_k;
      select_cfg.filter = select_filter.config();
      select_cfg.logs_path = default_path(select_cfg.logs_path, "logs.json");
      select_cfg.knowledge_path =
          default_path(select_cfg.knowledge_path, "knowledge.json");
      return run_select(select_cfg, select_labels, select_out);
    }
    if (*train_gen) {
      return run_train_generator(tg_data, tg_train, tg_no_pointer,
                                 tg_max_positions, tg_out);
    }
    if (*generate) {
      return run_generate(gen_model, gen_data, gen_selections, gen_max_len,
                          gen_no_pointer, gen_out);
    }
    if (*run_pipe) {
      const pipeline::PipelineConfig cfg = assemble_config(
          rp_config_path, rp_flags, run_pipe, rp_mode, rp_threshold,
          rp_filter, rp_no_pointer, rp_no_entity_filter);
      return run_run_pipeline(cfg);
    }
    if (*evaluate) return run_evaluate(eval_predictions, eval_data, eval_out);
    if (*chat) {
      const pipeline::PipelineConfig cfg = assemble_config(
          chat_config_path, chat_flags, chat, chat_mode, chat_threshold,
          chat_filter, false, false);
      return pipeline::chat(cfg, std::cin, std::cout);
    }
    if (*gradcheck) {
      const bool passed =
          kgdialog::gradcheck::run_and_report(gc_seed, gc_points, std::cout);
      return passed ? kExitOk : kExitInternal;
    }
  } catch (const corpus::LoadError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitOk;
}
