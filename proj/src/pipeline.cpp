#include "kgdialog/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "kgdialog/checkpoint.hpp"

namespace kgdialog::pipeline {

using nlohmann::json;

SelectionMode parse_selection_mode(const std::string& name) {
  if (name == "two-stage") return SelectionMode::kTwoStage;
  if (name == "all-candidates") return SelectionMode::kAllCandidates;
  if (name == "embedding") return SelectionMode::kEmbedding;
  throw std::invalid_argument("unknown selection mode: " + name);
}

std::string selection_mode_name(SelectionMode mode) {
  switch (mode) {
    case SelectionMode::kTwoStage:
      return "two-stage";
    case SelectionMode::kAllCandidates:
      return "all-candidates";
    case SelectionMode::kEmbedding:
      return "embedding";
  }
  return "?";
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw corpus::LoadError("pipeline config: not a JSON object");
  }
  PipelineConfig config;
  for (const auto& [key, value] : j.items()) {
    if (key == "logs") {
      config.logs_path = value.get<std::string>();
    } else if (key == "knowledge") {
      config.knowledge_path = value.get<std::string>();
    } else if (key == "detector") {
      config.detector_path = value.get<std::string>();
    } else if (key == "entity_rankers") {
      config.entity_ranker_paths = value.get<std::vector<std::string>>();
    } else if (key == "knowledge_rankers") {
      config.knowledge_ranker_paths = value.get<std::vector<std::string>>();
    } else if (key == "embedding") {
      config.embedding_path = value.get<std::string>();
    } else if (key == "generator") {
      config.generator_path = value.get<std::string>();
    } else if (key == "out") {
      config.out_path = value.get<std::string>();
    } else if (key == "mode") {
      config.mode = parse_selection_mode(value.get<std::string>());
    } else if (key == "threshold") {
      config.threshold = value.get<double>();
    } else if (key == "top_k") {
      config.top_k = value.get<std::size_t>();
    } else if (key == "max_len") {
      config.max_len = value.get<std::size_t>();
    } else if (key == "no_pointer") {
      config.no_pointer = value.get<bool>();
    } else if (key == "no_entity_filter") {
      config.no_entity_filter = value.get<bool>();
    } else if (key == "seed") {
      config.seed = value.get<std::uint64_t>();
    } else if (key == "filter") {
      if (value.contains("t1")) {
        config.filter.t1_override = value["t1"].get<std::size_t>();
      }
      if (value.contains("t2")) {
        config.filter.t2 = value["t2"].get<std::size_t>();
      }
      if (value.contains("t3")) {
        config.filter.t3_override = value["t3"].get<std::size_t>();
      }
    } else {
      throw corpus::LoadError("pipeline config: unknown key \"" + key + "\"");
    }
  }
  return config;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw corpus::LoadError("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

LoadedModels load_models(const PipelineConfig& config,
                         const corpus::KnowledgeBase& kb) {
  LoadedModels models;
  if (config.detector_path.empty()) {
    throw corpus::LoadError("pipeline: detector checkpoint not configured");
  }
  models.detector = checkpoint::load_detector(config.detector_path);

  auto load_rankers = [](const std::vector<std::string>& paths,
                         selector::RankerStage stage, const char* what) {
    std::vector<selector::RankerModel> out;
    for (const std::string& path : paths) {
      selector::RankerModel model = checkpoint::load_ranker(path);
      if (model.stage != stage) {
        throw corpus::LoadError(std::string(what) +
                                ": wrong ranker stage in " + path);
      }
      out.push_back(std::move(model));
    }
    return out;
  };

  switch (config.mode) {
    case SelectionMode::kTwoStage:
      if (config.entity_ranker_paths.empty()) {
        throw corpus::LoadError(
            "pipeline: entity ranker checkpoint not configured");
      }
      if (config.knowledge_ranker_paths.empty()) {
        throw corpus::LoadError(
            "pipeline: knowledge ranker checkpoint not configured");
      }
      models.entity_rankers =
          load_rankers(config.entity_ranker_paths,
                       selector::RankerStage::kEntity, "entity ranker");
      models.knowledge_rankers =
          load_rankers(config.knowledge_ranker_paths,
                       selector::RankerStage::kKnowledge, "knowledge ranker");
      break;
    case SelectionMode::kAllCandidates:
      if (config.knowledge_ranker_paths.empty()) {
        throw corpus::LoadError(
            "pipeline: knowledge ranker checkpoint not configured");
      }
      models.knowledge_rankers =
          load_rankers(config.knowledge_ranker_paths,
                       selector::RankerStage::kKnowledge, "knowledge ranker");
      break;
    case SelectionMode::kEmbedding:
      if (config.embedding_path.empty()) {
        throw corpus::LoadError(
            "pipeline: embedding checkpoint not configured");
      }
      models.embedding_index = selector::build_embedding_index(
          kb, checkpoint::load_encoder(config.embedding_path));
      break;
  }
  if (!config.generator_path.empty()) {
    models.generator = checkpoint::load_seq2seq(config.generator_path);
    if (config.no_pointer) models.generator->use_pointer = false;
  }
  return models;
}

namespace {

std::vector<corpus::SnippetRef> ranked_refs(
    const selector::RankedSnippets& ranked) {
  std::vector<corpus::SnippetRef> refs;
  refs.reserve(ranked.size());
  for (const auto& entry : ranked) refs.push_back(entry.key);
  return refs;
}

}  // namespace

selector::RankedSnippets select_snippets(const PipelineConfig& config,
                                         const LoadedModels& models,
                                         const corpus::Dialog& dialog,
                                         const corpus::KnowledgeBase& kb,
                                         const entity_filter::EntityPatterns& patterns) {
  switch (config.mode) {
    case SelectionMode::kTwoStage: {
      entity_filter::CandidateSet candidates;
      if (config.no_entity_filter) {
        for (const auto& [key, info] : kb.entities()) candidates.insert(key);
      } else {
        candidates = entity_filter::match_entities(dialog, patterns, kb);
      }
      std::vector<const selector::RankerModel*> entity_models;
      for (const auto& model : models.entity_rankers) {
        entity_models.push_back(&model);
      }
      const selector::RankedEntities entities =
          selector::ensemble_rank_entities(entity_models, dialog, candidates,
                                           kb);
      const corpus::EntityKey top = entities.front().key;
      std::vector<const selector::RankerModel*> knowledge_models;
      for (const auto& model : models.knowledge_rankers) {
        knowledge_models.push_back(&model);
      }
      return selector::ensemble_rank_snippets(knowledge_models, dialog, top,
                                              kb, config.top_k);
    }
    case SelectionMode::kAllCandidates: {
      std::vector<const selector::RankerModel*> knowledge_models;
      for (const auto& model : models.knowledge_rankers) {
        knowledge_models.push_back(&model);
      }
      // Single-stage: every snippet is a candidate.
      selector::RankedSnippets ranked = selector::rank_all_snippets(
          *knowledge_models.front(), dialog, kb, kb.snippet_count());
      if (knowledge_models.size() > 1) {
        // Aggregate by re-ranking per entity is meaningless here; rank the
        // full list per model and mean the scores.
        std::map<corpus::SnippetRef, double> totals;
        for (const selector::RankerModel* model : knowledge_models) {
          for (const auto& entry : selector::rank_all_snippets(
                   *model, dialog, kb, kb.snippet_count())) {
            totals[entry.key] += entry.score;
          }
        }
        ranked.clear();
        for (const auto& [ref, total] : totals) {
          ranked.push_back(
              {ref, total / static_cast<double>(knowledge_models.size())});
        }
        selector::sort_ranked(ranked);
      }
      if (ranked.size() > config.top_k) ranked.resize(config.top_k);
      return ranked;
    }
    case SelectionMode::kEmbedding: {
      selector::RankedSnippets ranked =
          selector::rank_by_embedding(*models.embedding_index, dialog);
      if (ranked.size() > config.top_k) ranked.resize(config.top_k);
      return ranked;
    }
  }
  throw std::logic_error("select_snippets: unreachable");
}

std::vector<metrics::PredictionRecord> run_pipeline(
    const PipelineConfig& config, const std::vector<corpus::Dialog>& dialogs,
    const corpus::KnowledgeBase& kb, const LoadedModels& models) {
  entity_filter::EntityPatterns patterns;
  if (config.mode == SelectionMode::kTwoStage && !config.no_entity_filter) {
    const std::vector<textproc::TokenSeq> utterances =
        entity_filter::split_utterances(dialogs);
    patterns = entity_filter::build_patterns(kb, utterances, config.filter);
    entity_filter::fuzzy_extend(patterns, utterances, config.filter);
  }
  const double threshold = config.threshold >= 0.0
                               ? config.threshold
                               : models.detector.threshold;

  std::vector<metrics::PredictionRecord> records;
  records.reserve(dialogs.size());
  for (const corpus::Dialog& dialog : dialogs) {
    metrics::PredictionRecord record;
    record.target = detector::ensemble_detect(models.detector, dialog,
                                              threshold);
    if (record.target) {
      const selector::RankedSnippets ranked =
          select_snippets(config, models, dialog, kb, patterns);
      record.snippets = ranked_refs(ranked);
      if (models.generator.has_value() && !record.snippets.empty()) {
        const corpus::Snippet& top = kb.at(record.snippets.front());
        const generator::GenInput input = generator::build_gen_input(
            dialog, top, models.generator->vocab);
        record.response =
            generator::greedy_decode(*models.generator, input,
                                     config.max_len);
      } else {
        record.response = "";
      }
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<metrics::PredictionRecord> run_pipeline(
    const PipelineConfig& config) {
  if (config.logs_path.empty() || config.knowledge_path.empty()) {
    throw corpus::LoadError("pipeline: logs and knowledge paths required");
  }
  const std::vector<corpus::Dialog> dialogs =
      corpus::load_dialogs(config.logs_path);
  const corpus::KnowledgeBase kb =
      corpus::load_knowledge(config.knowledge_path);
  const LoadedModels models = load_models(config, kb);
  return run_pipeline(config, dialogs, kb, models);
}

namespace {

void print_chat_help(std::ostream& out) {
  out << "commands: :reset  clear dialog history\n"
      << "          :quit   leave the session\n";
}

}  // namespace

int chat(const PipelineConfig& config, std::istream& in, std::ostream& out) {
  const corpus::KnowledgeBase kb =
      corpus::load_knowledge(config.knowledge_path);
  const LoadedModels models = load_models(config, kb);

  // The filter needs an utterance corpus; use the configured logs.
  entity_filter::EntityPatterns patterns;
  bool have_patterns = false;
  if (config.mode == SelectionMode::kTwoStage && !config.no_entity_filter &&
      !config.logs_path.empty()) {
    const std::vector<corpus::Dialog> dialogs =
        corpus::load_dialogs(config.logs_path);
    const std::vector<textproc::TokenSeq> utterances =
        entity_filter::split_utterances(dialogs);
    patterns = entity_filter::build_patterns(kb, utterances, config.filter);
    entity_filter::fuzzy_extend(patterns, utterances, config.filter);
    have_patterns = true;
  }
  const double threshold = config.threshold >= 0.0
                               ? config.threshold
                               : models.detector.threshold;

  corpus::Dialog history;
  history.id = "chat";
  out << "kgdialog chat; :quit to leave, :reset to clear history\n";
  std::string line;
  while (out << "> " << std::flush, std::getline(in, line)) {
    if (line == ":quit") break;
    if (line == ":reset") {
      history.turns.clear();
      out << "history cleared\n";
      continue;
    }
    if (!line.empty() && line.front() == ':') {
      print_chat_help(out);
      continue;
    }
    if (textproc::tokenize(line).empty()) continue;
    history.turns.push_back({corpus::Speaker::kUser, line});

    const double prob = detector::ensemble_probability(models.detector,
                                                       history);
    const bool seeking =
        detector::ensemble_detect(models.detector, history, threshold);
    out << std::fixed << std::setprecision(4);
    out << "detection: p=" << prob << " threshold=" << threshold
        << (seeking ? " -> knowledge-seeking" : " -> not knowledge-seeking")
        << "\n";
    if (!seeking) continue;

    if (config.mode == SelectionMode::kTwoStage) {
      entity_filter::CandidateSet candidates;
      if (have_patterns && !config.no_entity_filter) {
        candidates = entity_filter::match_entities(history, patterns, kb);
      } else {
        for (const auto& [key, info] : kb.entities()) candidates.insert(key);
      }
      std::vector<const selector::RankerModel*> entity_models;
      for (const auto& model : models.entity_rankers) {
        entity_models.push_back(&model);
      }
      const selector::RankedEntities entities =
          selector::ensemble_rank_entities(entity_models, history, candidates,
                                           kb);
      out << "entities:\n";
      for (std::size_t i = 0; i < std::min<std::size_t>(3, entities.size());
           ++i) {
        out << "  " << (i + 1) << ". " << entities[i].key.first << "/"
            << entities[i].key.second << "  score=" << entities[i].score
            << "\n";
      }
    }
    const selector::RankedSnippets ranked =
        select_snippets(config, models, history, kb, patterns);
    out << "snippets:\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(3, ranked.size());
         ++i) {
      const corpus::Snippet& snippet = kb.at(ranked[i].key);
      out << "  " << (i + 1) << ". [" << snippet.ref.domain << "/"
          << snippet.ref.entity_id << "/" << snippet.ref.doc_id << "] "
          << snippet.question << "  score=" << ranked[i].score << "\n";
    }
    if (models.generator.has_value() && !ranked.empty()) {
      const generator::GenInput input = generator::build_gen_input(
          history, kb.at(ranked.front().key), models.generator->vocab);
      const std::string response =
          generator::greedy_decode(*models.generator, input, config.max_len);
      out << "response: " << response << "\n";
      if (!response.empty()) {
        history.turns.push_back({corpus::Speaker::kSystem, response});
      }
    }
  }
  return 0;
}

}  // namespace kgdialog::pipeline
