#pragma once
// End-to-end inference: detection gates selection and generation per turn.
// The pipeline reads logs and the knowledge base plus checkpoints; it never
// sees labels.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kgdialog/detector.hpp"
#include "kgdialog/entity_filter.hpp"
#include "kgdialog/generator.hpp"
#include "kgdialog/metrics.hpp"
#include "kgdialog/selector.hpp"

namespace kgdialog::pipeline {

enum class SelectionMode { kTwoStage, kAllCandidates, kEmbedding };

SelectionMode parse_selection_mode(const std::string& name);
std::string selection_mode_name(SelectionMode mode);

struct PipelineConfig {
  std::string logs_path;
  std::string knowledge_path;
  std::string detector_path;
  std::vector<std::string> entity_ranker_paths;
  std::vector<std::string> knowledge_ranker_paths;
  std::string embedding_path;  // embedding mode
  std::string generator_path;
  std::string out_path;

  SelectionMode mode = SelectionMode::kTwoStage;
  double threshold = -1.0;  // < 0: use the checkpoint's threshold
  std::size_t top_k = 5;
  std::size_t max_len = 64;
  bool no_pointer = false;
  bool no_entity_filter = false;
  std::uint64_t seed = 0;
  entity_filter::FilterConfig filter;

  // Missing keys keep their defaults; unknown keys are an error.
  static PipelineConfig from_json(const std::string& text);
  static PipelineConfig from_file(const std::string& path);
};

// Checkpoints loaded once and shared across turns.
struct LoadedModels {
  detector::DetectorEnsemble detector;
  std::vector<selector::RankerModel> entity_rankers;
  std::vector<selector::RankerModel> knowledge_rankers;
  std::optional<selector::EmbeddingIndex> embedding_index;
  std::optional<generator::Seq2SeqParams> generator;
};

// Throws corpus::LoadError naming the stage whose checkpoint is missing.
LoadedModels load_models(const PipelineConfig& config,
                         const corpus::KnowledgeBase& kb);

std::vector<metrics::PredictionRecord> run_pipeline(
    const PipelineConfig& config);

std::vector<metrics::PredictionRecord> run_pipeline(
    const PipelineConfig& config, const std::vector<corpus::Dialog>& dialogs,
    const corpus::KnowledgeBase& kb, const LoadedModels& models);

// The selection stage on its own (two-stage, all-candidates or embedding per
// the config), top_k results. patterns may be empty for the non-filtering
// modes.
selector::RankedSnippets select_snippets(
    const PipelineConfig& config, const LoadedModels& models,
    const corpus::Dialog& dialog, const corpus::KnowledgeBase& kb,
    const entity_filter::EntityPatterns& patterns);

// Interactive session over the given streams; `:reset` clears the dialog
// history, `:quit` leaves, any other `:command` prints help and continues.
int chat(const PipelineConfig& config, std::istream& in, std::ostream& out);

}  // namespace kgdialog::pipeline
