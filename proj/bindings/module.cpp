// Python bindings for the main operations: text processing, losses,
// metrics, entity filtering and the end-to-end pipeline.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "json.hpp"
#include "kgdialog/corpus.hpp"
#include "kgdialog/detector.hpp"
#include "kgdialog/entity_filter.hpp"
#include "kgdialog/gradcheck_suite.hpp"
#include "kgdialog/metrics.hpp"
#include "kgdialog/neural.hpp"
#include "kgdialog/pipeline.hpp"
#include "kgdialog/textproc.hpp"

namespace py = pybind11;

namespace {

using namespace kgdialog;

py::dict filter_stats(const std::string& logs_path,
                      const std::string& labels_path,
                      const std::string& knowledge_path,
                      std::optional<std::size_t> t1, std::size_t t2,
                      std::optional<std::size_t> t3, bool fuzzy) {
  corpus::Split split;
  split.dialogs = corpus::load_dialogs(logs_path);
  split.labels = corpus::load_labels(labels_path);
  const corpus::KnowledgeBase kb = corpus::load_knowledge(knowledge_path);
  entity_filter::FilterConfig cfg;
  cfg.t1_override = t1;
  cfg.t2 = t2;
  cfg.t3_override = t3;
  const std::vector<textproc::TokenSeq> utterances =
      entity_filter::split_utterances(split.dialogs);
  entity_filter::EntityPatterns patterns =
      entity_filter::build_patterns(kb, utterances, cfg);
  if (fuzzy) entity_filter::fuzzy_extend(patterns, utterances, cfg);
  const entity_filter::FilterStats stats =
      entity_filter::filter_stats(split.dialogs, split.labels, patterns, kb);
  py::dict out;
  out["total_entities"] = stats.total_entities;
  out["avg_matched"] = stats.avg_matched;
  out["recall"] = stats.recall;
  out["knowledge_turns"] = stats.knowledge_turns;
  return out;
}

std::vector<std::string> validate_split_files(
    const std::string& logs_path, const std::string& labels_path,
    const std::string& knowledge_path) {
  const std::vector<corpus::Dialog> dialogs = corpus::load_dialogs(logs_path);
  const std::vector<corpus::TurnLabel> labels =
      corpus::load_labels(labels_path);
  const corpus::KnowledgeBase kb = corpus::load_knowledge(knowledge_path);
  return corpus::validate_split(dialogs, labels, kb).findings;
}

std::string run_pipeline_json(const std::string& config_json) {
  const pipeline::PipelineConfig config =
      pipeline::PipelineConfig::from_json(config_json);
  return metrics::predictions_to_json(pipeline::run_pipeline(config));
}

std::string evaluate_files(const std::string& predictions_path,
                           const std::string& labels_path,
                           const std::string& knowledge_path) {
  const std::vector<metrics::PredictionRecord> preds =
      metrics::load_predictions(predictions_path);
  const std::vector<corpus::TurnLabel> labels =
      corpus::load_labels(labels_path);
  const corpus::KnowledgeBase kb = corpus::load_knowledge(knowledge_path);
  return metrics::pipeline_score(preds, labels, kb).to_json();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "knowledge-grounded dialog pipeline (C++ core)";

  m.def("tokenize", &textproc::tokenize, py::arg("text"),
        "Lowercase word-level tokenization.");
  m.def(
      "ngrams",
      [](const textproc::TokenSeq& seq, std::size_t n) {
        std::vector<std::string> out;
        for (const textproc::NGram& g : textproc::ngrams(seq, n)) {
          out.push_back(g.text);
        }
        return out;
      },
      py::arg("tokens"), py::arg("n"),
      "Canonical N-grams (space-joined) of the token sequence.");
  m.def(
      "edit_distance",
      [](const std::string& a, const std::string& b) {
        return textproc::edit_distance(a, b);
      },
      py::arg("a"), py::arg("b"), "Character-level Levenshtein distance.");
  m.def(
      "cosine",
      [](const std::vector<double>& u, const std::vector<double>& v) {
        return textproc::cosine(std::span<const double>(u),
                                std::span<const double>(v));
      },
      py::arg("u"), py::arg("v"));

  m.def(
      "focal_loss",
      [](const std::vector<double>& p, const std::vector<double>& t,
         double gamma) { return neural::focal_loss(p, t, gamma); },
      py::arg("p"), py::arg("t"), py::arg("gamma") = 2.0);
  m.def("binary_focal_loss",
        static_cast<double (*)(double, bool, double)>(
            &neural::binary_focal_loss),
        py::arg("p"), py::arg("target"), py::arg("gamma") = 2.0);
  m.def("binary_cross_entropy", &neural::binary_cross_entropy, py::arg("p"),
        py::arg("target"));
  m.def("warmup_lr", &neural::warmup_lr, py::arg("lr"), py::arg("step"),
        py::arg("warmup_steps"));
  m.def("tune_threshold", &detector::tune_threshold, py::arg("probs"),
        py::arg("labels"));

  m.def("prf1", &metrics::prf1, py::arg("pred"), py::arg("gold"));
  m.def("bleu_n", &metrics::bleu_n, py::arg("hyp"), py::arg("ref"),
        py::arg("n"));
  m.def("rouge_l", &metrics::rouge_l, py::arg("hyp"), py::arg("ref"));

  m.def("validate_split", &validate_split_files, py::arg("logs"),
        py::arg("labels"), py::arg("knowledge"),
        "Cross-file consistency findings; empty when consistent.");
  m.def("filter_stats", &filter_stats, py::arg("logs"), py::arg("labels"),
        py::arg("knowledge"), py::arg("t1") = std::nullopt, py::arg("t2") = 5,
        py::arg("t3") = std::nullopt, py::arg("fuzzy") = true,
        "Entity-filter candidate statistics for a split.");
  m.def("run_pipeline", &run_pipeline_json, py::arg("config_json"),
        "Run the full pipeline; returns the predictions as a JSON string.");
  m.def("evaluate", &evaluate_files, py::arg("predictions"),
        py::arg("labels"), py::arg("knowledge"),
        "Detection-gated metric report as a JSON string.");
  m.def(
      "gradcheck",
      [](std::uint64_t seed, std::size_t points) {
        py::dict out;
        for (const auto& result : gradcheck::run_suite(seed, points)) {
          out[py::str(result.op)] = result.max_rel_error;
        }
        return out;
      },
      py::arg("seed") = 0, py::arg("points") = 20,
      "Max relative finite-difference error per trainable operation.");
}
