#pragma once
// Evaluation metrics and detection-gated end-to-end scoring.

#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "kgdialog/corpus.hpp"
#include "kgdialog/textproc.hpp"

namespace kgdialog::metrics {

// Per-turn pipeline output.
struct PredictionRecord {
  bool target = false;
  std::vector<corpus::SnippetRef> snippets;  // ranked, best first
  std::optional<std::string> response;       // present iff target
};

// 0/0 conventions: precision 0 with no positive predictions, recall 0 with
// no gold positives, f1 0 when p + r = 0.
std::tuple<double, double, double> prf1(const std::vector<bool>& pred,
                                        const std::vector<bool>& gold);

// 1 iff gold appears within the first k entries.
int recall_at_k(const std::vector<corpus::SnippetRef>& ranked,
                const corpus::SnippetRef& gold, std::size_t k);

// Sentence-level BLEU-n: geometric mean of modified precisions for orders
// 1..n (add-one smoothing on orders >= 2, order 1 unsmoothed) times the
// brevity penalty. 0 when the hypothesis is empty or has no n-grams of the
// highest requested order.
double bleu_n(const textproc::TokenSeq& hyp, const textproc::TokenSeq& ref,
              std::size_t n);

// LCS F-measure with equal precision/recall weighting.
double rouge_l(const textproc::TokenSeq& hyp, const textproc::TokenSeq& ref);

struct MetricReport {
  double detection_precision = 0.0;
  double detection_recall = 0.0;
  double detection_f1 = 0.0;
  double selection_r_at_1 = 0.0;
  double selection_r_at_5 = 0.0;
  double generation_bleu1 = 0.0;
  double generation_bleu4 = 0.0;
  double generation_rouge_l = 0.0;
  std::size_t total_turns = 0;
  std::size_t knowledge_turns = 0;

  std::string to_json() const;
};

// Detection P/R/F1 over all turns; selection and generation metrics are
// averaged over gold-positive turns, scoring 0 where the system predicted
// negative (detection-gated scoring).
MetricReport pipeline_score(const std::vector<PredictionRecord>& preds,
                            const std::vector<corpus::TurnLabel>& labels,
                            const corpus::KnowledgeBase& kb);

std::string predictions_to_json(const std::vector<PredictionRecord>& preds);
std::vector<PredictionRecord> parse_predictions(const std::string& text);
std::vector<PredictionRecord> load_predictions(const std::string& path);

}  // namespace kgdialog::metrics
