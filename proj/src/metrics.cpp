#include "kgdialog/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace kgdialog::metrics {

using nlohmann::json;

std::tuple<double, double, double> prf1(const std::vector<bool>& pred,
                                        const std::vector<bool>& gold) {
  if (pred.size() != gold.size()) {
    throw std::invalid_argument("prf1: pred/gold must align");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && gold[i]) ++tp;
    if (pred[i] && !gold[i]) ++fp;
    if (!pred[i] && gold[i]) ++fn;
  }
  const double p = tp + fp == 0 ? 0.0
                                : static_cast<double>(tp) /
                                      static_cast<double>(tp + fp);
  const double r = tp + fn == 0 ? 0.0
                                : static_cast<double>(tp) /
                                      static_cast<double>(tp + fn);
  const double f1 = p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  return {p, r, f1};
}

int recall_at_k(const std::vector<corpus::SnippetRef>& ranked,
                const corpus::SnippetRef& gold, std::size_t k) {
  if (k == 0) throw std::invalid_argument("recall_at_k: k must be >= 1");
  const std::size_t limit = std::min(k, ranked.size());
  for (std::size_t i = 0; i < limit; ++i) {
    if (ranked[i] == gold) return 1;
  }
  return 0;
}

namespace {

std::map<std::string, std::size_t> ngram_counts(const textproc::TokenSeq& seq,
                                                std::size_t n) {
  std::map<std::string, std::size_t> counts;
  if (seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    ++counts[textproc::join_tokens(std::span(seq).subspan(i, n))];
  }
  return counts;
}

}  // namespace

double bleu_n(const textproc::TokenSeq& hyp, const textproc::TokenSeq& ref,
              std::size_t n) {
  if (n == 0) throw std::invalid_argument("bleu_n: n must be >= 1");
  if (hyp.empty()) return 0.0;
  if (hyp.size() < n) return 0.0;  // no n-grams of the highest order
  double log_sum = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const auto hyp_counts = ngram_counts(hyp, k);
    const auto ref_counts = ngram_counts(ref, k);
    std::size_t matched = 0, total = 0;
    for (const auto& [gram, count] : hyp_counts) {
      total += count;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += std::min(count, it->second);
    }
    double precision;
    if (k == 1) {
      precision = total == 0 ? 0.0
                             : static_cast<double>(matched) /
                                   static_cast<double>(total);
    } else {
      precision = (static_cast<double>(matched) + 1.0) /
                  (static_cast<double>(total) + 1.0);
    }
    if (precision == 0.0) return 0.0;
    log_sum += std::log(precision);
  }
  const double bp =
      std::exp(std::min(0.0, 1.0 - static_cast<double>(ref.size()) /
                                       static_cast<double>(hyp.size())));
  return bp * std::exp(log_sum / static_cast<double>(n));
}

double rouge_l(const textproc::TokenSeq& hyp, const textproc::TokenSeq& ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  // Longest common subsequence, two-row DP.
  std::vector<std::size_t> prev(ref.size() + 1, 0), cur(ref.size() + 1, 0);
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      cur[j + 1] = hyp[i] == ref[j] ? prev[j] + 1
                                    : std::max(prev[j + 1], cur[j]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[ref.size()]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(hyp.size());
  const double r = lcs / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

MetricReport pipeline_score(const std::vector<PredictionRecord>& preds,
                            const std::vector<corpus::TurnLabel>& labels,
                            const corpus::KnowledgeBase& kb) {
  (void)kb;
  if (preds.size() != labels.size()) {
    throw std::invalid_argument("pipeline_score: preds/labels must align");
  }
  MetricReport report;
  report.total_turns = preds.size();

  std::vector<bool> pred_flags, gold_flags;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    pred_flags.push_back(preds[i].target);
    gold_flags.push_back(labels[i].target);
  }
  std::tie(report.detection_precision, report.detection_recall,
           report.detection_f1) = prf1(pred_flags, gold_flags);

  double r1 = 0.0, r5 = 0.0, bleu1 = 0.0, bleu4 = 0.0, rouge = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!labels[i].target) continue;
    ++report.knowledge_turns;
    if (!preds[i].target) continue;  // missed detection scores 0 downstream
    const corpus::SnippetRef& gold = labels[i].snippets.front();
    r1 += recall_at_k(preds[i].snippets, gold, 1);
    r5 += recall_at_k(preds[i].snippets, gold, 5);
    if (preds[i].response.has_value() && labels[i].response.has_value()) {
      const textproc::TokenSeq hyp = textproc::tokenize(*preds[i].response);
      const textproc::TokenSeq ref = textproc::tokenize(*labels[i].response);
      bleu1 += bleu_n(hyp, ref, 1);
      bleu4 += bleu_n(hyp, ref, 4);
      rouge += rouge_l(hyp, ref);
    }
  }
  if (report.knowledge_turns > 0) {
    const double denom = static_cast<double>(report.knowledge_turns);
    report.selection_r_at_1 = r1 / denom;
    report.selection_r_at_5 = r5 / denom;
    report.generation_bleu1 = bleu1 / denom;
    report.generation_bleu4 = bleu4 / denom;
    report.generation_rouge_l = rouge / denom;
  }
  return report;
}

std::string MetricReport::to_json() const {
  json j = {
      {"detection",
       {{"precision", detection_precision},
        {"recall", detection_recall},
        {"f1", detection_f1}}},
      {"selection",
       {{"r_at_1", selection_r_at_1}, {"r_at_5", selection_r_at_5}}},
      {"generation",
       {{"bleu1", generation_bleu1},
        {"bleu4", generation_bleu4},
        {"rouge_l", generation_rouge_l}}},
      {"counts",
       {{"total_turns", total_turns}, {"knowledge_turns", knowledge_turns}}},
  };
  return j.dump(2);
}

std::string predictions_to_json(const std::vector<PredictionRecord>& preds) {
  json root = json::array();
  for (const PredictionRecord& rec : preds) {
    json jrec = {{"target", rec.target}};
    if (rec.target) {
      json refs = json::array();
      for (const corpus::SnippetRef& ref : rec.snippets) {
        refs.push_back({{"domain", ref.domain},
                        {"entity_id", ref.entity_id},
                        {"doc_id", ref.doc_id}});
      }
      jrec["knowledge"] = std::move(refs);
      if (rec.response.has_value()) jrec["response"] = *rec.response;
    }
    root.push_back(std::move(jrec));
  }
  return root.dump(2);
}

std::vector<PredictionRecord> parse_predictions(const std::string& text) {
  json root = json::parse(text);
  if (!root.is_array()) {
    throw corpus::LoadError("predictions: top level must be an array");
  }
  std::vector<PredictionRecord> preds;
  for (const json& jrec : root) {
    PredictionRecord rec;
    rec.target = jrec.at("target").get<bool>();
    if (jrec.contains("knowledge")) {
      for (const json& jref : jrec["knowledge"]) {
        corpus::SnippetRef ref;
        ref.domain = jref.at("domain").get<std::string>();
        const json& jid = jref.at("entity_id");
        ref.entity_id = jid.is_string()
                            ? jid.get<std::string>()
                            : std::to_string(jid.get<long long>());
        const json& jdoc = jref.at("doc_id");
        ref.doc_id = jdoc.is_string() ? jdoc.get<std::string>()
                                      : std::to_string(jdoc.get<long long>());
        rec.snippets.push_back(std::move(ref));
      }
    }
    if (jrec.contains("response") && jrec["response"].is_string()) {
      rec.response = jrec["response"].get<std::string>();
    }
    preds.push_back(std::move(rec));
  }
  return preds;
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw corpus::LoadError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_predictions(buf.str());
}

}  // namespace kgdialog::metrics
