#include "kgdialog/detector.hpp"

#include <algorithm>
#include <stdexcept>

#include "kgdialog/metrics.hpp"

namespace kgdialog::detector {

using neural::Tape;
using neural::Tensor;
using neural::Vocab;

textproc::TokenSeq context_tokens(const corpus::Dialog& context,
                                  std::size_t max_tokens) {
  textproc::TokenSeq all;
  for (const corpus::Turn& turn : context.turns) {
    textproc::TokenSeq tokens = textproc::tokenize(turn.text);
    all.insert(all.end(), tokens.begin(), tokens.end());
  }
  return textproc::truncate_last(all, max_tokens);
}

double detect(const DetectorModel& model, const corpus::Dialog& context) {
  const Tensor embedding =
      neural::encode_text(model.encoder, context_tokens(context));
  return neural::classify(embedding, model.head);
}

double ensemble_probability(const DetectorEnsemble& ensemble,
                            const corpus::Dialog& context) {
  if (ensemble.models.empty()) {
    throw std::invalid_argument("ensemble_probability: empty ensemble");
  }
  double sum = 0.0;
  for (const DetectorModel& model : ensemble.models) {
    sum += detect(model, context);
  }
  return sum / static_cast<double>(ensemble.models.size());
}

bool ensemble_detect(const DetectorEnsemble& ensemble,
                     const corpus::Dialog& context, double threshold) {
  if (ensemble.models.empty()) {
    throw std::invalid_argument("ensemble_detect: empty ensemble");
  }
  if (ensemble.vote_rule == VoteRule::kMeanProbability) {
    return ensemble_probability(ensemble, context) >= threshold;
  }
  std::size_t votes = 0;
  for (const DetectorModel& model : ensemble.models) {
    if (detect(model, context) >= threshold) ++votes;
  }
  return 2 * votes > ensemble.models.size();
}

double tune_threshold(const std::vector<double>& probs,
                      const std::vector<bool>& labels) {
  if (probs.size() != labels.size() || probs.empty()) {
    throw std::invalid_argument("tune_threshold: probs/labels must align");
  }
  const bool has_pos = std::find(labels.begin(), labels.end(), true) !=
                       labels.end();
  const bool has_neg = std::find(labels.begin(), labels.end(), false) !=
                       labels.end();
  if (!has_pos || !has_neg) {
    throw std::invalid_argument("tune_threshold: labels must contain both classes");
  }
  double best_t = 0.01;
  double best_f1 = -1.0;
  for (int i = 1; i <= 99; ++i) {
    const double t = static_cast<double>(i) / 100.0;
    std::vector<bool> preds(probs.size());
    for (std::size_t j = 0; j < probs.size(); ++j) preds[j] = probs[j] >= t;
    const auto [p, r, f1] = metrics::prf1(preds, labels);
    (void)p;
    (void)r;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_t = t;
    }
  }
  return best_t;
}

namespace {

struct Example {
  textproc::TokenSeq tokens;
  bool target = false;
};

std::vector<Example> make_examples(const corpus::Split& split) {
  if (split.dialogs.size() != split.labels.size()) {
    throw std::invalid_argument("train_detector: dialogs/labels mismatch");
  }
  std::vector<Example> out;
  out.reserve(split.dialogs.size());
  for (std::size_t i = 0; i < split.dialogs.size(); ++i) {
    out.push_back({context_tokens(split.dialogs[i]), split.labels[i].target});
  }
  return out;
}

double validation_f1(const DetectorModel& model, const corpus::Split& val) {
  std::vector<bool> preds, golds;
  preds.reserve(val.dialogs.size());
  for (std::size_t i = 0; i < val.dialogs.size(); ++i) {
    preds.push_back(detect(model, val.dialogs[i]) >= 0.5);
    golds.push_back(val.labels[i].target);
  }
  return std::get<2>(metrics::prf1(preds, golds));
}

}  // namespace

DetectorModel train_detector(const corpus::Split& train,
                             const corpus::Split& val,
                             const EncoderConfig& enc_cfg,
                             const neural::TrainConfig& train_cfg,
                             const neural::FocalConfig& focal) {
  std::vector<Example> examples = make_examples(train);
  const bool has_pos =
      std::any_of(examples.begin(), examples.end(),
                  [](const Example& e) { return e.target; });
  const bool has_neg =
      std::any_of(examples.begin(), examples.end(),
                  [](const Example& e) { return !e.target; });
  if (!has_pos || !has_neg) {
    throw std::invalid_argument(
        "train_detector: training data must contain both classes");
  }

  std::vector<textproc::TokenSeq> docs;
  docs.reserve(examples.size());
  for (const Example& e : examples) docs.push_back(e.tokens);
  Vocab vocab =
      Vocab::build(docs, enc_cfg.vocab_min_freq, enc_cfg.vocab_max_size);

  neural::Rng rng(train_cfg.seed);
  DetectorModel model;
  model.encoder = neural::EncoderParams::init(std::move(vocab), enc_cfg.dim, rng);
  model.head = neural::ClassifierHead::init(enc_cfg.dim, rng);

  auto params = model.encoder.parameters();
  for (auto& p : model.head.parameters()) params.push_back(p);
  neural::AdamOptimizer optimizer(params, train_cfg);

  DetectorModel best = model;
  double best_f1 = -1.0;
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    // Per-epoch shuffle derived from the seed keeps runs reproducible.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.index(i)]);
    }
    for (std::size_t start = 0; start < order.size();
         start += train_cfg.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + train_cfg.batch_size);
      Tape tape;
      Tape::Var emb = tape.leaf(model.encoder.embedding);
      Tape::Var pw = tape.leaf(model.encoder.proj_w);
      Tape::Var pb = tape.leaf(model.encoder.proj_b);
      Tape::Var hw = tape.leaf(model.head.w);
      Tape::Var hb = tape.leaf(model.head.b);
      Tape::Var loss;
      for (std::size_t i = start; i < end; ++i) {
        const Example& ex = examples[order[i]];
        Tape::Var x = neural::encode_text(tape, emb, pw, pb,
                                          model.encoder.vocab, ex.tokens);
        Tape::Var p = neural::classify(tape, x, hw, hb);
        Tape::Var l = neural::binary_focal_loss(tape, p, ex.target,
                                                focal.gamma);
        loss = loss.valid() ? tape.add(loss, l) : l;
      }
      loss = tape.scale(loss, 1.0 / static_cast<double>(end - start));
      tape.backward(loss);
      optimizer.step({tape.grad(emb), tape.grad(pw), tape.grad(pb),
                      tape.grad(hw), tape.grad(hb)});
    }
    const double f1 = validation_f1(model, val);
    if (f1 > best_f1) {
      best_f1 = f1;
      best = model;
    }
  }
  return best;
}

DetectorEnsemble train_detector_ensemble(const corpus::Split& train,
                                         const corpus::Split& val,
                                         const EncoderConfig& enc_cfg,
                                         const neural::TrainConfig& train_cfg,
                                         const neural::FocalConfig& focal,
                                         std::size_t members) {
  if (members == 0 || members % 2 == 0) {
    throw std::invalid_argument(
        "train_detector_ensemble: member count must be odd");
  }
  DetectorEnsemble ensemble;
  for (std::size_t i = 0; i < members; ++i) {
    neural::TrainConfig cfg = train_cfg;
    cfg.seed = train_cfg.seed + i;
    ensemble.models.push_back(train_detector(train, val, enc_cfg, cfg, focal));
  }
  return ensemble;
}

}  // namespace kgdialog::detector
