#include "kgdialog/neural.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kgdialog::neural {

namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> tokens = {"<pad>", "<unk>", "<sep>",
                                                  "<eos>", "<bos>"};
  return tokens;
}

}  // namespace

Vocab::Vocab() {
  tokens_ = reserved_tokens();
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = i;
}

Vocab Vocab::build(const std::vector<textproc::TokenSeq>& docs,
                   std::size_t min_freq, std::size_t max_size) {
  std::map<std::string, std::size_t> freq;
  for (const auto& doc : docs) {
    for (const auto& tok : doc) ++freq[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> entries(freq.begin(),
                                                           freq.end());
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  Vocab vocab;
  for (const auto& [tok, count] : entries) {
    if (count < min_freq) continue;
    if (max_size > 0 && vocab.size() >= kReserved + max_size) break;
    if (vocab.index_.contains(tok)) continue;  // collides with a reserved id
    vocab.index_[tok] = vocab.tokens_.size();
    vocab.tokens_.push_back(tok);
  }
  return vocab;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens_in_order) {
  Vocab vocab;
  if (tokens_in_order.size() < kReserved ||
      !std::equal(reserved_tokens().begin(), reserved_tokens().end(),
                  tokens_in_order.begin())) {
    throw std::invalid_argument("Vocab: reserved tokens missing or reordered");
  }
  for (std::size_t i = kReserved; i < tokens_in_order.size(); ++i) {
    const std::string& tok = tokens_in_order[i];
    if (!vocab.index_.emplace(tok, vocab.tokens_.size()).second) {
      throw std::invalid_argument("Vocab: duplicate token " + tok);
    }
    vocab.tokens_.push_back(tok);
  }
  return vocab;
}

std::size_t Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const {
  return index_.contains(token);
}

const std::string& Vocab::token(std::size_t id) const {
  return tokens_.at(id);
}

std::vector<std::size_t> Vocab::ids(const textproc::TokenSeq& tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& tok : tokens) out.push_back(id(tok));
  return out;
}

EncoderParams EncoderParams::init(Vocab vocab, std::size_t dim, Rng& rng) {
  EncoderParams params;
  params.embedding = random_tensor({vocab.size(), dim}, rng);
  params.proj_w = random_tensor({dim, dim}, rng);
  params.proj_b = Tensor({dim}, 0.0);
  params.vocab = std::move(vocab);
  return params;
}

std::vector<std::pair<std::string, Tensor*>> EncoderParams::parameters() {
  return {{"embedding", &embedding}, {"proj_w", &proj_w}, {"proj_b", &proj_b}};
}

ClassifierHead ClassifierHead::init(std::size_t dim, Rng& rng) {
  ClassifierHead head;
  head.w = random_tensor({dim}, rng);
  head.b = Tensor::scalar(0.0);
  return head;
}

std::vector<std::pair<std::string, Tensor*>> ClassifierHead::parameters() {
  return {{"head_w", &w}, {"head_b", &b}};
}

Tape::Var encode_text(Tape& tape, Tape::Var embedding, Tape::Var proj_w,
                      Tape::Var proj_b, const Vocab& vocab,
                      const textproc::TokenSeq& tokens) {
  std::vector<std::size_t> rows = vocab.ids(tokens);
  if (rows.empty()) rows.push_back(Vocab::kPad);
  Tape::Var pooled = tape.mean_rows(embedding, std::move(rows));
  return tape.tanh(tape.add(tape.matvec(proj_w, pooled), proj_b));
}

Tensor encode_text(const EncoderParams& params,
                   const textproc::TokenSeq& tokens) {
  Tape tape;
  Tape::Var out = encode_text(tape, tape.leaf(params.embedding),
                              tape.leaf(params.proj_w),
                              tape.leaf(params.proj_b), params.vocab, tokens);
  return tape.value(out);
}

Tape::Var classify(Tape& tape, Tape::Var x, Tape::Var w, Tape::Var b) {
  return tape.sigmoid(tape.add(tape.dot(w, x), b));
}

double classify(const Tensor& embedding, const ClassifierHead& head) {
  Tape tape;
  Tape::Var p = classify(tape, tape.leaf(embedding), tape.leaf(head.w),
                         tape.leaf(head.b));
  return tape.scalar_value(p);
}

double focal_loss(std::span<const double> p, std::span<const double> t,
                  double gamma) {
  if (p.size() != t.size() || p.empty()) {
    throw std::invalid_argument("focal_loss: p and t must align");
  }
  double psum = 0.0;
  std::size_t hot = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    psum += p[i];
    if (t[i] == 1.0) {
      ++hot;
    } else if (t[i] != 0.0) {
      throw std::invalid_argument("focal_loss: t must be one-hot");
    }
  }
  if (std::abs(psum - 1.0) > 1e-9) {
    throw std::invalid_argument("focal_loss: p must sum to 1");
  }
  if (hot != 1) throw std::invalid_argument("focal_loss: t must be one-hot");
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (t[i] != 1.0) continue;
    const double pi = std::max(p[i], 1e-12);
    loss -= std::pow(1.0 - p[i], gamma) * std::log(pi);
  }
  return loss;
}

double binary_focal_loss(double p, bool target, double gamma) {
  const double probs[2] = {p, 1.0 - p};
  const double onehot[2] = {target ? 1.0 : 0.0, target ? 0.0 : 1.0};
  return focal_loss(probs, onehot, gamma);
}

double binary_cross_entropy(double p, bool target) {
  return binary_focal_loss(p, target, 0.0);
}

Tape::Var binary_focal_loss(Tape& tape, Tape::Var p, bool target,
                            double gamma) {
  // For a negative target the roles of p and 1-p swap.
  Tape::Var prob = target ? p : tape.add_const(tape.neg(p), 1.0);
  Tape::Var complement = tape.add_const(tape.neg(prob), 1.0);
  Tape::Var weight = tape.pow_const(complement, gamma);
  return tape.neg(tape.mul(weight, tape.log_clamped(prob)));
}

double triplet_cosine_loss(const Tensor& anchor, const Tensor& positive,
                           const Tensor& negative, double alpha) {
  Tape tape;
  Tape::Var loss =
      triplet_cosine_loss(tape, tape.leaf(anchor), tape.leaf(positive),
                          tape.leaf(negative), alpha);
  return tape.scalar_value(loss);
}

Tape::Var triplet_cosine_loss(Tape& tape, Tape::Var anchor,
                              Tape::Var positive, Tape::Var negative,
                              double alpha) {
  for (Tape::Var v : {anchor, positive, negative}) {
    double nrm = 0.0;
    for (double x : tape.value(v).values) nrm += x * x;
    if (nrm == 0.0) {
      throw std::invalid_argument("triplet_cosine_loss: zero-norm input");
    }
  }
  Tape::Var margin = tape.add_const(
      tape.sub(tape.cosine(anchor, negative), tape.cosine(anchor, positive)),
      alpha);
  return tape.relu(margin);
}

std::optional<std::size_t> semi_hard_mine(const Tensor& anchor,
                                          const Tensor& positive,
                                          std::span<const Tensor> negatives,
                                          const TripletConfig& cfg) {
  if (negatives.empty()) {
    throw std::invalid_argument("semi_hard_mine: no negatives");
  }
  const double sim_ap =
      textproc::cosine(std::span<const double>(anchor.values),
                       std::span<const double>(positive.values));
  std::optional<std::size_t> best;
  double best_gap = 0.0;
  for (std::size_t k = 0; k < negatives.size(); ++k) {
    const double sim_an =
        textproc::cosine(std::span<const double>(anchor.values),
                         std::span<const double>(negatives[k].values));
    const double gap = sim_ap - sim_an;
    if (gap <= cfg.beta || gap >= cfg.alpha) continue;
    if (!best.has_value() || gap < best_gap) {
      best = k;
      best_gap = gap;
    }
  }
  return best;
}

double warmup_lr(double lr, std::size_t step_index,
                 std::size_t warmup_steps) {
  if (warmup_steps == 0 || step_index >= warmup_steps) return lr;
  return lr * static_cast<double>(step_index) /
         static_cast<double>(warmup_steps);
}

void adam_step(Tensor& param, const Tensor& grad, AdamState& state,
               std::size_t step_index, const TrainConfig& cfg) {
  if (!param.same_shape(grad)) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  if (step_index == 0) {
    throw std::invalid_argument("adam_step: step_index starts at 1");
  }
  if (!grad.all_finite()) {
    throw std::runtime_error("adam_step: non-finite gradient");
  }
  if (state.m.values.empty()) {
    state.m = Tensor(param.shape, 0.0);
    state.v = Tensor(param.shape, 0.0);
  }
  const double lr_t = warmup_lr(cfg.lr, step_index, cfg.warmup_steps);
  const double t = static_cast<double>(step_index);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bias1;
    const double vhat = state.v[i] / bias2;
    param[i] -= lr_t * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

AdamOptimizer::AdamOptimizer(
    std::vector<std::pair<std::string, Tensor*>> params, TrainConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  states_.resize(params_.size());
}

void AdamOptimizer::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) {
    throw std::invalid_argument("AdamOptimizer: gradient count mismatch");
  }
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_step(*params_[i].second, grads[i], states_[i], step_, cfg_);
  }
}

double grad_check(const std::function<double()>& loss,
                  std::span<double* const> coords,
                  std::span<const double> analytic, double epsilon) {
  if (coords.size() != analytic.size()) {
    throw std::invalid_argument("grad_check: size mismatch");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    double& x = *coords[i];
    const double saved = x;
    x = saved + epsilon;
    const double up = loss();
    x = saved - epsilon;
    const double down = loss();
    x = saved;
    const double fd = (up - down) / (2.0 * epsilon);
    const double rel = std::abs(analytic[i] - fd) /
                       std::max(1e-8, std::abs(analytic[i]) + std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace kgdialog::neural
