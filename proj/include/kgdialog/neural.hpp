#pragma once
// The trainable core shared by the detector, the rankers and the generator:
// a token vocabulary with reserved ids, the mean-pooling text encoder that
// stands in for a pre-trained Transformer, a sigmoid classifier head, the
// focal and cosine-triplet losses with semi-hard negative mining, Adam with
// linear warmup, and a finite-difference gradient checker.

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgdialog/autodiff.hpp"
#include "kgdialog/tensor.hpp"
#include "kgdialog/textproc.hpp"

namespace kgdialog::neural {

// Reserved ids occupy the first slots of every vocabulary.
class Vocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kSep = 2;
  static constexpr std::size_t kEos = 3;
  static constexpr std::size_t kBos = 4;
  static constexpr std::size_t kReserved = 5;

  Vocab();

  // Frequency-ordered build (ties on the token string). min_freq filters
  // rare tokens; max_size 0 means unbounded.
  static Vocab build(const std::vector<textproc::TokenSeq>& docs,
                     std::size_t min_freq = 1, std::size_t max_size = 0);
  static Vocab from_tokens(const std::vector<std::string>& tokens_in_order);

  std::size_t id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(std::size_t id) const;
  std::size_t size() const { return tokens_.size(); }

  std::vector<std::size_t> ids(const textproc::TokenSeq& tokens) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

struct EncoderParams {
  Vocab vocab;
  Tensor embedding;  // [V x d]
  Tensor proj_w;     // [d x d]
  Tensor proj_b;     // [d]

  std::size_t dim() const { return proj_b.size(); }
  static EncoderParams init(Vocab vocab, std::size_t dim, Rng& rng);

  std::vector<std::pair<std::string, Tensor*>> parameters();
};

struct ClassifierHead {
  Tensor w;  // [d]
  Tensor b;  // scalar

  static ClassifierHead init(std::size_t dim, Rng& rng);
  std::vector<std::pair<std::string, Tensor*>> parameters();
};

struct FocalConfig {
  double gamma = 2.0;
};

struct TripletConfig {
  double alpha = 0.2;   // margin
  double beta = 0.01;   // lower mining bound
};

struct TrainConfig {
  double lr = 1e-4;
  std::size_t warmup_steps = 500;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// tanh(proj_w . mean(embedding rows) + proj_b); the PAD row is the mean of
// an empty input. Unknown tokens map to UNK.
Tape::Var encode_text(Tape& tape, Tape::Var embedding, Tape::Var proj_w,
                      Tape::Var proj_b, const Vocab& vocab,
                      const textproc::TokenSeq& tokens);
Tensor encode_text(const EncoderParams& params,
                   const textproc::TokenSeq& tokens);

// sigmoid(w . x + b)
Tape::Var classify(Tape& tape, Tape::Var x, Tape::Var w, Tape::Var b);
double classify(const Tensor& embedding, const ClassifierHead& head);

// -sum_i t_i (1 - p_i)^gamma ln(p_i) with the log clamped at 1e-12.
// p must sum to 1 within 1e-9 and t must be one-hot.
double focal_loss(std::span<const double> p, std::span<const double> t,
                  double gamma);
double binary_focal_loss(double p, bool target, double gamma);
double binary_cross_entropy(double p, bool target);

// Tape form over a predicted probability (binary case).
Tape::Var binary_focal_loss(Tape& tape, Tape::Var p, bool target,
                            double gamma);

// max(0, sim(a,n) - sim(a,p) + alpha), cosine similarities. Throws
// std::invalid_argument on zero-norm input.
double triplet_cosine_loss(const Tensor& anchor, const Tensor& positive,
                           const Tensor& negative, double alpha);
Tape::Var triplet_cosine_loss(Tape& tape, Tape::Var anchor,
                              Tape::Var positive, Tape::Var negative,
                              double alpha);

// Index of the negative with the smallest gap sim(a,p) - sim(a,n) inside
// the open band (beta, alpha); nullopt when the band is empty.
std::optional<std::size_t> semi_hard_mine(const Tensor& anchor,
                                          const Tensor& positive,
                                          std::span<const Tensor> negatives,
                                          const TripletConfig& cfg);

struct AdamState {
  Tensor m;
  Tensor v;
};

// Standard Adam with effective lr(t) = lr * min(1, t / warmup_steps).
// step_index starts at 1. Throws on non-finite gradients.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state,
               std::size_t step_index, const TrainConfig& cfg);

double warmup_lr(double lr, std::size_t step_index, std::size_t warmup_steps);

// Named parameter tensors with their Adam states; feed gradients in the
// same order every step for bit-reproducible training.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<std::pair<std::string, Tensor*>> params,
                TrainConfig cfg);

  // grads must align with the parameter list (same order, same shapes).
  void step(const std::vector<Tensor>& grads);
  std::size_t steps_taken() const { return step_; }
  const std::vector<std::pair<std::string, Tensor*>>& params() const {
    return params_;
  }

 private:
  std::vector<std::pair<std::string, Tensor*>> params_;
  std::vector<AdamState> states_;
  TrainConfig cfg_;
  std::size_t step_ = 0;
};

// Central finite differences against an analytic gradient, coordinate-wise
// over the given parameter storage. Returns the max relative error
// |g_a - g_f| / max(1e-8, |g_a| + |g_f|).
double grad_check(const std::function<double()>& loss,
                  std::span<double* const> coords,
                  std::span<const double> analytic, double epsilon = 1e-5);

}  // namespace kgdialog::neural
