#pragma once
// Knowledge-seeking turn detection: a binary classifier over the dialog
// history (truncated to the last 256 tokens), trained with focal loss, plus
// decision-threshold tuning and a bagging ensemble.

#include <cstddef>
#include <vector>

#include "kgdialog/corpus.hpp"
#include "kgdialog/neural.hpp"

namespace kgdialog::detector {

inline constexpr std::size_t kMaxContextTokens = 256;
inline constexpr double kDefaultThreshold = 0.45;  // tuned on validation
inline constexpr double kRecallThreshold = 0.25;   // recall-oriented preset

struct DetectorModel {
  neural::EncoderParams encoder;
  neural::ClassifierHead head;
  double threshold = kDefaultThreshold;  // t_ktd, strictly inside (0,1)
};

enum class VoteRule { kMajority, kMeanProbability };

struct DetectorEnsemble {
  std::vector<DetectorModel> models;  // odd count; distinct seeds
  double threshold = kDefaultThreshold;
  VoteRule vote_rule = VoteRule::kMajority;
};

struct EncoderConfig {
  std::size_t dim = 64;
  std::size_t vocab_min_freq = 1;
  std::size_t vocab_max_size = 0;
};

// Dialog history as one token sequence, truncated to the last max_tokens.
textproc::TokenSeq context_tokens(const corpus::Dialog& context,
                                  std::size_t max_tokens = kMaxContextTokens);

double detect(const DetectorModel& model, const corpus::Dialog& context);

// Strict majority of thresholded member decisions, or mean probability
// against the threshold, depending on the vote rule.
bool ensemble_detect(const DetectorEnsemble& ensemble,
                     const corpus::Dialog& context, double threshold);
double ensemble_probability(const DetectorEnsemble& ensemble,
                            const corpus::Dialog& context);

// Smallest t in {0.01, ..., 0.99} maximizing F1 of (prob >= t).
double tune_threshold(const std::vector<double>& probs,
                      const std::vector<bool>& labels);

// Focal-loss training on (context, target) pairs; keeps the best epoch by
// validation F1 at threshold 0.5. Throws when the training data is
// single-class.
DetectorModel train_detector(const corpus::Split& train,
                             const corpus::Split& val,
                             const EncoderConfig& enc_cfg,
                             const neural::TrainConfig& train_cfg,
                             const neural::FocalConfig& focal);

// Bagging: members trained with seeds seed, seed+1, ...
DetectorEnsemble train_detector_ensemble(const corpus::Split& train,
                                         const corpus::Split& val,
                                         const EncoderConfig& enc_cfg,
                                         const neural::TrainConfig& train_cfg,
                                         const neural::FocalConfig& focal,
                                         std::size_t members);

}  // namespace kgdialog::detector
