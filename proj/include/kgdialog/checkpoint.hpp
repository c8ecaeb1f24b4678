#pragma once
// Versioned JSON checkpoints. The JSON writer emits shortest round-tripping
// doubles, so save/load is bit-exact; a format_version field guards against
// stale files.

#include <string>

#include "kgdialog/detector.hpp"
#include "kgdialog/generator.hpp"
#include "kgdialog/selector.hpp"

namespace kgdialog::checkpoint {

inline constexpr int kFormatVersion = 1;

void save_detector(const std::string& path, const detector::DetectorEnsemble&);
detector::DetectorEnsemble load_detector(const std::string& path);

void save_ranker(const std::string& path, const selector::RankerModel&);
selector::RankerModel load_ranker(const std::string& path);

void save_encoder(const std::string& path, const neural::EncoderParams&);
neural::EncoderParams load_encoder(const std::string& path);

void save_seq2seq(const std::string& path, const generator::Seq2SeqParams&);
generator::Seq2SeqParams load_seq2seq(const std::string& path);

// Peeks at the "kind" field without fully deserializing.
std::string checkpoint_kind(const std::string& path);

}  // namespace kgdialog::checkpoint
