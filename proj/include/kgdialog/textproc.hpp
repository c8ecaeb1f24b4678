#pragma once
// Word-level text processing: tokenization, N-grams, document frequencies,
// Levenshtein distance, TF-IDF vectors and cosine similarity.

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgdialog::textproc {

// Ordered list of lowercase tokens. Tokens never contain separators and are
// never empty.
using TokenSeq = std::vector<std::string>;

// An N-gram in canonical form: tokens joined by single spaces.
struct NGram {
  std::string text;
  std::size_t arity = 0;

  bool operator==(const NGram&) const = default;
};

// Maximal runs of ASCII letters/digits (lowercased) and non-ASCII bytes form
// tokens; every other character is a separator. Case folding is ASCII-only,
// so the result is locale-independent.
TokenSeq tokenize(std::string_view text);

// All contiguous windows of length n, in source order. Empty when the
// sequence is shorter than n.
std::vector<NGram> ngrams(const TokenSeq& seq, std::size_t n);

// Canonical text form of one window without materializing all of them.
std::string join_tokens(std::span<const std::string> tokens);

// Character-level Levenshtein distance with unit insert/delete/substitute.
std::size_t edit_distance(std::string_view a, std::string_view b);

// Like edit_distance but may bail out early: any return value > bound only
// guarantees distance > bound.
std::size_t edit_distance_bounded(std::string_view a, std::string_view b,
                                  std::size_t bound);

// Per-document N-gram counts: an N-gram occurring twice in one document
// still counts once. num_docs is always positive.
struct DocFreqTable {
  std::unordered_map<std::string, std::size_t> counts;
  std::size_t num_docs = 0;

  std::size_t df(const std::string& canonical) const {
    auto it = counts.find(canonical);
    return it == counts.end() ? 0 : it->second;
  }
};

// Builds per-document frequencies over the requested arities. Throws
// std::invalid_argument on an empty document list.
DocFreqTable build_df_table(const std::vector<TokenSeq>& docs,
                            const std::set<std::size_t>& n_values);

// Sparse unigram vector; absent terms weigh 0.
struct TfIdfVector {
  std::unordered_map<std::string, double> weights;

  double norm() const;
};

// weight(t) = tf(t) * ln((1 + num_docs) / (1 + df(t))); unseen terms use
// df = 0. The table must have been built over unigrams.
TfIdfVector tfidf_vector(const TokenSeq& seq, const DocFreqTable& table);

// Cosine similarity in [-1, 1]; defined as 0 when either norm is 0.
double cosine(const TfIdfVector& u, const TfIdfVector& v);
double cosine(std::span<const double> u, std::span<const double> v);

// Keeps the last n tokens of a sequence.
TokenSeq truncate_last(const TokenSeq& seq, std::size_t n);

}  // namespace kgdialog::textproc
