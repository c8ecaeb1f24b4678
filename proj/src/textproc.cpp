#include "kgdialog/textproc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kgdialog::textproc {

namespace {

inline bool is_token_byte(unsigned char c) {
  // Non-ASCII bytes stay inside tokens so UTF-8 sequences are not split.
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c >= 0x80;
}

inline char fold(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a')
                                : static_cast<char>(c);
}

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::string current;
  for (unsigned char c : text) {
    if (is_token_byte(c)) {
      current.push_back(fold(c));
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::vector<NGram> ngrams(const TokenSeq& seq, std::size_t n) {
  std::vector<NGram> out;
  if (n == 0) throw std::invalid_argument("ngrams: n must be >= 1");
  if (seq.size() < n) return out;
  out.reserve(seq.size() - n + 1);
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    out.push_back({join_tokens(std::span(seq).subspan(i, n)), n});
  }
  return out;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  const std::size_t la = a.size(), lb = b.size();
  std::vector<std::size_t> prev(lb + 1), cur(lb + 1);
  for (std::size_t j = 0; j <= lb; ++j) prev[j] = j;
  for (std::size_t i = 0; i < la; ++i) {
    cur[0] = i + 1;
    for (std::size_t j = 0; j < lb; ++j) {
      const std::size_t sub = prev[j] + (a[i] == b[j] ? 0 : 1);
      cur[j + 1] = std::min({cur[j] + 1, prev[j + 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[lb];
}

std::size_t edit_distance_bounded(std::string_view a, std::string_view b,
                                  std::size_t bound) {
  const std::size_t la = a.size(), lb = b.size();
  const std::size_t diff = la > lb ? la - lb : lb - la;
  if (diff > bound) return bound + 1;
  std::vector<std::size_t> prev(lb + 1), cur(lb + 1);
  for (std::size_t j = 0; j <= lb; ++j) prev[j] = j;
  for (std::size_t i = 0; i < la; ++i) {
    cur[0] = i + 1;
    std::size_t row_min = cur[0];
    for (std::size_t j = 0; j < lb; ++j) {
      const std::size_t sub = prev[j] + (a[i] == b[j] ? 0 : 1);
      cur[j + 1] = std::min({cur[j] + 1, prev[j + 1] + 1, sub});
      row_min = std::min(row_min, cur[j + 1]);
    }
    if (row_min > bound) return bound + 1;
    std::swap(prev, cur);
  }
  return prev[lb];
}

DocFreqTable build_df_table(const std::vector<TokenSeq>& docs,
                            const std::set<std::size_t>& n_values) {
  if (docs.empty()) {
    throw std::invalid_argument("build_df_table: document list is empty");
  }
  DocFreqTable table;
  table.num_docs = docs.size();
  std::unordered_map<std::string, std::size_t> seen_at;  // canonical -> doc id
  seen_at.reserve(64);
  for (std::size_t doc = 0; doc < docs.size(); ++doc) {
    const TokenSeq& tokens = docs[doc];
    for (std::size_t n : n_values) {
      if (n == 0 || tokens.size() < n) continue;
      for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = join_tokens(std::span(tokens).subspan(i, n));
        auto [it, fresh] = seen_at.try_emplace(std::move(key), doc);
        if (fresh || it->second != doc) {
          it->second = doc;
          ++table.counts[it->first];
        }
      }
    }
  }
  return table;
}

double TfIdfVector::norm() const {
  double sum = 0.0;
  for (const auto& [term, w] : weights) sum += w * w;
  return std::sqrt(sum);
}

TfIdfVector tfidf_vector(const TokenSeq& seq, const DocFreqTable& table) {
  TfIdfVector vec;
  std::unordered_map<std::string, std::size_t> tf;
  for (const auto& tok : seq) ++tf[tok];
  for (const auto& [term, count] : tf) {
    const double idf = std::log((1.0 + static_cast<double>(table.num_docs)) /
                                (1.0 + static_cast<double>(table.df(term))));
    const double w = static_cast<double>(count) * idf;
    if (w != 0.0) vec.weights.emplace(term, w);
  }
  return vec;
}

double cosine(const TfIdfVector& u, const TfIdfVector& v) {
  const double nu = u.norm(), nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  // Iterate the smaller map.
  const TfIdfVector& small = u.weights.size() <= v.weights.size() ? u : v;
  const TfIdfVector& large = u.weights.size() <= v.weights.size() ? v : u;
  double dot = 0.0;
  for (const auto& [term, w] : small.weights) {
    auto it = large.weights.find(term);
    if (it != large.weights.end()) dot += w * it->second;
  }
  return dot / (nu * nv);
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw std::invalid_argument("cosine: dimension mismatch");
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

TokenSeq truncate_last(const TokenSeq& seq, std::size_t n) {
  if (seq.size() <= n) return seq;
  return TokenSeq(seq.end() - static_cast<std::ptrdiff_t>(n), seq.end());
}

}  // namespace kgdialog::textproc
