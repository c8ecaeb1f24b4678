#include "kgdialog/entity_filter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace kgdialog::entity_filter {

using textproc::TokenSeq;

namespace {

std::size_t derived_threshold(double divisor, std::size_t n_utt) {
  const double raw = static_cast<double>(n_utt) / divisor;
  const auto rounded = static_cast<std::size_t>(std::llround(raw));
  return std::max<std::size_t>(1, rounded);
}

// df restricted to a fixed key set; avoids materializing counts for every
// high-arity N-gram of a large corpus.
void count_df_for_keys(const std::vector<TokenSeq>& docs,
                       const std::set<std::size_t>& n_values,
                       std::unordered_map<std::string, std::size_t>& counts) {
  std::unordered_map<std::string, std::size_t> seen_at;
  for (std::size_t doc = 0; doc < docs.size(); ++doc) {
    for (std::size_t n : n_values) {
      if (docs[doc].size() < n) continue;
      for (std::size_t i = 0; i + n <= docs[doc].size(); ++i) {
        std::string key =
            textproc::join_tokens(std::span(docs[doc]).subspan(i, n));
        auto it = counts.find(key);
        if (it == counts.end()) continue;
        auto [seen, fresh] = seen_at.try_emplace(std::move(key), doc);
        if (fresh || seen->second != doc) {
          seen->second = doc;
          ++it->second;
        }
      }
    }
  }
}

}  // namespace

std::size_t FilterConfig::t1(std::size_t n_utt) const {
  return t1_override.value_or(derived_threshold(t1_divisor, n_utt));
}

std::size_t FilterConfig::t3(std::size_t n_utt) const {
  return t3_override.value_or(derived_threshold(t3_divisor, n_utt));
}

void EntityPatterns::rebuild_index() {
  index.clear();
  for (const auto& [key, grams] : exact) {
    for (const std::string& gram : grams) index[gram].push_back(key);
  }
  for (const auto& [key, grams] : fuzzy) {
    for (const std::string& gram : grams) {
      auto& keys = index[gram];
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
        keys.push_back(key);
      }
    }
  }
  for (auto& [gram, keys] : index) std::sort(keys.begin(), keys.end());
}

std::vector<TokenSeq> split_utterances(
    const std::vector<corpus::Dialog>& dialogs) {
  std::vector<TokenSeq> out;
  for (const corpus::Dialog& dialog : dialogs) {
    for (const corpus::Turn& turn : dialog.turns) {
      out.push_back(textproc::tokenize(turn.text));
    }
  }
  return out;
}

EntityPatterns build_patterns(const corpus::KnowledgeBase& kb,
                              const std::vector<TokenSeq>& utterances,
                              const FilterConfig& cfg) {
  if (utterances.empty()) {
    throw std::invalid_argument("build_patterns: utterance list is empty");
  }
  EntityPatterns patterns;
  patterns.n_utt = utterances.size();
  patterns.thresholds = {cfg.t1(patterns.n_utt), cfg.t2,
                         cfg.t3(patterns.n_utt)};
  patterns.match_n = cfg.exact_n;
  patterns.match_n.insert(cfg.fuzzy_n.begin(), cfg.fuzzy_n.end());

  // Candidate N-grams per entity, from the entity names.
  std::map<EntityKey, std::vector<std::string>> name_grams;
  std::vector<TokenSeq> name_docs;
  for (const auto& [key, info] : kb.entities()) {
    if (!info.name.has_value()) {
      patterns.star_keys.push_back(key);
      continue;
    }
    const TokenSeq tokens = textproc::tokenize(*info.name);
    name_docs.push_back(tokens);
    auto& grams = name_grams[key];
    for (std::size_t n : cfg.exact_n) {
      for (const textproc::NGram& g : textproc::ngrams(tokens, n)) {
        grams.push_back(g.text);
      }
    }
  }

  // df over utterances only for N-grams that can enter some W_j.
  std::unordered_map<std::string, std::size_t> df_utt;
  for (const auto& [key, grams] : name_grams) {
    for (const std::string& g : grams) df_utt.emplace(g, 0);
  }
  count_df_for_keys(utterances, cfg.exact_n, df_utt);

  textproc::DocFreqTable df_names;
  if (!name_docs.empty()) {
    df_names = textproc::build_df_table(name_docs, cfg.exact_n);
  }

  const std::size_t t1 = patterns.thresholds.t1;
  const std::size_t t2 = patterns.thresholds.t2;
  for (const auto& [key, grams] : name_grams) {
    std::set<std::string>& w = patterns.exact[key];
    for (const std::string& g : grams) {
      if (df_utt[g] < t1 && df_names.df(g) < t2) w.insert(g);
    }
  }
  patterns.rebuild_index();
  return patterns;
}

void fuzzy_extend(EntityPatterns& patterns,
                  const std::vector<TokenSeq>& utterances,
                  const FilterConfig& cfg) {
  const std::size_t t3 = patterns.thresholds.t3;

  textproc::DocFreqTable df_fuzzy =
      textproc::build_df_table(utterances, cfg.fuzzy_n);

  // Distinct exact patterns per arity, with the entities that own them.
  struct PatternGroup {
    std::string text;
    std::vector<EntityKey> owners;
  };
  std::map<std::size_t, std::vector<PatternGroup>> by_arity;
  {
    std::map<std::size_t, std::map<std::string, std::vector<EntityKey>>> tmp;
    for (const auto& [key, grams] : patterns.exact) {
      for (const std::string& g : grams) {
        const std::size_t arity =
            static_cast<std::size_t>(std::count(g.begin(), g.end(), ' ')) + 1;
        if (!cfg.fuzzy_n.contains(arity)) continue;
        tmp[arity][g].push_back(key);
      }
    }
    for (auto& [arity, groups] : tmp) {
      for (auto& [text, owners] : groups) {
        by_arity[arity].push_back({text, std::move(owners)});
      }
    }
  }

  for (const auto& [canonical, df] : df_fuzzy.counts) {
    if (df >= t3) continue;
    const std::size_t arity =
        static_cast<std::size_t>(
            std::count(canonical.begin(), canonical.end(), ' ')) +
        1;
    auto dit = cfg.max_edit_distance.find(arity);
    auto git = by_arity.find(arity);
    if (dit == cfg.max_edit_distance.end() || git == by_arity.end()) continue;
    const std::size_t max_d = dit->second;
    for (const PatternGroup& group : git->second) {
      const std::size_t len_a = canonical.size(), len_b = group.text.size();
      if ((len_a > len_b ? len_a - len_b : len_b - len_a) > max_d) continue;
      if (textproc::edit_distance_bounded(canonical, group.text, max_d) >
          max_d) {
        continue;
      }
      for (const EntityKey& key : group.owners) {
        if (!patterns.exact[key].contains(canonical)) {
          patterns.fuzzy[key].insert(canonical);
        }
      }
    }
  }
  patterns.rebuild_index();
}

CandidateSet match_entities(const corpus::Dialog& context,
                            const EntityPatterns& patterns,
                            const corpus::KnowledgeBase& kb) {
  CandidateSet out;
  for (const corpus::Turn& turn : context.turns) {
    const TokenSeq tokens = textproc::tokenize(turn.text);
    for (std::size_t n : patterns.match_n) {
      if (tokens.size() < n) continue;
      for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        const std::string gram =
            textproc::join_tokens(std::span(tokens).subspan(i, n));
        auto it = patterns.index.find(gram);
        if (it == patterns.index.end()) continue;
        out.insert(it->second.begin(), it->second.end());
      }
    }
  }
  for (const EntityKey& key : kb.star_keys()) out.insert(key);
  return out;
}

CandidateSet tfidf_prefilter(const corpus::Dialog& context,
                             const corpus::KnowledgeBase& kb, std::size_t k) {
  if (k == 0) throw std::invalid_argument("tfidf_prefilter: k must be >= 1");
  std::vector<TokenSeq> name_docs;
  std::vector<EntityKey> named;
  for (const auto& [key, info] : kb.entities()) {
    if (!info.name.has_value()) continue;
    name_docs.push_back(textproc::tokenize(*info.name));
    named.push_back(key);
  }
  CandidateSet out;
  for (const EntityKey& key : kb.star_keys()) out.insert(key);
  if (named.empty()) return out;

  const textproc::DocFreqTable table = textproc::build_df_table(name_docs, {1});
  TokenSeq history;
  for (const corpus::Turn& turn : context.turns) {
    const TokenSeq tokens = textproc::tokenize(turn.text);
    history.insert(history.end(), tokens.begin(), tokens.end());
  }
  const textproc::TfIdfVector query = textproc::tfidf_vector(history, table);

  std::vector<std::pair<double, std::size_t>> scored;  // (-score, index)
  scored.reserve(named.size());
  for (std::size_t i = 0; i < named.size(); ++i) {
    const textproc::TfIdfVector name_vec =
        textproc::tfidf_vector(name_docs[i], table);
    scored.emplace_back(-textproc::cosine(query, name_vec), i);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) {
                     return a.first < b.first;
                   });
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) {
    out.insert(named[scored[i].second]);
  }
  return out;
}

FilterStats filter_stats(const std::vector<corpus::Dialog>& dialogs,
                         const std::vector<corpus::TurnLabel>& labels,
                         const EntityPatterns& patterns,
                         const corpus::KnowledgeBase& kb) {
  if (dialogs.size() != labels.size()) {
    throw std::invalid_argument("filter_stats: dialogs/labels size mismatch");
  }
  FilterStats stats;
  stats.total_entities = kb.entity_count();
  std::size_t matched_sum = 0;
  std::size_t recalled = 0;
  for (std::size_t i = 0; i < dialogs.size(); ++i) {
    if (!labels[i].target) continue;
    ++stats.knowledge_turns;
    const CandidateSet candidates = match_entities(dialogs[i], patterns, kb);
    matched_sum += candidates.size();
    const corpus::SnippetRef& gold = labels[i].snippets.front();
    if (candidates.contains({gold.domain, gold.entity_id})) ++recalled;
  }
  if (stats.knowledge_turns > 0) {
    stats.avg_matched = static_cast<double>(matched_sum) /
                        static_cast<double>(stats.knowledge_turns);
    stats.recall = static_cast<double>(recalled) /
                   static_cast<double>(stats.knowledge_turns);
  }
  return stats;
}

}  // namespace kgdialog::entity_filter
