#pragma once
// Statistical entity-candidate generation. Exact matching keeps N-grams of
// an entity name that are rare both in the utterance corpus (df < t1) and
// across entity names (df < t2); the fuzzy extension admits corpus N-grams
// within a small edit distance of an exact pattern, provided they are rare
// enough to look like typos (df < t3). Entity-less domains are always part
// of the candidate set.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kgdialog/corpus.hpp"
#include "kgdialog/textproc.hpp"

namespace kgdialog::entity_filter {

using corpus::EntityKey;

struct FilterConfig {
  // Utterance-df ceilings derive from the split size unless overridden with
  // an absolute value. Derived ceilings round to the nearest integer with a
  // minimum of 1; all ceilings apply as strict upper bounds (df < t).
  double t1_divisor = 100.0;
  double t3_divisor = 2000.0;
  std::optional<std::size_t> t1_override;
  std::optional<std::size_t> t3_override;
  std::size_t t2 = 5;  // entity-name-df ceiling

  std::map<std::size_t, std::size_t> max_edit_distance = {{1, 2}, {2, 1}};
  std::set<std::size_t> exact_n = {1, 2, 3, 4};
  std::set<std::size_t> fuzzy_n = {1, 2};

  std::size_t t1(std::size_t n_utt) const;
  std::size_t t3(std::size_t n_utt) const;
};

struct FilterThresholds {
  std::size_t t1 = 0;
  std::size_t t2 = 0;
  std::size_t t3 = 0;
};

// Per-entity match sets plus an inverted index canonical N-gram -> entities.
struct EntityPatterns {
  std::map<EntityKey, std::set<std::string>> exact;  // W_j
  std::map<EntityKey, std::set<std::string>> fuzzy;  // W~_j
  std::vector<EntityKey> star_keys;                  // always-included
  std::set<std::size_t> match_n;                     // arities scanned
  std::size_t n_utt = 0;
  FilterThresholds thresholds;

  std::map<std::string, std::vector<EntityKey>> index;
  void rebuild_index();
};

// W_j over the exact arities. Throws std::invalid_argument when the
// utterance list is empty (t1/t3 need a positive N_utt).
EntityPatterns build_patterns(const corpus::KnowledgeBase& kb,
                              const std::vector<textproc::TokenSeq>& utterances,
                              const FilterConfig& cfg);

// Fills the fuzzy sets in place and refreshes the index. Candidate N-grams
// come from the whole utterance corpus, so the pattern sets stay
// context-independent.
void fuzzy_extend(EntityPatterns& patterns,
                  const std::vector<textproc::TokenSeq>& utterances,
                  const FilterConfig& cfg);

// Candidate entities for a dialog context; ordered set for deterministic
// iteration. Every "*" key is always a member.
using CandidateSet = std::set<EntityKey>;

// Scans every utterance of the dialog against the inverted index.
CandidateSet match_entities(const corpus::Dialog& context,
                            const EntityPatterns& patterns,
                            const corpus::KnowledgeBase& kb);

// The superseded prefilter: top-k named entities by TF-IDF cosine between
// the dialog history and the entity name, plus the "*" keys. Ties break on
// entity key order.
CandidateSet tfidf_prefilter(const corpus::Dialog& context,
                             const corpus::KnowledgeBase& kb,
                             std::size_t k = 10);

struct FilterStats {
  std::size_t total_entities = 0;
  std::size_t knowledge_turns = 0;
  double avg_matched = 0.0;
  double recall = 0.0;
};

// Candidate-set statistics over the knowledge-seeking turns of a split.
// Gold entities in entity-less domains always count as recalled.
FilterStats filter_stats(const std::vector<corpus::Dialog>& dialogs,
                         const std::vector<corpus::TurnLabel>& labels,
                         const EntityPatterns& patterns,
                         const corpus::KnowledgeBase& kb);

// All turn texts of a split, tokenized, in dialog order. This is the U of
// the df thresholds; N_utt = result size.
std::vector<textproc::TokenSeq> split_utterances(
    const std::vector<corpus::Dialog>& dialogs);

}  // namespace kgdialog::entity_filter
