#pragma once
// Two-stage knowledge selection. Stage 1 ranks filtered entity candidates
// against the truncated dialog history; stage 2 ranks the FAQs of the top
// entity against the last user utterance. A bi-encoder variant embeds
// snippets once and ranks by cosine similarity, trained with the cosine
// triplet loss and semi-hard mining.

#include <map>
#include <optional>
#include <vector>

#include "kgdialog/corpus.hpp"
#include "kgdialog/detector.hpp"
#include "kgdialog/entity_filter.hpp"
#include "kgdialog/neural.hpp"

namespace kgdialog::selector {

using corpus::EntityKey;
using corpus::SnippetRef;

enum class RankerStage { kEntity, kKnowledge };

struct RankerModel {
  neural::EncoderParams encoder;
  neural::ClassifierHead head;
  RankerStage stage = RankerStage::kEntity;
};

template <typename Key>
struct Ranked {
  Key key;
  double score = 0.0;
};

using RankedEntities = std::vector<Ranked<EntityKey>>;
using RankedSnippets = std::vector<Ranked<SnippetRef>>;

// Sorts by descending score with ties broken by ascending key.
template <typename Key>
void sort_ranked(std::vector<Ranked<Key>>& entries) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Ranked<Key>& a, const Ranked<Key>& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.key < b.key;
                   });
}

// Model input builders; a single SEP token separates segments. Entity-less
// entities use the domain name in the entity slot.
textproc::TokenSeq entity_input(const corpus::Dialog& context,
                                const EntityKey& key,
                                const corpus::KnowledgeBase& kb);
textproc::TokenSeq knowledge_input(const corpus::Dialog& context,
                                   const corpus::Snippet& snippet);
textproc::TokenSeq snippet_text(const corpus::Snippet& snippet);

RankedEntities rank_entities(const RankerModel& model,
                             const corpus::Dialog& context,
                             const entity_filter::CandidateSet& candidates,
                             const corpus::KnowledgeBase& kb);

// Top-k FAQs of one entity. Throws std::invalid_argument when the entity
// has no snippets (upstream selection fault).
RankedSnippets rank_snippets(const RankerModel& model,
                             const corpus::Dialog& context,
                             const EntityKey& entity,
                             const corpus::KnowledgeBase& kb, std::size_t k);

// Single-stage baseline over the whole knowledge base.
RankedSnippets rank_all_snippets(const RankerModel& model,
                                 const corpus::Dialog& context,
                                 const corpus::KnowledgeBase& kb,
                                 std::size_t k);

// Uniform draw from the non-gold candidates; nullopt when only the gold is
// available (the training example is skipped).
std::optional<EntityKey> sample_negative_entity(
    const EntityKey& gold, const entity_filter::CandidateSet& candidates,
    neural::Rng& rng);

// The 10 snippets most TF-IDF-similar to the gold's question+answer text.
std::vector<SnippetRef> knowledge_negative_pool(
    const SnippetRef& gold, const corpus::KnowledgeBase& kb,
    std::size_t pool_size = 10);
SnippetRef sample_negative_knowledge(const SnippetRef& gold,
                                     const corpus::KnowledgeBase& kb,
                                     neural::Rng& rng);

struct SelectorTrainData {
  corpus::Split train;
  corpus::Split val;
  const corpus::KnowledgeBase* kb = nullptr;
  const entity_filter::EntityPatterns* patterns = nullptr;  // entity stage
};

// Point-wise ranker trained as a binary classifier with 1:1 negative
// sampling; best epoch by validation R@1. Throws when the split has no
// knowledge-seeking turns.
RankerModel train_ranker(RankerStage stage, const SelectorTrainData& data,
                         const detector::EncoderConfig& enc_cfg,
                         const neural::TrainConfig& train_cfg,
                         const neural::FocalConfig& focal);

struct EmbeddingIndex {
  neural::EncoderParams encoder;
  std::map<SnippetRef, neural::Tensor> embeddings;
};

EmbeddingIndex build_embedding_index(const corpus::KnowledgeBase& kb,
                                     const neural::EncoderParams& encoder);

RankedSnippets rank_by_embedding(const EmbeddingIndex& index,
                                 const corpus::Dialog& context);

struct TripletTrace {
  std::size_t triplets = 0;
  std::size_t skipped = 0;                // batches items without a negative
  std::vector<double> mined_gaps;         // sim(a,p) - sim(a,n) per triplet
};

// Cosine-triplet training of the snippet encoder with in-batch semi-hard
// negatives; batches without any valid triplet are skipped.
neural::EncoderParams train_embedding_encoder(
    const corpus::Split& train, const corpus::KnowledgeBase& kb,
    const detector::EncoderConfig& enc_cfg,
    const neural::TrainConfig& train_cfg, const neural::TripletConfig& triplet,
    TripletTrace* trace = nullptr);

enum class EnsembleRule { kMeanScore, kBorda };

// Mean of member scores by default; Borda count as the alternative vote.
// All members must share the stage.
RankedEntities ensemble_rank_entities(
    const std::vector<const RankerModel*>& models,
    const corpus::Dialog& context,
    const entity_filter::CandidateSet& candidates,
    const corpus::KnowledgeBase& kb,
    EnsembleRule rule = EnsembleRule::kMeanScore);
RankedSnippets ensemble_rank_snippets(
    const std::vector<const RankerModel*>& models,
    const corpus::Dialog& context, const EntityKey& entity,
    const corpus::KnowledgeBase& kb, std::size_t k,
    EnsembleRule rule = EnsembleRule::kMeanScore);

}  // namespace kgdialog::selector
