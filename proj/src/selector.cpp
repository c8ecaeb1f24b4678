#include "kgdialog/selector.hpp"

#include <algorithm>
#include <stdexcept>

namespace kgdialog::selector {

using neural::Tape;
using neural::Tensor;
using neural::Vocab;

namespace {

const std::string kSepToken = "<sep>";

void append_with_sep(textproc::TokenSeq& dst, const textproc::TokenSeq& src) {
  dst.push_back(kSepToken);
  dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

textproc::TokenSeq entity_input(const corpus::Dialog& context,
                                const EntityKey& key,
                                const corpus::KnowledgeBase& kb) {
  textproc::TokenSeq input = detector::context_tokens(context);
  append_with_sep(input, textproc::tokenize(key.first));
  const std::string name = kb.entity_name(key).value_or(key.first);
  append_with_sep(input, textproc::tokenize(name));
  return input;
}

textproc::TokenSeq knowledge_input(const corpus::Dialog& context,
                                   const corpus::Snippet& snippet) {
  // Stage 2 sees the last utterance only.
  textproc::TokenSeq input = textproc::tokenize(context.last_turn().text);
  append_with_sep(input, textproc::tokenize(snippet.question));
  append_with_sep(input, textproc::tokenize(snippet.answer));
  return input;
}

textproc::TokenSeq snippet_text(const corpus::Snippet& snippet) {
  textproc::TokenSeq text = textproc::tokenize(snippet.question);
  append_with_sep(text, textproc::tokenize(snippet.answer));
  return text;
}

namespace {

double score_input(const RankerModel& model, const textproc::TokenSeq& input) {
  const Tensor embedding = neural::encode_text(model.encoder, input);
  return neural::classify(embedding, model.head);
}

}  // namespace

RankedEntities rank_entities(const RankerModel& model,
                             const corpus::Dialog& context,
                             const entity_filter::CandidateSet& candidates,
                             const corpus::KnowledgeBase& kb) {
  if (model.stage != RankerStage::kEntity) {
    throw std::invalid_argument("rank_entities: wrong ranker stage");
  }
  if (candidates.empty()) {
    throw std::invalid_argument("rank_entities: empty candidate set");
  }
  RankedEntities ranked;
  ranked.reserve(candidates.size());
  for (const EntityKey& key : candidates) {
    ranked.push_back({key, score_input(model, entity_input(context, key, kb))});
  }
  sort_ranked(ranked);
  return ranked;
}

RankedSnippets rank_snippets(const RankerModel& model,
                             const corpus::Dialog& context,
                             const EntityKey& entity,
                             const corpus::KnowledgeBase& kb, std::size_t k) {
  if (model.stage != RankerStage::kKnowledge) {
    throw std::invalid_argument("rank_snippets: wrong ranker stage");
  }
  const std::vector<SnippetRef> refs = kb.snippets_of(entity);
  if (refs.empty()) {
    throw std::invalid_argument("rank_snippets: entity (" + entity.first +
                                "," + entity.second + ") has no snippets");
  }
  RankedSnippets ranked;
  ranked.reserve(refs.size());
  for (const SnippetRef& ref : refs) {
    ranked.push_back(
        {ref, score_input(model, knowledge_input(context, kb.at(ref)))});
  }
  sort_ranked(ranked);
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

RankedSnippets rank_all_snippets(const RankerModel& model,
                                 const corpus::Dialog& context,
                                 const corpus::KnowledgeBase& kb,
                                 std::size_t k) {
  if (kb.snippet_count() == 0) {
    throw std::invalid_argument("rank_all_snippets: empty knowledge base");
  }
  RankedSnippets ranked;
  ranked.reserve(kb.snippet_count());
  for (const auto& [ref, snippet] : kb.snippets()) {
    ranked.push_back(
        {ref, score_input(model, knowledge_input(context, snippet))});
  }
  sort_ranked(ranked);
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

std::optional<EntityKey> sample_negative_entity(
    const EntityKey& gold, const entity_filter::CandidateSet& candidates,
    neural::Rng& rng) {
  std::vector<EntityKey> pool;
  pool.reserve(candidates.size());
  for (const EntityKey& key : candidates) {
    if (key != gold) pool.push_back(key);
  }
  if (pool.empty()) return std::nullopt;
  return pool[rng.index(pool.size())];
}

std::vector<SnippetRef> knowledge_negative_pool(const SnippetRef& gold,
                                                const corpus::KnowledgeBase& kb,
                                                std::size_t pool_size) {
  const corpus::Snippet& gold_snippet = kb.at(gold);
  std::vector<textproc::TokenSeq> docs;
  std::vector<SnippetRef> refs;
  for (const auto& [ref, snippet] : kb.snippets()) {
    docs.push_back(snippet_text(snippet));
    refs.push_back(ref);
  }
  const textproc::DocFreqTable table = textproc::build_df_table(docs, {1});
  const textproc::TfIdfVector gold_vec =
      textproc::tfidf_vector(snippet_text(gold_snippet), table);

  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i] == gold) continue;
    scored.emplace_back(-textproc::cosine(gold_vec,
                                          textproc::tfidf_vector(docs[i],
                                                                 table)),
                        i);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) {
                     return a.first < b.first;
                   });
  std::vector<SnippetRef> pool;
  for (std::size_t i = 0; i < std::min(pool_size, scored.size()); ++i) {
    pool.push_back(refs[scored[i].second]);
  }
  return pool;
}

SnippetRef sample_negative_knowledge(const SnippetRef& gold,
                                     const corpus::KnowledgeBase& kb,
                                     neural::Rng& rng) {
  if (kb.snippet_count() < 2) {
    throw std::invalid_argument(
        "sample_negative_knowledge: need at least two snippets");
  }
  const std::vector<SnippetRef> pool = knowledge_negative_pool(gold, kb);
  return pool[rng.index(pool.size())];
}

namespace {

struct RankExample {
  std::size_t dialog_index;
  SnippetRef gold;
};

std::vector<RankExample> knowledge_turns(const corpus::Split& split) {
  std::vector<RankExample> out;
  for (std::size_t i = 0; i < split.dialogs.size(); ++i) {
    if (!split.labels[i].target) continue;
    out.push_back({i, split.labels[i].snippets.front()});
  }
  return out;
}

double validation_r1(const RankerModel& model, const SelectorTrainData& data) {
  const corpus::KnowledgeBase& kb = *data.kb;
  std::size_t hits = 0, total = 0;
  for (const RankExample& ex : knowledge_turns(data.val)) {
    const corpus::Dialog& dialog = data.val.dialogs[ex.dialog_index];
    ++total;
    if (model.stage == RankerStage::kEntity) {
      const entity_filter::CandidateSet candidates =
          entity_filter::match_entities(dialog, *data.patterns, kb);
      if (candidates.empty()) continue;
      const RankedEntities ranked =
          rank_entities(model, dialog, candidates, kb);
      const EntityKey gold{ex.gold.domain, ex.gold.entity_id};
      if (!ranked.empty() && ranked.front().key == gold) ++hits;
    } else {
      const EntityKey gold_entity{ex.gold.domain, ex.gold.entity_id};
      if (kb.snippets_of(gold_entity).empty()) continue;
      const RankedSnippets ranked =
          rank_snippets(model, dialog, gold_entity, kb, 1);
      if (!ranked.empty() && ranked.front().key == ex.gold) ++hits;
    }
  }
  return total == 0 ? 0.0
                    : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

RankerModel train_ranker(RankerStage stage, const SelectorTrainData& data,
                         const detector::EncoderConfig& enc_cfg,
                         const neural::TrainConfig& train_cfg,
                         const neural::FocalConfig& focal) {
  if (data.kb == nullptr) {
    throw std::invalid_argument("train_ranker: knowledge base required");
  }
  if (stage == RankerStage::kEntity && data.patterns == nullptr) {
    throw std::invalid_argument("train_ranker: entity stage needs patterns");
  }
  const corpus::KnowledgeBase& kb = *data.kb;
  const std::vector<RankExample> examples = knowledge_turns(data.train);
  if (examples.empty()) {
    throw std::invalid_argument("train_ranker: no knowledge-seeking turns");
  }

  // Candidate sets and TF-IDF negative pools are fixed; compute them once.
  std::vector<entity_filter::CandidateSet> candidate_sets;
  std::vector<std::vector<SnippetRef>> negative_pools;
  for (const RankExample& ex : examples) {
    if (stage == RankerStage::kEntity) {
      candidate_sets.push_back(entity_filter::match_entities(
          data.train.dialogs[ex.dialog_index], *data.patterns, kb));
    } else {
      negative_pools.push_back(knowledge_negative_pool(ex.gold, kb));
    }
  }

  // Vocabulary over everything a training input can contain.
  std::vector<textproc::TokenSeq> docs;
  for (const RankExample& ex : examples) {
    docs.push_back(
        detector::context_tokens(data.train.dialogs[ex.dialog_index]));
  }
  if (stage == RankerStage::kEntity) {
    for (const auto& [key, info] : kb.entities()) {
      docs.push_back(textproc::tokenize(key.first));
      if (info.name.has_value()) docs.push_back(textproc::tokenize(*info.name));
    }
  } else {
    for (const auto& [ref, snippet] : kb.snippets()) {
      docs.push_back(snippet_text(snippet));
    }
  }
  Vocab vocab =
      Vocab::build(docs, enc_cfg.vocab_min_freq, enc_cfg.vocab_max_size);

  neural::Rng rng(train_cfg.seed);
  RankerModel model;
  model.stage = stage;
  model.encoder =
      neural::EncoderParams::init(std::move(vocab), enc_cfg.dim, rng);
  model.head = neural::ClassifierHead::init(enc_cfg.dim, rng);

  auto params = model.encoder.parameters();
  for (auto& p : model.head.parameters()) params.push_back(p);
  neural::AdamOptimizer optimizer(params, train_cfg);

  RankerModel best = model;
  double best_r1 = -1.0;
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.index(i)]);
    }
    // 1:1 negative sampling, one (positive, negative) pair per example.
    struct Item {
      textproc::TokenSeq input;
      bool label;
    };
    std::vector<Item> items;
    for (std::size_t idx : order) {
      const RankExample& ex = examples[idx];
      const corpus::Dialog& dialog = data.train.dialogs[ex.dialog_index];
      if (stage == RankerStage::kEntity) {
        const EntityKey gold{ex.gold.domain, ex.gold.entity_id};
        items.push_back({entity_input(dialog, gold, kb), true});
        const std::optional<EntityKey> negative =
            sample_negative_entity(gold, candidate_sets[idx], rng);
        if (negative.has_value()) {
          items.push_back({entity_input(dialog, *negative, kb), false});
        }
      } else {
        items.push_back({knowledge_input(dialog, kb.at(ex.gold)), true});
        const std::vector<SnippetRef>& pool = negative_pools[idx];
        if (!pool.empty()) {
          const SnippetRef& negative = pool[rng.index(pool.size())];
          items.push_back({knowledge_input(dialog, kb.at(negative)), false});
        }
      }
    }
    for (std::size_t start = 0; start < items.size();
         start += train_cfg.batch_size) {
      const std::size_t end =
          std::min(items.size(), start + train_cfg.batch_size);
      Tape tape;
      Tape::Var emb = tape.leaf(model.encoder.embedding);
      Tape::Var pw = tape.leaf(model.encoder.proj_w);
      Tape::Var pb = tape.leaf(model.encoder.proj_b);
      Tape::Var hw = tape.leaf(model.head.w);
      Tape::Var hb = tape.leaf(model.head.b);
      Tape::Var loss;
      for (std::size_t i = start; i < end; ++i) {
        Tape::Var x = neural::encode_text(tape, emb, pw, pb,
                                          model.encoder.vocab, items[i].input);
        Tape::Var p = neural::classify(tape, x, hw, hb);
        Tape::Var l =
            neural::binary_focal_loss(tape, p, items[i].label, focal.gamma);
        loss = loss.valid() ? tape.add(loss, l) : l;
      }
      loss = tape.scale(loss, 1.0 / static_cast<double>(end - start));
      tape.backward(loss);
      optimizer.step({tape.grad(emb), tape.grad(pw), tape.grad(pb),
                      tape.grad(hw), tape.grad(hb)});
    }
    const double r1 = validation_r1(model, data);
    if (r1 > best_r1) {
      best_r1 = r1;
      best = model;
    }
  }
  return best;
}

EmbeddingIndex build_embedding_index(const corpus::KnowledgeBase& kb,
                                     const neural::EncoderParams& encoder) {
  EmbeddingIndex index;
  index.encoder = encoder;
  for (const auto& [ref, snippet] : kb.snippets()) {
    index.embeddings.emplace(ref,
                             neural::encode_text(encoder, snippet_text(snippet)));
  }
  return index;
}

RankedSnippets rank_by_embedding(const EmbeddingIndex& index,
                                 const corpus::Dialog& context) {
  if (index.embeddings.empty()) {
    throw std::invalid_argument("rank_by_embedding: empty index");
  }
  const Tensor query = neural::encode_text(
      index.encoder, textproc::tokenize(context.last_turn().text));
  RankedSnippets ranked;
  ranked.reserve(index.embeddings.size());
  for (const auto& [ref, embedding] : index.embeddings) {
    ranked.push_back(
        {ref, textproc::cosine(std::span<const double>(query.values),
                               std::span<const double>(embedding.values))});
  }
  sort_ranked(ranked);
  return ranked;
}

neural::EncoderParams train_embedding_encoder(
    const corpus::Split& train, const corpus::KnowledgeBase& kb,
    const detector::EncoderConfig& enc_cfg,
    const neural::TrainConfig& train_cfg, const neural::TripletConfig& triplet,
    TripletTrace* trace) {
  const std::vector<RankExample> examples = knowledge_turns(train);
  if (examples.empty()) {
    throw std::invalid_argument(
        "train_embedding_encoder: no knowledge-seeking turns");
  }
  std::vector<textproc::TokenSeq> docs;
  for (const RankExample& ex : examples) {
    docs.push_back(
        textproc::tokenize(train.dialogs[ex.dialog_index].last_turn().text));
  }
  for (const auto& [ref, snippet] : kb.snippets()) {
    docs.push_back(snippet_text(snippet));
  }
  Vocab vocab =
      Vocab::build(docs, enc_cfg.vocab_min_freq, enc_cfg.vocab_max_size);

  neural::Rng rng(train_cfg.seed);
  neural::EncoderParams encoder =
      neural::EncoderParams::init(std::move(vocab), enc_cfg.dim, rng);
  neural::AdamOptimizer optimizer(encoder.parameters(), train_cfg);

  neural::EncoderParams best = encoder;
  double best_r1 = -1.0;
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.index(i)]);
    }
    for (std::size_t start = 0; start < order.size();
         start += train_cfg.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + train_cfg.batch_size);
      Tape tape;
      Tape::Var emb = tape.leaf(encoder.embedding);
      Tape::Var pw = tape.leaf(encoder.proj_w);
      Tape::Var pb = tape.leaf(encoder.proj_b);

      std::vector<Tape::Var> anchors, positives;
      std::vector<Tensor> anchor_vals, positive_vals;
      for (std::size_t i = start; i < end; ++i) {
        const RankExample& ex = examples[order[i]];
        const corpus::Dialog& dialog = train.dialogs[ex.dialog_index];
        Tape::Var a = neural::encode_text(
            tape, emb, pw, pb, encoder.vocab,
            textproc::tokenize(dialog.last_turn().text));
        Tape::Var p = neural::encode_text(tape, emb, pw, pb, encoder.vocab,
                                          snippet_text(kb.at(ex.gold)));
        anchors.push_back(a);
        positives.push_back(p);
        anchor_vals.push_back(tape.value(a));
        positive_vals.push_back(tape.value(p));
      }

      Tape::Var loss;
      std::size_t triplets = 0;
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        // In-batch negatives: the other examples' positives.
        std::vector<Tensor> negative_vals;
        std::vector<std::size_t> negative_ids;
        for (std::size_t j = 0; j < positives.size(); ++j) {
          if (j == i) continue;
          negative_vals.push_back(positive_vals[j]);
          negative_ids.push_back(j);
        }
        if (negative_vals.empty()) continue;
        const std::optional<std::size_t> mined = neural::semi_hard_mine(
            anchor_vals[i], positive_vals[i], negative_vals, triplet);
        if (!mined.has_value()) {
          if (trace != nullptr) ++trace->skipped;
          continue;
        }
        const std::size_t j = negative_ids[*mined];
        if (trace != nullptr) {
          const double gap =
              textproc::cosine(
                  std::span<const double>(anchor_vals[i].values),
                  std::span<const double>(positive_vals[i].values)) -
              textproc::cosine(
                  std::span<const double>(anchor_vals[i].values),
                  std::span<const double>(positive_vals[j].values));
          trace->mined_gaps.push_back(gap);
          ++trace->triplets;
        }
        Tape::Var l = neural::triplet_cosine_loss(
            tape, anchors[i], positives[i], positives[j], triplet.alpha);
        loss = loss.valid() ? tape.add(loss, l) : l;
        ++triplets;
      }
      if (triplets == 0) continue;  // batch skipped
      loss = tape.scale(loss, 1.0 / static_cast<double>(triplets));
      tape.backward(loss);
      optimizer.step({tape.grad(emb), tape.grad(pw), tape.grad(pb)});
    }

    // Validation R@1 against the full snippet index under current params.
    const EmbeddingIndex index = build_embedding_index(kb, encoder);
    std::size_t hits = 0;
    for (const RankExample& ex : examples) {
      const RankedSnippets ranked =
          rank_by_embedding(index, train.dialogs[ex.dialog_index]);
      if (!ranked.empty() && ranked.front().key == ex.gold) ++hits;
    }
    const double r1 =
        static_cast<double>(hits) / static_cast<double>(examples.size());
    if (r1 > best_r1) {
      best_r1 = r1;
      best = encoder;
    }
  }
  return best;
}

namespace {

template <typename Key>
std::vector<Ranked<Key>> aggregate(
    const std::vector<std::vector<Ranked<Key>>>& per_model,
    EnsembleRule rule) {
  std::map<Key, double> totals;
  for (const auto& ranked : per_model) {
    if (rule == EnsembleRule::kMeanScore) {
      for (const auto& entry : ranked) totals[entry.key] += entry.score;
    } else {
      // Borda: n-1 points for rank 1 down to 0 for the last.
      for (std::size_t pos = 0; pos < ranked.size(); ++pos) {
        totals[ranked[pos].key] +=
            static_cast<double>(ranked.size() - 1 - pos);
      }
    }
  }
  std::vector<Ranked<Key>> out;
  const double denom =
      rule == EnsembleRule::kMeanScore
          ? static_cast<double>(per_model.size())
          : 1.0;
  for (const auto& [key, total] : totals) {
    out.push_back({key, total / denom});
  }
  sort_ranked(out);
  return out;
}

void check_stage(const std::vector<const RankerModel*>& models,
                 RankerStage stage, const char* what) {
  if (models.empty()) {
    throw std::invalid_argument(std::string(what) + ": no models");
  }
  for (const RankerModel* model : models) {
    if (model->stage != stage) {
      throw std::invalid_argument(std::string(what) + ": mixed ranker stages");
    }
  }
}

}  // namespace

RankedEntities ensemble_rank_entities(
    const std::vector<const RankerModel*>& models,
    const corpus::Dialog& context,
    const entity_filter::CandidateSet& candidates,
    const corpus::KnowledgeBase& kb, EnsembleRule rule) {
  check_stage(models, RankerStage::kEntity, "ensemble_rank_entities");
  std::vector<RankedEntities> per_model;
  per_model.reserve(models.size());
  for (const RankerModel* model : models) {
    per_model.push_back(rank_entities(*model, context, candidates, kb));
  }
  return aggregate(per_model, rule);
}

RankedSnippets ensemble_rank_snippets(
    const std::vector<const RankerModel*>& models,
    const corpus::Dialog& context, const EntityKey& entity,
    const corpus::KnowledgeBase& kb, std::size_t k, EnsembleRule rule) {
  check_stage(models, RankerStage::kKnowledge, "ensemble_rank_snippets");
  std::vector<RankedSnippets> per_model;
  per_model.reserve(models.size());
  for (const RankerModel* model : models) {
    // Members rank the full snippet list so scores align.
    per_model.push_back(rank_snippets(*model, context, entity, kb,
                                      kb.snippets_of(entity).size()));
  }
  RankedSnippets out = aggregate(per_model, rule);
  if (out.size() > k) out.resize(k);
  return out;
}

}  // namespace kgdialog::selector
