#include <string>

#include "doctest.h"
#include "kgdialog/selector.hpp"
#include "oracles.hpp"

using namespace kgdialog;
using neural::Tensor;
using selector::RankerModel;
using selector::RankerStage;

namespace {

const std::string kToyDir = KGDIALOG_TOY_DIR;

RankerModel zero_ranker(RankerStage stage, std::size_t dim = 4) {
  RankerModel model;
  model.stage = stage;
  model.encoder.vocab = neural::Vocab();
  model.encoder.embedding = Tensor({model.encoder.vocab.size(), dim}, 0.0);
  model.encoder.proj_w = Tensor({dim, dim}, 0.0);
  model.encoder.proj_b = Tensor({dim}, 0.0);
  model.head.w = Tensor({dim}, 0.0);
  model.head.b = Tensor::scalar(0.0);
  return model;
}

corpus::Dialog user_turn(const std::string& text) {
  corpus::Dialog dialog;
  dialog.id = "t";
  dialog.turns = {{corpus::Speaker::kUser, text}};
  return dialog;
}

struct Toy {
  corpus::Split split;
  corpus::KnowledgeBase kb;
  entity_filter::EntityPatterns patterns;

  Toy() {
    split.dialogs = corpus::load_dialogs(kToyDir + "/logs.json");
    split.labels = corpus::load_labels(kToyDir + "/labels.json");
    kb = corpus::load_knowledge(kToyDir + "/knowledge.json");
    entity_filter::FilterConfig cfg;
    cfg.t1_override = 4;
    cfg.t3_override = 2;
    const auto utterances = entity_filter::split_utterances(split.dialogs);
    patterns = entity_filter::build_patterns(kb, utterances, cfg);
    entity_filter::fuzzy_extend(patterns, utterances, cfg);
  }
};

}  // namespace

TEST_CASE("model inputs use single SEP separators") {
  Toy toy;
  const auto dialog = user_turn("hello there");
  const auto input =
      selector::entity_input(dialog, {"hotel", "1"}, toy.kb);
  CHECK(input == textproc::TokenSeq{"hello", "there", "<sep>", "hotel",
                                    "<sep>", "gonville", "hotel"});

  // Entity-less keys use the domain in the entity slot.
  const auto star = selector::entity_input(dialog, {"taxi", "*"}, toy.kb);
  CHECK(star == textproc::TokenSeq{"hello", "there", "<sep>", "taxi", "<sep>",
                                   "taxi"});

  corpus::Dialog multi;
  multi.id = "m";
  multi.turns = {{corpus::Speaker::kUser, "first turn"},
                 {corpus::Speaker::kSystem, "second turn"},
                 {corpus::Speaker::kUser, "is there parking"}};
  const corpus::Snippet& snippet = toy.kb.at({"hotel", "3", "0"});
  const auto kinput = selector::knowledge_input(multi, snippet);
  // Stage 2 sees only the last utterance.
  CHECK(kinput[0] == "is");
  CHECK(kinput[3] == "<sep>");
  CHECK(std::count(kinput.begin(), kinput.end(), "<sep>") == 2);
}

TEST_CASE("rank_entities basics") {
  Toy toy;
  const auto model = zero_ranker(RankerStage::kEntity);
  const auto dialog = user_turn("any context");

  SUBCASE("single candidate lands at rank 1") {
    const auto ranked = selector::rank_entities(
        model, dialog, {{"hotel", "1"}}, toy.kb);
    REQUIRE(ranked.size() == 1);
    CHECK(ranked[0].key == corpus::EntityKey{"hotel", "1"});
  }
  SUBCASE("equal scores break ties in key order") {
    const entity_filter::CandidateSet candidates = {
        {"restaurant", "2"}, {"hotel", "1"}, {"hotel", "3"}};
    const auto ranked =
        selector::rank_entities(model, dialog, candidates, toy.kb);
    REQUIRE(ranked.size() == 3);
    CHECK(ranked[0].key == corpus::EntityKey{"hotel", "1"});
    CHECK(ranked[1].key == corpus::EntityKey{"hotel", "3"});
    CHECK(ranked[2].key == corpus::EntityKey{"restaurant", "2"});
  }
  SUBCASE("wrong stage and empty candidates are rejected") {
    CHECK_THROWS_AS(selector::rank_entities(
                        zero_ranker(RankerStage::kKnowledge), dialog,
                        {{"hotel", "1"}}, toy.kb),
                    std::invalid_argument);
    CHECK_THROWS_AS(selector::rank_entities(model, dialog, {}, toy.kb),
                    std::invalid_argument);
  }
  SUBCASE("only candidates are ever scored") {
    const entity_filter::CandidateSet candidates = {{"hotel", "2"}};
    const auto ranked =
        selector::rank_entities(model, dialog, candidates, toy.kb);
    for (const auto& entry : ranked) {
      CHECK(candidates.contains(entry.key));
    }
  }
}

TEST_CASE("rank_snippets basics") {
  Toy toy;
  const auto model = zero_ranker(RankerStage::kKnowledge);
  const auto dialog = user_turn("do you have parking");

  SUBCASE("k covering everything returns all snippets of the entity") {
    const auto ranked =
        selector::rank_snippets(model, dialog, {"hotel", "1"}, toy.kb, 10);
    CHECK(ranked.size() == 4);
  }
  SUBCASE("entity without snippets is an upstream fault") {
    corpus::KnowledgeBase kb;
    kb.add_entity({"hotel", "9", "Empty Hotel"});
    CHECK_THROWS_AS(
        selector::rank_snippets(model, dialog, {"hotel", "9"}, kb, 5),
        std::invalid_argument);
  }
  SUBCASE("duplicate question texts are both scored, stable order") {
    corpus::KnowledgeBase kb;
    kb.add_entity({"hotel", "1", "H"});
    kb.add_snippet({{"hotel", "1", "0"}, "H", "same question", "a"});
    kb.add_snippet({{"hotel", "1", "1"}, "H", "same question", "a"});
    const auto ranked =
        selector::rank_snippets(model, dialog, {"hotel", "1"}, kb, 5);
    REQUIRE(ranked.size() == 2);
    CHECK(ranked[0].key.doc_id == "0");
    CHECK(ranked[1].key.doc_id == "1");
    CHECK(ranked[0].score == ranked[1].score);
  }
}

TEST_CASE("rank_all_snippets degenerate equivalences") {
  const auto model = zero_ranker(RankerStage::kKnowledge);
  const auto dialog = user_turn("a question");
  corpus::KnowledgeBase kb;
  kb.add_entity({"hotel", "1", "H"});
  kb.add_snippet({{"hotel", "1", "0"}, "H", "q one", "a one"});
  kb.add_snippet({{"hotel", "1", "1"}, "H", "q two", "a two"});

  const auto all = selector::rank_all_snippets(model, dialog, kb, 10);
  const auto scoped =
      selector::rank_snippets(model, dialog, {"hotel", "1"}, kb, 10);
  REQUIRE(all.size() == scoped.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    CHECK(all[i].key == scoped[i].key);
    CHECK(all[i].score == scoped[i].score);
  }

  corpus::KnowledgeBase single;
  single.add_entity({"taxi", "*", std::nullopt});
  single.add_snippet({{"taxi", "*", "0"}, std::nullopt, "q", "a"});
  const auto one = selector::rank_all_snippets(model, dialog, single, 5);
  REQUIRE(one.size() == 1);
  CHECK(one[0].key == corpus::SnippetRef{"taxi", "*", "0"});
}

TEST_CASE("entity negative sampling") {
  neural::Rng rng(41);
  SUBCASE("two candidates always give the other one") {
    const entity_filter::CandidateSet candidates = {{"a", "1"}, {"b", "2"}};
    for (int i = 0; i < 20; ++i) {
      const auto neg =
          selector::sample_negative_entity({"a", "1"}, candidates, rng);
      CHECK(neg == corpus::EntityKey{"b", "2"});
    }
  }
  SUBCASE("gold-only candidate set skips the example") {
    CHECK_FALSE(selector::sample_negative_entity({"a", "1"}, {{"a", "1"}},
                                                 rng)
                    .has_value());
  }
  SUBCASE("samples are close to uniform over three candidates") {
    const entity_filter::CandidateSet candidates = {
        {"a", "1"}, {"b", "2"}, {"c", "3"}, {"d", "4"}};
    std::map<corpus::EntityKey, std::size_t> counts;
    const int draws = 12000;
    for (int i = 0; i < draws; ++i) {
      ++counts[*selector::sample_negative_entity({"a", "1"}, candidates,
                                                 rng)];
    }
    CHECK(counts.size() == 3);
    double chi2 = 0.0;
    const double expected = draws / 3.0;
    for (const auto& [key, count] : counts) {
      chi2 += (count - expected) * (count - expected) / expected;
    }
    CHECK(chi2 < 20.0);  // 2 dof, far beyond the 99.9th percentile
  }
}

TEST_CASE("knowledge negative pool equals the exhaustive TF-IDF ranking") {
  Toy toy;
  for (const auto& [gold, snippet] : toy.kb.snippets()) {
    const auto pool = selector::knowledge_negative_pool(gold, toy.kb, 10);
    const auto expected =
        oracles::knowledge_pool_exhaustive(gold, toy.kb, 10);
    CHECK(pool == expected);
    CHECK(pool.size() == 10);
    for (const auto& ref : pool) CHECK_FALSE(ref == gold);
  }
}

TEST_CASE("near-duplicate snippets always enter the negative pool") {
  corpus::KnowledgeBase kb;
  kb.add_entity({"hotel", "1", "H"});
  kb.add_snippet({{"hotel", "1", "0"}, "H", "can i bring my dog",
                  "pets are not allowed"});
  kb.add_snippet({{"hotel", "1", "1"}, "H", "can i bring my dog please",
                  "pets are not allowed here"});
  for (int i = 0; i < 15; ++i) {
    kb.add_snippet({{"hotel", "1", std::to_string(2 + i)}, "H",
                    "unrelated question number " + std::to_string(i),
                    "completely different answer text " + std::to_string(i)});
  }
  const auto pool =
      selector::knowledge_negative_pool({"hotel", "1", "0"}, kb, 10);
  CHECK(std::find(pool.begin(), pool.end(),
                  corpus::SnippetRef{"hotel", "1", "1"}) != pool.end());
  // The near-duplicate is the closest of all.
  CHECK(pool.front() == corpus::SnippetRef{"hotel", "1", "1"});

  corpus::KnowledgeBase two;
  two.add_entity({"hotel", "1", "H"});
  two.add_snippet({{"hotel", "1", "0"}, "H", "q one", "a one"});
  two.add_snippet({{"hotel", "1", "1"}, "H", "q two", "a two"});
  neural::Rng rng(43);
  CHECK(selector::sample_negative_knowledge({"hotel", "1", "0"}, two, rng) ==
        corpus::SnippetRef{"hotel", "1", "1"});
}

TEST_CASE("embedding index stores one embedding per snippet, bit-exact") {
  Toy toy;
  neural::Rng rng(47);
  neural::EncoderParams encoder = neural::EncoderParams::init(
      neural::Vocab::build({{"a", "b", "c"}}), 8, rng);

  const auto index = selector::build_embedding_index(toy.kb, encoder);
  CHECK(index.embeddings.size() == toy.kb.snippet_count());
  for (const auto& [ref, embedding] : index.embeddings) {
    const Tensor again = neural::encode_text(
        encoder, selector::snippet_text(toy.kb.at(ref)));
    CHECK(again.values == embedding.values);
  }

  corpus::KnowledgeBase empty;
  CHECK(selector::build_embedding_index(empty, encoder).embeddings.empty());
}

TEST_CASE("rank_by_embedding is exhaustive cosine ranking") {
  Toy toy;
  neural::Rng rng(53);
  std::vector<textproc::TokenSeq> docs;
  for (const auto& [ref, snippet] : toy.kb.snippets()) {
    docs.push_back(selector::snippet_text(snippet));
  }
  neural::EncoderParams encoder =
      neural::EncoderParams::init(neural::Vocab::build(docs), 16, rng);
  const auto index = selector::build_embedding_index(toy.kb, encoder);

  const auto dialog = user_turn("can i bring my dog");
  const auto ranked = selector::rank_by_embedding(index, dialog);
  REQUIRE(ranked.size() == toy.kb.snippet_count());

  const Tensor query = neural::encode_text(
      encoder, textproc::tokenize(dialog.last_turn().text));
  for (const auto& entry : ranked) {
    const double expected = textproc::cosine(
        std::span<const double>(query.values),
        std::span<const double>(index.embeddings.at(entry.key).values));
    CHECK(entry.score == doctest::Approx(expected).epsilon(1e-12));
  }
  for (std::size_t i = 1; i < ranked.size(); ++i) {
    CHECK(ranked[i - 1].score >= ranked[i].score);
  }

  SUBCASE("identical embedding scores 1.0 at rank 1") {
    selector::EmbeddingIndex handmade;
    handmade.encoder = encoder;
    handmade.embeddings[{"hotel", "1", "0"}] = query;
    handmade.embeddings[{"hotel", "1", "1"}] =
        neural::random_tensor({16}, rng, 1.0);
    const auto top = selector::rank_by_embedding(handmade, dialog);
    CHECK(top.front().key == corpus::SnippetRef{"hotel", "1", "0"});
    CHECK(top.front().score == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("ensemble ranking aggregates member scores") {
  Toy toy;
  neural::Rng rng(59);
  const auto dialog = user_turn("tell me about the gonville hotel");
  const entity_filter::CandidateSet candidates = {
      {"hotel", "1"}, {"hotel", "2"}, {"restaurant", "1"}, {"taxi", "*"}};

  std::vector<RankerModel> models;
  for (int i = 0; i < 3; ++i) {
    RankerModel model;
    model.stage = RankerStage::kEntity;
    model.encoder = neural::EncoderParams::init(
        neural::Vocab::build({{"hotel", "gonville", "taxi"}}), 6, rng);
    model.head = neural::ClassifierHead::init(6, rng);
    models.push_back(std::move(model));
  }
  std::vector<const RankerModel*> ptrs;
  for (const auto& model : models) ptrs.push_back(&model);

  SUBCASE("identical members equal the single model") {
    const std::vector<const RankerModel*> same = {&models[0], &models[0],
                                                  &models[0]};
    const auto single =
        selector::rank_entities(models[0], dialog, candidates, toy.kb);
    const auto ens =
        selector::ensemble_rank_entities(same, dialog, candidates, toy.kb);
    REQUIRE(single.size() == ens.size());
    for (std::size_t i = 0; i < single.size(); ++i) {
      CHECK(single[i].key == ens[i].key);
      CHECK(ens[i].score == doctest::Approx(single[i].score).epsilon(1e-12));
    }
  }
  SUBCASE("mean-score ranking matches an independent aggregation") {
    std::map<corpus::EntityKey, double> sums;
    for (const auto* model : ptrs) {
      for (const auto& entry :
           selector::rank_entities(*model, dialog, candidates, toy.kb)) {
        sums[entry.key] += entry.score;
      }
    }
    const auto ens =
        selector::ensemble_rank_entities(ptrs, dialog, candidates, toy.kb);
    for (const auto& entry : ens) {
      CHECK(entry.score ==
            doctest::Approx(sums[entry.key] / 3.0).epsilon(1e-12));
    }
    for (std::size_t i = 1; i < ens.size(); ++i) {
      CHECK(ens[i - 1].score >= ens[i].score);
    }
  }
  SUBCASE("zero models tie on every candidate and fall back to key order") {
    const auto z1 = zero_ranker(RankerStage::kEntity);
    const auto z2 = zero_ranker(RankerStage::kEntity);
    const auto ens = selector::ensemble_rank_entities({&z1, &z2}, dialog,
                                                      candidates, toy.kb);
    REQUIRE(ens.size() == candidates.size());
    auto it = candidates.begin();
    for (const auto& entry : ens) {
      CHECK(entry.key == *it);
      ++it;
    }
  }
  SUBCASE("mixed stages are rejected") {
    const auto knowledge = zero_ranker(RankerStage::kKnowledge);
    const auto entity = zero_ranker(RankerStage::kEntity);
    CHECK_THROWS_AS(
        selector::ensemble_rank_entities({&entity, &knowledge}, dialog,
                                         candidates, toy.kb),
        std::invalid_argument);
  }
}

TEST_CASE("train_ranker requires knowledge-seeking turns") {
  Toy toy;
  corpus::Split empty_split;
  empty_split.dialogs = {user_turn("book a table")};
  corpus::TurnLabel neg;
  neg.target = false;
  empty_split.labels = {neg};
  selector::SelectorTrainData data;
  data.train = empty_split;
  data.val = empty_split;
  data.kb = &toy.kb;
  data.patterns = &toy.patterns;
  CHECK_THROWS_AS(selector::train_ranker(RankerStage::kEntity, data,
                                         {8, 1, 0}, {}, {2.0}),
                  std::invalid_argument);
}
