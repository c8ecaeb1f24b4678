#include <string>

#include "doctest.h"
#include "kgdialog/corpus.hpp"

using namespace kgdialog;

namespace {
const std::string kToyDir = KGDIALOG_TOY_DIR;
}

TEST_CASE("toy fixture loads consistently") {
  const auto dialogs = corpus::load_dialogs(kToyDir + "/logs.json");
  const auto labels = corpus::load_labels(kToyDir + "/labels.json");
  const auto kb = corpus::load_knowledge(kToyDir + "/knowledge.json");

  CHECK(dialogs.size() == 12);
  CHECK(labels.size() == 12);
  CHECK(kb.entity_count() == 8);
  CHECK(kb.snippet_count() == 30);
  CHECK(kb.star_keys().size() == 2);

  const auto report = corpus::validate_split(dialogs, labels, kb);
  CHECK(report.ok());
  CHECK(report.findings.empty());
}

TEST_CASE("dialog parsing enforces the turn invariants") {
  SUBCASE("dialog ending in a system turn is rejected") {
    const std::string text =
        R"([[{"speaker":"U","text":"hi"},{"speaker":"S","text":"hello"}]])";
    CHECK_THROWS_WITH_AS(corpus::parse_dialogs(text),
                         doctest::Contains("last turn"), corpus::LoadError);
  }
  SUBCASE("single USER turn is fine") {
    const auto dialogs =
        corpus::parse_dialogs(R"([[{"speaker":"U","text":"hi"}]])");
    REQUIRE(dialogs.size() == 1);
    REQUIRE(dialogs[0].turns.size() == 1);
    CHECK(dialogs[0].turns[0].speaker == corpus::Speaker::kUser);
  }
  SUBCASE("unknown speaker tag names the offending record") {
    const std::string text = R"([[{"speaker":"X","text":"hi"}]])";
    CHECK_THROWS_WITH_AS(corpus::parse_dialogs(text),
                         doctest::Contains("logs[0]"), corpus::LoadError);
  }
  SUBCASE("empty dialog is rejected") {
    CHECK_THROWS_AS(corpus::parse_dialogs("[[]]"), corpus::LoadError);
  }
  SUBCASE("whitespace-only text is rejected") {
    CHECK_THROWS_AS(
        corpus::parse_dialogs(R"([[{"speaker":"U","text":"  "}]])"),
        corpus::LoadError);
  }
}

TEST_CASE("knowledge parsing enforces entity and doc invariants") {
  SUBCASE("mixed named and entity-less domains") {
    const auto kb = corpus::parse_knowledge(R"({
      "hotel": {"1": {"name": "Gonville Hotel", "docs": {
        "0": {"title": "q", "body": "a"}}}},
      "taxi": {"*": {"name": null, "docs": {}}}
    })");
    CHECK(kb.entity_count() == 2);
    CHECK(kb.entity_name({"hotel", "1"}).value() == "Gonville Hotel");
    CHECK_FALSE(kb.entity_name({"taxi", "*"}).has_value());
  }
  SUBCASE("duplicate doc key is a duplicate-key error") {
    const std::string text = R"({
      "hotel": {"1": {"name": "H", "docs": {
        "0": {"title": "q", "body": "a"},
        "0": {"title": "q2", "body": "a2"}}}}
    })";
    CHECK_THROWS_WITH_AS(corpus::parse_knowledge(text),
                         doctest::Contains("duplicate"), corpus::LoadError);
  }
  SUBCASE("named entity without a name is rejected") {
    CHECK_THROWS_AS(
        corpus::parse_knowledge(R"({"hotel": {"1": {"name": null}}})"),
        corpus::LoadError);
  }
  SUBCASE("empty top level object is an empty knowledge base") {
    const auto kb = corpus::parse_knowledge("{}");
    CHECK(kb.entity_count() == 0);
    CHECK(kb.snippet_count() == 0);
  }
  SUBCASE("add_snippet rejects duplicate refs") {
    corpus::KnowledgeBase kb;
    kb.add_entity({"hotel", "1", "H"});
    kb.add_snippet({{"hotel", "1", "0"}, "H", "q", "a"});
    CHECK_THROWS_WITH_AS(kb.add_snippet({{"hotel", "1", "0"}, "H", "q", "a"}),
                         doctest::Contains("duplicate"), corpus::LoadError);
  }
}

TEST_CASE("label parsing enforces the target/response invariants") {
  CHECK_THROWS_AS(corpus::parse_labels(R"([{"target": true}])"),
                  corpus::LoadError);
  CHECK_THROWS_AS(
      corpus::parse_labels(
          R"([{"target": true, "knowledge": [{"domain":"d"}]}])"),
      corpus::LoadError);
  CHECK_THROWS_AS(
      corpus::parse_labels(R"([{"target": false, "response": "hi"}])"),
      corpus::LoadError);
  const auto labels = corpus::parse_labels(R"([{"target": false}])");
  REQUIRE(labels.size() == 1);
  CHECK_FALSE(labels[0].target);

  SUBCASE("integer ids are normalized to strings") {
    const auto with_ints = corpus::parse_labels(R"([{
      "target": true,
      "knowledge": [{"domain": "hotel", "entity_id": 3, "doc_id": 7}],
      "response": "ok"}])");
    CHECK(with_ints[0].snippets[0].entity_id == "3");
    CHECK(with_ints[0].snippets[0].doc_id == "7");
  }
}

TEST_CASE("serialization round-trips the loaded structures") {
  const auto dialogs = corpus::load_dialogs(kToyDir + "/logs.json");
  const auto labels = corpus::load_labels(kToyDir + "/labels.json");
  const auto kb = corpus::load_knowledge(kToyDir + "/knowledge.json");

  CHECK(corpus::parse_dialogs(corpus::dialogs_to_json(dialogs)) == dialogs);
  CHECK(corpus::parse_labels(corpus::labels_to_json(labels)) == labels);
  CHECK(corpus::parse_knowledge(corpus::knowledge_to_json(kb)) == kb);
}

TEST_CASE("validate_split reports cross-file findings") {
  const auto dialogs = corpus::load_dialogs(kToyDir + "/logs.json");
  auto labels = corpus::load_labels(kToyDir + "/labels.json");
  const auto kb = corpus::load_knowledge(kToyDir + "/knowledge.json");

  SUBCASE("unresolvable snippet ref") {
    labels[0].snippets[0] = {"hotel", "99", "0"};
    const auto report = corpus::validate_split(dialogs, labels, kb);
    CHECK(report.unresolvable_refs == 1);
    CHECK(report.findings.size() == 1);
  }
  SUBCASE("count mismatch") {
    labels.pop_back();
    const auto report = corpus::validate_split(dialogs, labels, kb);
    CHECK(report.count_mismatches == 1);
  }
  SUBCASE("invariant violations on hand-built structures") {
    corpus::Dialog bad;
    bad.id = "x";
    bad.turns = {{corpus::Speaker::kSystem, "hello"}};
    const auto report = corpus::validate_split({bad}, {{false, {}, {}}}, kb);
    CHECK(report.invariant_violations == 1);
  }
}
