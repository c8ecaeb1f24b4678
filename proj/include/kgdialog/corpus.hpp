#pragma once
// Data model and ingestion for dialogs, per-dialog labels and the
// unstructured knowledge base (domain/entity/FAQ triples).
//
// File formats (all UTF-8 JSON):
//   logs.json      array of dialogs; a dialog is an array of
//                  {"speaker": "U"|"S", "text": string}
//   labels.json    array of {"target": bool,
//                            "knowledge": [{"domain","entity_id","doc_id"}],
//                            "response": string?}
//   knowledge.json object domain -> entity_id -> {"name": string|null,
//                  "docs": {doc_id: {"title": string, "body": string}}}
//
// One label per dialog; it applies to the dialog's final USER turn.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kgdialog::corpus {

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Speaker { kUser, kSystem };

struct Turn {
  Speaker speaker = Speaker::kUser;
  std::string text;  // non-empty after whitespace trimming

  bool operator==(const Turn&) const = default;
};

struct Dialog {
  std::string id;
  std::vector<Turn> turns;  // non-empty; last turn is USER

  const Turn& last_turn() const { return turns.back(); }
  bool operator==(const Dialog&) const = default;
};

struct SnippetRef {
  std::string domain;
  std::string entity_id;  // "*" for entity-less domains
  std::string doc_id;

  auto operator<=>(const SnippetRef&) const = default;
};

// (domain, entity_id); the unit the entity filter and stage-1 ranker work on.
using EntityKey = std::pair<std::string, std::string>;

struct Snippet {
  SnippetRef ref;
  std::optional<std::string> entity_name;  // absent iff entity_id == "*"
  std::string question;
  std::string answer;

  bool operator==(const Snippet&) const = default;
};

struct EntityInfo {
  std::string domain;
  std::string entity_id;
  std::optional<std::string> name;

  EntityKey key() const { return {domain, entity_id}; }
  bool operator==(const EntityInfo&) const = default;
};

// Immutable after loading; iteration order is sorted by key so downstream
// tie-breaking is deterministic.
class KnowledgeBase {
 public:
  void add_entity(EntityInfo info);
  void add_snippet(Snippet snippet);  // throws LoadError on duplicate ref

  const Snippet* find(const SnippetRef& ref) const;
  const Snippet& at(const SnippetRef& ref) const;
  bool has_entity(const EntityKey& key) const;
  std::optional<std::string> entity_name(const EntityKey& key) const;

  const std::map<SnippetRef, Snippet>& snippets() const { return snippets_; }
  const std::map<EntityKey, EntityInfo>& entities() const { return entities_; }
  std::vector<SnippetRef> snippets_of(const EntityKey& key) const;
  std::vector<EntityKey> star_keys() const;  // entity-less domain keys

  std::size_t entity_count() const { return entities_.size(); }
  std::size_t snippet_count() const { return snippets_.size(); }

  bool operator==(const KnowledgeBase&) const = default;

 private:
  std::map<SnippetRef, Snippet> snippets_;
  std::map<EntityKey, EntityInfo> entities_;
};

struct TurnLabel {
  bool target = false;
  std::vector<SnippetRef> snippets;      // non-empty iff target
  std::optional<std::string> response;   // present iff target

  bool operator==(const TurnLabel&) const = default;
};

struct Split {
  std::vector<Dialog> dialogs;
  std::vector<TurnLabel> labels;
};

std::vector<Dialog> load_dialogs(const std::string& path);
std::vector<TurnLabel> load_labels(const std::string& path);
KnowledgeBase load_knowledge(const std::string& path);

// Same as the load_* functions but over in-memory JSON text; file loaders
// delegate here.
std::vector<Dialog> parse_dialogs(const std::string& text);
std::vector<TurnLabel> parse_labels(const std::string& text);
KnowledgeBase parse_knowledge(const std::string& text);

std::string dialogs_to_json(const std::vector<Dialog>& dialogs);
std::string labels_to_json(const std::vector<TurnLabel>& labels);
std::string knowledge_to_json(const KnowledgeBase& kb);

// Cross-file consistency findings. Loading already enforces intra-file
// invariants, so a loaded-without-error trio can only produce cross-file
// findings here.
struct ValidationReport {
  std::vector<std::string> findings;
  std::size_t count_mismatches = 0;
  std::size_t unresolvable_refs = 0;
  std::size_t invariant_violations = 0;

  bool ok() const { return findings.empty(); }
};

ValidationReport validate_split(const std::vector<Dialog>& dialogs,
                                const std::vector<TurnLabel>& labels,
                                const KnowledgeBase& kb);

}  // namespace kgdialog::corpus
