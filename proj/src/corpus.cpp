#include "kgdialog/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace kgdialog::corpus {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

// entity_id / doc_id may arrive as JSON numbers; normalize to strings.
std::string id_to_string(const json& j, const std::string& where) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  throw LoadError(where + ": id must be a string or an integer");
}

json parse_json(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw LoadError(what + ": not valid JSON");
  return j;
}

// Parses while rejecting duplicate object keys, which the DOM parser would
// otherwise silently collapse.
json parse_json_no_duplicates(const std::string& text,
                              const std::string& what) {
  std::vector<std::vector<std::string>> key_stack;
  std::string duplicate;
  json::parser_callback_t cb = [&](int, json::parse_event_t event,
                                   json& parsed) {
    switch (event) {
      case json::parse_event_t::object_start:
        key_stack.emplace_back();
        break;
      case json::parse_event_t::object_end:
        key_stack.pop_back();
        break;
      case json::parse_event_t::key: {
        auto key = parsed.get<std::string>();
        auto& keys = key_stack.back();
        if (duplicate.empty() &&
            std::find(keys.begin(), keys.end(), key) != keys.end()) {
          duplicate = key;
        }
        keys.push_back(std::move(key));
        break;
      }
      default:
        break;
    }
    return true;
  };
  json j = json::parse(text, cb, false);
  if (j.is_discarded()) throw LoadError(what + ": not valid JSON");
  if (!duplicate.empty()) {
    throw LoadError(what + ": duplicate key \"" + duplicate + "\"");
  }
  return j;
}

}  // namespace

void KnowledgeBase::add_entity(EntityInfo info) {
  entities_.emplace(info.key(), std::move(info));
}

void KnowledgeBase::add_snippet(Snippet snippet) {
  const SnippetRef ref = snippet.ref;
  if (!entities_.contains({ref.domain, ref.entity_id})) {
    throw LoadError("snippet (" + ref.domain + "," + ref.entity_id + "," +
                    ref.doc_id + ") has no matching entity");
  }
  auto [it, fresh] = snippets_.emplace(ref, std::move(snippet));
  if (!fresh) {
    throw LoadError("duplicate snippet key (" + ref.domain + "," +
                    ref.entity_id + "," + ref.doc_id + ")");
  }
}

const Snippet* KnowledgeBase::find(const SnippetRef& ref) const {
  auto it = snippets_.find(ref);
  return it == snippets_.end() ? nullptr : &it->second;
}

const Snippet& KnowledgeBase::at(const SnippetRef& ref) const {
  const Snippet* s = find(ref);
  if (s == nullptr) {
    throw std::out_of_range("unknown snippet (" + ref.domain + "," +
                            ref.entity_id + "," + ref.doc_id + ")");
  }
  return *s;
}

bool KnowledgeBase::has_entity(const EntityKey& key) const {
  return entities_.contains(key);
}

std::optional<std::string> KnowledgeBase::entity_name(
    const EntityKey& key) const {
  auto it = entities_.find(key);
  if (it == entities_.end()) return std::nullopt;
  return it->second.name;
}

std::vector<SnippetRef> KnowledgeBase::snippets_of(
    const EntityKey& key) const {
  std::vector<SnippetRef> out;
  SnippetRef lo{key.first, key.second, ""};
  for (auto it = snippets_.lower_bound(lo); it != snippets_.end(); ++it) {
    if (it->first.domain != key.first || it->first.entity_id != key.second) {
      break;
    }
    out.push_back(it->first);
  }
  return out;
}

std::vector<EntityKey> KnowledgeBase::star_keys() const {
  std::vector<EntityKey> out;
  for (const auto& [key, info] : entities_) {
    if (key.second == "*") out.push_back(key);
  }
  return out;
}

std::vector<Dialog> parse_dialogs(const std::string& text) {
  json root = parse_json(text, "logs");
  if (!root.is_array()) throw LoadError("logs: top level must be an array");
  std::vector<Dialog> dialogs;
  dialogs.reserve(root.size());
  for (std::size_t i = 0; i < root.size(); ++i) {
    const std::string where = "logs[" + std::to_string(i) + "]";
    const json& rec = root[i];
    if (!rec.is_array()) throw LoadError(where + ": dialog must be an array");
    if (rec.empty()) throw LoadError(where + ": dialog has no turns");
    Dialog dialog;
    dialog.id = std::to_string(i);
    for (std::size_t t = 0; t < rec.size(); ++t) {
      const json& jturn = rec[t];
      const std::string twhere = where + ".turns[" + std::to_string(t) + "]";
      if (!jturn.is_object() || !jturn.contains("speaker") ||
          !jturn.contains("text") || !jturn["speaker"].is_string() ||
          !jturn["text"].is_string()) {
        throw LoadError(twhere + ": expected {\"speaker\", \"text\"}");
      }
      const std::string speaker = jturn["speaker"].get<std::string>();
      Turn turn;
      if (speaker == "U") {
        turn.speaker = Speaker::kUser;
      } else if (speaker == "S") {
        turn.speaker = Speaker::kSystem;
      } else {
        throw LoadError(twhere + ": unknown speaker tag \"" + speaker + "\"");
      }
      turn.text = jturn["text"].get<std::string>();
      if (trim(turn.text).empty()) {
        throw LoadError(twhere + ": turn text is empty");
      }
      dialog.turns.push_back(std::move(turn));
    }
    if (dialog.turns.back().speaker != Speaker::kUser) {
      throw LoadError(where + ": last turn must be a USER turn");
    }
    dialogs.push_back(std::move(dialog));
  }
  return dialogs;
}

std::vector<Dialog> load_dialogs(const std::string& path) {
  return parse_dialogs(read_file(path));
}

std::vector<TurnLabel> parse_labels(const std::string& text) {
  json root = parse_json(text, "labels");
  if (!root.is_array()) throw LoadError("labels: top level must be an array");
  std::vector<TurnLabel> labels;
  labels.reserve(root.size());
  for (std::size_t i = 0; i < root.size(); ++i) {
    const std::string where = "labels[" + std::to_string(i) + "]";
    const json& rec = root[i];
    if (!rec.is_object() || !rec.contains("target") ||
        !rec["target"].is_boolean()) {
      throw LoadError(where + ": expected an object with boolean \"target\"");
    }
    TurnLabel label;
    label.target = rec["target"].get<bool>();
    if (rec.contains("knowledge")) {
      if (!rec["knowledge"].is_array()) {
        throw LoadError(where + ": \"knowledge\" must be an array");
      }
      for (const json& jref : rec["knowledge"]) {
        if (!jref.is_object() || !jref.contains("domain")) {
          throw LoadError(where + ": malformed knowledge ref");
        }
        SnippetRef ref;
        ref.domain = jref["domain"].get<std::string>();
        ref.entity_id = jref.contains("entity_id")
                            ? id_to_string(jref["entity_id"], where)
                            : "*";
        ref.doc_id = jref.contains("doc_id")
                         ? id_to_string(jref["doc_id"], where)
                         : "";
        label.snippets.push_back(std::move(ref));
      }
    }
    if (rec.contains("response") && !rec["response"].is_null()) {
      if (!rec["response"].is_string()) {
        throw LoadError(where + ": \"response\" must be a string");
      }
      label.response = rec["response"].get<std::string>();
    }
    if (label.target && label.snippets.empty()) {
      throw LoadError(where + ": target=true requires knowledge refs");
    }
    if (label.target != label.response.has_value()) {
      throw LoadError(where + ": response must be present iff target=true");
    }
    if (!label.target && !label.snippets.empty()) {
      throw LoadError(where + ": target=false must not carry knowledge refs");
    }
    labels.push_back(std::move(label));
  }
  return labels;
}

std::vector<TurnLabel> load_labels(const std::string& path) {
  return parse_labels(read_file(path));
}

KnowledgeBase parse_knowledge(const std::string& text) {
  json root = parse_json_no_duplicates(text, "knowledge");
  if (!root.is_object()) {
    throw LoadError("knowledge: top level must be an object");
  }
  KnowledgeBase kb;
  for (const auto& [domain, jdomain] : root.items()) {
    if (!jdomain.is_object()) {
      throw LoadError("knowledge." + domain + ": must be an object");
    }
    for (const auto& [entity_id, jentity] : jdomain.items()) {
      const std::string where = "knowledge." + domain + "." + entity_id;
      if (!jentity.is_object()) throw LoadError(where + ": must be an object");
      EntityInfo info;
      info.domain = domain;
      info.entity_id = entity_id;
      const bool star = entity_id == "*";
      if (jentity.contains("name") && jentity["name"].is_string() && !star) {
        info.name = jentity["name"].get<std::string>();
      }
      if (!star && !info.name.has_value()) {
        throw LoadError(where + ": named entity requires a \"name\"");
      }
      kb.add_entity(info);
      if (!jentity.contains("docs")) continue;
      const json& docs = jentity["docs"];
      if (!docs.is_object()) {
        throw LoadError(where + ".docs: must be an object");
      }
      for (const auto& [doc_id, jdoc] : docs.items()) {
        const std::string dwhere = where + ".docs." + doc_id;
        if (!jdoc.is_object() || !jdoc.contains("title") ||
            !jdoc.contains("body") || !jdoc["title"].is_string() ||
            !jdoc["body"].is_string()) {
          throw LoadError(dwhere + ": expected {\"title\", \"body\"}");
        }
        Snippet snippet;
        snippet.ref = {domain, entity_id, doc_id};
        snippet.entity_name = info.name;
        snippet.question = jdoc["title"].get<std::string>();
        snippet.answer = jdoc["body"].get<std::string>();
        if (snippet.question.empty() || snippet.answer.empty()) {
          throw LoadError(dwhere + ": title and body must be non-empty");
        }
        kb.add_snippet(std::move(snippet));
      }
    }
  }
  return kb;
}

KnowledgeBase load_knowledge(const std::string& path) {
  return parse_knowledge(read_file(path));
}

std::string dialogs_to_json(const std::vector<Dialog>& dialogs) {
  json root = json::array();
  for (const Dialog& dialog : dialogs) {
    json jdialog = json::array();
    for (const Turn& turn : dialog.turns) {
      jdialog.push_back(
          {{"speaker", turn.speaker == Speaker::kUser ? "U" : "S"},
           {"text", turn.text}});
    }
    root.push_back(std::move(jdialog));
  }
  return root.dump(2);
}

std::string labels_to_json(const std::vector<TurnLabel>& labels) {
  json root = json::array();
  for (const TurnLabel& label : labels) {
    json rec = {{"target", label.target}};
    if (label.target) {
      json refs = json::array();
      for (const SnippetRef& ref : label.snippets) {
        refs.push_back({{"domain", ref.domain},
                        {"entity_id", ref.entity_id},
                        {"doc_id", ref.doc_id}});
      }
      rec["knowledge"] = std::move(refs);
      rec["response"] = *label.response;
    }
    root.push_back(std::move(rec));
  }
  return root.dump(2);
}

std::string knowledge_to_json(const KnowledgeBase& kb) {
  json root = json::object();
  for (const auto& [key, info] : kb.entities()) {
    json& jentity = root[info.domain][info.entity_id];
    jentity["name"] = info.name.has_value() ? json(*info.name) : json(nullptr);
    jentity["docs"] = json::object();
  }
  for (const auto& [ref, snippet] : kb.snippets()) {
    root[ref.domain][ref.entity_id]["docs"][ref.doc_id] = {
        {"title", snippet.question}, {"body", snippet.answer}};
  }
  return root.dump(2);
}

ValidationReport validate_split(const std::vector<Dialog>& dialogs,
                                const std::vector<TurnLabel>& labels,
                                const KnowledgeBase& kb) {
  ValidationReport report;
  if (dialogs.size() != labels.size()) {
    ++report.count_mismatches;
    report.findings.push_back(
        "count mismatch: " + std::to_string(dialogs.size()) + " dialogs vs " +
        std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < dialogs.size(); ++i) {
    const Dialog& dialog = dialogs[i];
    if (dialog.turns.empty()) {
      ++report.invariant_violations;
      report.findings.push_back("dialog " + std::to_string(i) +
                                ": has no turns");
    } else if (dialog.turns.back().speaker != Speaker::kUser) {
      ++report.invariant_violations;
      report.findings.push_back("dialog " + std::to_string(i) +
                                ": last turn is not a USER turn");
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const TurnLabel& label = labels[i];
    if (label.target && label.snippets.empty()) {
      ++report.invariant_violations;
      report.findings.push_back("label " + std::to_string(i) +
                                ": target=true without knowledge refs");
    }
    if (label.target != label.response.has_value()) {
      ++report.invariant_violations;
      report.findings.push_back("label " + std::to_string(i) +
                                ": response present iff target=true violated");
    }
  }
  const std::size_t n = std::min(dialogs.size(), labels.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (const SnippetRef& ref : labels[i].snippets) {
      if (kb.find(ref) == nullptr) {
        ++report.unresolvable_refs;
        report.findings.push_back("label " + std::to_string(i) +
                                  ": unresolvable snippet ref (" + ref.domain +
                                  "," + ref.entity_id + "," + ref.doc_id +
                                  ")");
      }
    }
  }
  return report;
}

}  // namespace kgdialog::corpus
