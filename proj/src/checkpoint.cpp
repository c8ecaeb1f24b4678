#include "kgdialog/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "kgdialog/corpus.hpp"

namespace kgdialog::checkpoint {

using nlohmann::json;

namespace {

json tensor_to_json(const neural::Tensor& t) {
  return json{{"shape", t.shape}, {"values", t.values}};
}

neural::Tensor tensor_from_json(const json& j) {
  neural::Tensor t;
  t.shape = j.at("shape").get<std::vector<std::size_t>>();
  t.values = j.at("values").get<std::vector<double>>();
  std::size_t total = 1;
  for (std::size_t dim : t.shape) total *= dim;
  if (total != t.values.size()) {
    throw corpus::LoadError("checkpoint: tensor shape/value mismatch");
  }
  return t;
}

json encoder_to_json(const neural::EncoderParams& params) {
  return json{{"vocab", params.vocab.tokens()},
              {"embedding", tensor_to_json(params.embedding)},
              {"proj_w", tensor_to_json(params.proj_w)},
              {"proj_b", tensor_to_json(params.proj_b)}};
}

neural::EncoderParams encoder_from_json(const json& j) {
  neural::EncoderParams params;
  params.vocab = neural::Vocab::from_tokens(
      j.at("vocab").get<std::vector<std::string>>());
  params.embedding = tensor_from_json(j.at("embedding"));
  params.proj_w = tensor_from_json(j.at("proj_w"));
  params.proj_b = tensor_from_json(j.at("proj_b"));
  return params;
}

json head_to_json(const neural::ClassifierHead& head) {
  return json{{"w", tensor_to_json(head.w)}, {"b", tensor_to_json(head.b)}};
}

neural::ClassifierHead head_from_json(const json& j) {
  neural::ClassifierHead head;
  head.w = tensor_from_json(j.at("w"));
  head.b = tensor_from_json(j.at("b"));
  return head;
}

void write_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw corpus::LoadError("cannot write file: " + path);
  out << j.dump(2) << '\n';
}

json read_checkpoint(const std::string& path, const std::string& kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw corpus::LoadError("cannot open checkpoint: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  json j = json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) {
    throw corpus::LoadError("checkpoint " + path + ": not valid JSON");
  }
  if (j.value("format_version", -1) != kFormatVersion) {
    throw corpus::LoadError("checkpoint " + path +
                            ": unsupported format_version");
  }
  if (!kind.empty() && j.value("kind", "") != kind) {
    throw corpus::LoadError("checkpoint " + path + ": expected kind \"" +
                            kind + "\", found \"" + j.value("kind", "?") +
                            "\"");
  }
  return j;
}

}  // namespace

void save_detector(const std::string& path,
                   const detector::DetectorEnsemble& ensemble) {
  json models = json::array();
  for (const detector::DetectorModel& model : ensemble.models) {
    models.push_back(json{{"encoder", encoder_to_json(model.encoder)},
                          {"head", head_to_json(model.head)},
                          {"threshold", model.threshold}});
  }
  write_file(path,
             json{{"format_version", kFormatVersion},
                  {"kind", "detector_ensemble"},
                  {"threshold", ensemble.threshold},
                  {"vote_rule",
                   ensemble.vote_rule == detector::VoteRule::kMajority
                       ? "majority"
                       : "mean"},
                  {"models", std::move(models)}});
}

detector::DetectorEnsemble load_detector(const std::string& path) {
  const json j = read_checkpoint(path, "detector_ensemble");
  detector::DetectorEnsemble ensemble;
  ensemble.threshold = j.at("threshold").get<double>();
  ensemble.vote_rule = j.value("vote_rule", "majority") == "mean"
                           ? detector::VoteRule::kMeanProbability
                           : detector::VoteRule::kMajority;
  for (const json& jmodel : j.at("models")) {
    detector::DetectorModel model;
    model.encoder = encoder_from_json(jmodel.at("encoder"));
    model.head = head_from_json(jmodel.at("head"));
    model.threshold = jmodel.at("threshold").get<double>();
    ensemble.models.push_back(std::move(model));
  }
  if (ensemble.models.empty()) {
    throw corpus::LoadError("checkpoint " + path + ": no detector models");
  }
  return ensemble;
}

void save_ranker(const std::string& path,
                 const selector::RankerModel& model) {
  write_file(path,
             json{{"format_version", kFormatVersion},
                  {"kind", "ranker"},
                  {"stage", model.stage == selector::RankerStage::kEntity
                                ? "entity"
                                : "knowledge"},
                  {"encoder", encoder_to_json(model.encoder)},
                  {"head", head_to_json(model.head)}});
}

selector::RankerModel load_ranker(const std::string& path) {
  const json j = read_checkpoint(path, "ranker");
  selector::RankerModel model;
  const std::string stage = j.at("stage").get<std::string>();
  if (stage == "entity") {
    model.stage = selector::RankerStage::kEntity;
  } else if (stage == "knowledge") {
    model.stage = selector::RankerStage::kKnowledge;
  } else {
    throw corpus::LoadError("checkpoint " + path + ": unknown stage " + stage);
  }
  model.encoder = encoder_from_json(j.at("encoder"));
  model.head = head_from_json(j.at("head"));
  return model;
}

void save_encoder(const std::string& path,
                  const neural::EncoderParams& params) {
  write_file(path, json{{"format_version", kFormatVersion},
                        {"kind", "encoder"},
                        {"encoder", encoder_to_json(params)}});
}

neural::EncoderParams load_encoder(const std::string& path) {
  const json j = read_checkpoint(path, "encoder");
  return encoder_from_json(j.at("encoder"));
}

void save_seq2seq(const std::string& path,
                  const generator::Seq2SeqParams& params) {
  write_file(path, json{{"format_version", kFormatVersion},
                        {"kind", "seq2seq"},
                        {"vocab", params.vocab.tokens()},
                        {"embedding", tensor_to_json(params.embedding)},
                        {"pos", tensor_to_json(params.pos)},
                        {"dec_w", tensor_to_json(params.dec_w)},
                        {"vocab_w", tensor_to_json(params.vocab_w)},
                        {"ptr_w", tensor_to_json(params.ptr_w)},
                        {"ptr_b", tensor_to_json(params.ptr_b)},
                        {"use_pointer", params.use_pointer}});
}

generator::Seq2SeqParams load_seq2seq(const std::string& path) {
  const json j = read_checkpoint(path, "seq2seq");
  generator::Seq2SeqParams params;
  params.vocab = neural::Vocab::from_tokens(
      j.at("vocab").get<std::vector<std::string>>());
  params.embedding = tensor_from_json(j.at("embedding"));
  params.pos = tensor_from_json(j.at("pos"));
  params.dec_w = tensor_from_json(j.at("dec_w"));
  params.vocab_w = tensor_from_json(j.at("vocab_w"));
  params.ptr_w = tensor_from_json(j.at("ptr_w"));
  params.ptr_b = tensor_from_json(j.at("ptr_b"));
  params.use_pointer = j.at("use_pointer").get<bool>();
  return params;
}

std::string checkpoint_kind(const std::string& path) {
  return read_checkpoint(path, "").value("kind", "");
}

}  // namespace kgdialog::checkpoint
