#include "hsc/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "hsc/errors.hpp"
#include "json.hpp"

namespace hsc {

using json = nlohmann::ordered_json;

SplitIds SplitIds::of(const DataSplit& split) {
  SplitIds ids;
  for (const PatientRecord& p : split.train) ids.train.push_back(p.patient_id);
  for (const PatientRecord& p : split.test) ids.test.push_back(p.patient_id);
  for (const PatientRecord& p : split.validation) ids.validation.push_back(p.patient_id);
  return ids;
}

DataSplit SplitIds::apply(std::span<const PatientRecord> records) const {
  std::map<std::string_view, const PatientRecord*> by_id;
  for (const PatientRecord& p : records) by_id.emplace(p.patient_id, &p);
  auto take = [&](const std::vector<std::string>& ids) {
    std::vector<PatientRecord> out;
    for (const std::string& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError("patient " + id + " from the checkpoint split is not in the data");
      out.push_back(*it->second);
    }
    return out;
  };
  return DataSplit{take(train), take(test), take(validation)};
}

namespace {

json path_or_null(const std::optional<std::filesystem::path>& p) { return p ? json(p->string()) : json(nullptr); }

std::optional<std::filesystem::path> optional_path(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return std::filesystem::path(j.at(key).get<std::string>());
}

}  // namespace

std::string serialize_checkpoint(Model& model, const SplitIds& split, const DataPaths& data) {
  json j;
  j["version"] = kCheckpointVersion;
  json cfg = json::object();
  const FlatConfig flat = model.config().to_flat();
  for (const auto& [k, v] : flat.values()) cfg[k] = v;
  j["config"] = cfg;
  j["vocab"] = {{"sc", model.vocab().category.tokens()},
                {"tok", model.vocab().token.tokens()},
                {"type", model.vocab().type.tokens()}};
  json df = json::object();
  for (const auto& [w, n] : model.stats().document_frequency()) df[w] = n;
  j["idf"] = {{"document_count", model.stats().document_count()}, {"document_frequency", df}};
  json params = json::array();
  for (const ad::Parameter* p : model.parameters()) {
    std::vector<double> values(p->value.data(), p->value.data() + p->value.size());
    params.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}, {"data", values}});
  }
  j["params"] = params;
  j["split"] = {{"train", split.train}, {"test", split.test}, {"validation", split.validation}};
  j["data"] = {{"notes", data.notes.string()},
               {"patients", path_or_null(data.patients)},
               {"lexicon", path_or_null(data.lexicon)},
               {"frames", path_or_null(data.frames)},
               {"sections", path_or_null(data.sections)}};
  return j.dump() + "\n";
}

void save_checkpoint(const std::filesystem::path& path, Model& model, const SplitIds& split, const DataPaths& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << serialize_checkpoint(model, split, data);
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint parse_checkpoint(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw DataError("unsupported checkpoint version " + j.at("version").dump());
    FlatConfig flat;
    for (const auto& [k, v] : j.at("config").items()) flat.set(k, v.get<std::string>());
    const TrainConfig config = TrainConfig::from_flat(flat);

    FrameVocab vocab;
    vocab.category = Vocabulary::from_tokens(j.at("vocab").at("sc").get<std::vector<std::string>>());
    vocab.token = Vocabulary::from_tokens(j.at("vocab").at("tok").get<std::vector<std::string>>());
    vocab.type = Vocabulary::from_tokens(j.at("vocab").at("type").get<std::vector<std::string>>());

    std::map<std::string, std::size_t, std::less<>> df;
    for (const auto& [w, n] : j.at("idf").at("document_frequency").items()) df.emplace(w, n.get<std::size_t>());
    CorpusStats stats = CorpusStats::from_counts(j.at("idf").at("document_count").get<std::size_t>(), std::move(df));

    Checkpoint ck{Model(config, std::move(vocab), std::move(stats)), {}, {}};
    std::size_t restored = 0;
    for (const json& p : j.at("params")) {
      const std::string name = p.at("name").get<std::string>();
      ad::Parameter* target = ck.model.find(name);
      if (target == nullptr) throw DataError("checkpoint parameter " + name + " is unknown to this model");
      const auto rows = p.at("rows").get<Eigen::Index>(), cols = p.at("cols").get<Eigen::Index>();
      if (rows != target->value.rows() || cols != target->value.cols())
        throw DataError("checkpoint parameter " + name + " has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", model expects " + std::to_string(target->value.rows()) + "x" +
                        std::to_string(target->value.cols()));
      const std::vector<double> values = p.at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(values.size()) != rows * cols)
        throw DataError("checkpoint parameter " + name + " has the wrong number of values");
      target->value = Eigen::Map<const Matrix>(values.data(), rows, cols);
      ++restored;
    }
    if (restored != ck.model.parameters().size()) throw DataError("checkpoint is missing parameters");

    const json& split = j.at("split");
    ck.split.train = split.at("train").get<std::vector<std::string>>();
    ck.split.test = split.at("test").get<std::vector<std::string>>();
    ck.split.validation = split.at("validation").get<std::vector<std::string>>();
    const json& data = j.at("data");
    ck.data.notes = data.at("notes").get<std::string>();
    ck.data.patients = optional_path(data, "patients");
    ck.data.lexicon = optional_path(data, "lexicon");
    ck.data.frames = optional_path(data, "frames");
    ck.data.sections = optional_path(data, "sections");
    return ck;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace hsc
