// JSON checkpoints: configuration, vocabularies, idf counts, every parameter
// tensor, the patient split and the data the model was trained on.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hsc/corpus.hpp"
#include "hsc/model.hpp"

namespace hsc {

inline constexpr int kCheckpointVersion = 1;

struct SplitIds {
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::vector<std::string> validation;

  static SplitIds of(const DataSplit& split);
  /// Rebuilds the split from loaded records; throws DataError on unknown ids.
  DataSplit apply(std::span<const PatientRecord> records) const;
};

struct DataPaths {
  std::filesystem::path notes;
  std::optional<std::filesystem::path> patients;
  std::optional<std::filesystem::path> lexicon;
  std::optional<std::filesystem::path> frames;
  std::optional<std::filesystem::path> sections;
};

struct Checkpoint {
  Model model;
  SplitIds split;
  DataPaths data;
};

std::string serialize_checkpoint(Model& model, const SplitIds& split, const DataPaths& data);
void save_checkpoint(const std::filesystem::path& path, Model& model, const SplitIds& split, const DataPaths& data);
Checkpoint parse_checkpoint(std::string_view text);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hsc
