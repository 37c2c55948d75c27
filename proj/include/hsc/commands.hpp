// End-to-end pipelines shared by the command-line tool and the acceptance
// harness: data loading, training, evaluation, baselines and reports.

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "hsc/checkpoint.hpp"
#include "hsc/config.hpp"
#include "hsc/evaluation.hpp"
#include "hsc/training.hpp"

namespace hsc {

struct Dataset {
  std::vector<PatientRecord> records;
  std::optional<FrameMap> frames;
  LoadStats stats;

  const FrameMap* frame_map() const { return frames ? &*frames : nullptr; }
};

/// patients.jsonl next to the notes file, if present.
std::optional<std::filesystem::path> sibling_patients(const std::filesystem::path& notes);

/// Loads notes and labels; frames come from a frames file if given, otherwise
/// from tagging with the lexicon. Throws ConfigError if `need_frames` and
/// neither is given.
Dataset load_dataset(const DataPaths& paths, bool need_frames);

struct TrainRun {
  TrainResult result;
  DataSplit split;
};

/// Seeded patient split, then representation training on the train part.
TrainRun run_training(const TrainConfig& config, const Dataset& data);

/// Split parts restricted to the horizon's subsampled cohort (all labelled
/// patients when the configured target is 0).
DataSplit cohort(const TrainConfig& config, std::span<const PatientRecord> all, const DataSplit& split,
                 Horizon horizon);

/// Frozen representations, probe fitted on the train part, AUC on `eval_split`
/// ("test" or "validation").
EvalReport evaluate_model(Model& model, const Dataset& data, const DataSplit& split, Horizon horizon,
                          const std::string& eval_split = "test");

EvalReport evaluate_baseline(BaselineKind kind, const TrainConfig& config, const Dataset& data,
                             const DataSplit& split, Horizon horizon, const std::string& eval_split = "test");

std::string train_log_jsonl(std::span<const EpochLog> log);

// ---------------------------------------------------------------------------
// Commands.

struct TrainOptions {
  std::filesystem::path config;
  DataPaths data;
  std::filesystem::path out;
  std::optional<Ablation> ablate;
  std::optional<std::uint64_t> seed;
};
/// Writes checkpoint.json, train_log.jsonl and config.toml into `out`.
void cmd_train(const TrainOptions& options);

struct DataOverrides {
  std::optional<std::filesystem::path> notes;
  std::optional<std::filesystem::path> patients;
  std::optional<std::filesystem::path> lexicon;
  std::optional<std::filesystem::path> frames;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  Horizon horizon = Horizon::Days30;
  std::filesystem::path out;
  std::string split = "test";
  DataOverrides data;
};
EvalReport cmd_eval(const EvalOptions& options);

void cmd_extract_frames(const std::filesystem::path& notes, const std::filesystem::path& lexicon,
                        const std::optional<std::filesystem::path>& sections, const std::filesystem::path& out);

void cmd_generate(const std::optional<std::filesystem::path>& config, const std::filesystem::path& out,
                  std::uint64_t seed);

struct VisualizeOptions {
  std::filesystem::path checkpoint;
  std::string note_id;
  std::filesystem::path out;
  DataOverrides data;
};
void cmd_visualize(const VisualizeOptions& options);

struct BaselineOptions {
  std::filesystem::path config;
  DataPaths data;
  BaselineKind kind = BaselineKind::BagOfWords;
  Horizon horizon = Horizon::Days30;
  std::filesystem::path out;
  std::string split = "test";
};
EvalReport cmd_baseline(const BaselineOptions& options);

}  // namespace hsc
