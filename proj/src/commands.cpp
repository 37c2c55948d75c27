#include "hsc/commands.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <set>

#include "hsc/errors.hpp"
#include "hsc/synthetic.hpp"
#include "json.hpp"

namespace hsc {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

fs::path absolute_path(const fs::path& p) { return fs::weakly_canonical(fs::absolute(p)); }

std::optional<fs::path> absolute_path(const std::optional<fs::path>& p) {
  return p ? std::optional<fs::path>(absolute_path(*p)) : std::nullopt;
}

std::string model_name(const TrainConfig& config) {
  return config.ablation == Ablation::None ? "hiersemcor" : std::string(to_string(config.ablation));
}

const std::vector<PatientRecord>& eval_part(const DataSplit& split, const std::string& name) {
  if (name == "test") return split.test;
  if (name == "validation") return split.validation;
  throw ConfigError("unknown evaluation split '" + name + "' (expected test or validation)");
}

DataPaths merge(DataPaths base, const DataOverrides& o) {
  if (o.notes) base.notes = *o.notes;
  if (o.patients) base.patients = o.patients;
  if (o.lexicon) base.lexicon = o.lexicon;
  if (o.frames) base.frames = o.frames;
  return base;
}

}  // namespace

std::optional<fs::path> sibling_patients(const fs::path& notes) {
  const fs::path candidate = notes.parent_path() / "patients.jsonl";
  if (fs::exists(candidate)) return candidate;
  return std::nullopt;
}

Dataset load_dataset(const DataPaths& paths, bool need_frames) {
  Dataset data;
  const std::optional<fs::path> patients = paths.patients ? paths.patients : sibling_patients(paths.notes);
  LoadResult loaded = load_notes(paths.notes, patients);
  data.records = std::move(loaded.records);
  data.stats = loaded.stats;
  spdlog::info("loaded {} patients from {}", data.records.size(), paths.notes.string());

  if (paths.frames) {
    FrameMap map;
    for (NoteFrames& nf : read_frames_jsonl(*paths.frames)) map[nf.note_id] = std::move(nf.frames);
    data.frames = std::move(map);
  } else if (paths.lexicon) {
    const ConceptLexicon lexicon = ConceptLexicon::load(*paths.lexicon);
    const SectionInventory sections = paths.sections ? SectionInventory::load(*paths.sections) : SectionInventory::defaults();
    data.frames = extract_frames(data.records, lexicon, sections);
  } else if (need_frames) {
    throw ConfigError("semantic frames are required: pass --lexicon or --frames");
  }
  return data;
}

TrainRun run_training(const TrainConfig& config, const Dataset& data) {
  const SplitRatios ratios{config.split_train, config.split_test, config.split_validation};
  DataSplit parts = split(data.records, ratios, config.seed);
  spdlog::info("split: {} train, {} test, {} validation patients", parts.train.size(), parts.test.size(),
               parts.validation.size());
  TrainResult result = train(config, parts.train, data.frame_map());
  return TrainRun{std::move(result), std::move(parts)};
}

DataSplit cohort(const TrainConfig& config, std::span<const PatientRecord> all, const DataSplit& parts,
                 Horizon horizon) {
  const int target = horizon == Horizon::Days30 ? config.target_neg_30d : config.target_neg_1y;
  if (target == 0) return parts;
  std::set<std::string> keep;
  for (const PatientRecord& p : subsample_negatives(all, horizon, static_cast<std::size_t>(target), config.seed))
    keep.insert(p.patient_id);
  auto filter = [&](const std::vector<PatientRecord>& in) {
    std::vector<PatientRecord> out;
    for (const PatientRecord& p : in)
      if (keep.contains(p.patient_id)) out.push_back(p);
    return out;
  };
  return DataSplit{filter(parts.train), filter(parts.test), filter(parts.validation)};
}

EvalReport evaluate_model(Model& model, const Dataset& data, const DataSplit& parts, Horizon horizon,
                          const std::string& eval_split) {
  const DataSplit c = cohort(model.config(), data.records, parts, horizon);
  const std::vector<PatientRecord>& eval = eval_part(c, eval_split);
  const Matrix train_x = represent_patients(model, c.train, data.frame_map());
  const Matrix eval_x = represent_patients(model, eval, data.frame_map());
  EvalReport report = evaluate_features(train_x, c.train, eval_x, eval, horizon, model.config().classifier_l2);
  report.seed = model.config().seed;
  report.config_hash = model.config().hash();
  report.model = model_name(model.config());
  report.split = eval_split;
  return report;
}

EvalReport evaluate_baseline(BaselineKind kind, const TrainConfig& config, const Dataset& data,
                             const DataSplit& parts, Horizon horizon, const std::string& eval_split) {
  const DataSplit c = cohort(config, data.records, parts, horizon);
  const std::vector<PatientRecord>& eval = eval_part(c, eval_split);
  TfidfFeaturizer featurizer(kind);
  featurizer.fit(parts.train, data.frame_map());
  const Matrix train_x = featurizer.transform(c.train, data.frame_map());
  const Matrix eval_x = featurizer.transform(eval, data.frame_map());
  EvalReport report = evaluate_features(train_x, c.train, eval_x, eval, horizon, config.classifier_l2);
  report.seed = config.seed;
  report.config_hash = config.hash();
  report.model = std::string(to_string(kind));
  report.split = eval_split;
  return report;
}

std::string train_log_jsonl(std::span<const EpochLog> log) {
  std::string out;
  for (const EpochLog& e : log) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["L_cmm"] = e.l_cmm;
    j["L_smooth"] = e.l_smooth;
    j["total"] = e.total;
    j["L_sup"] = e.l_sup;
    out += j.dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

void cmd_train(const TrainOptions& options) {
  TrainConfig config = TrainConfig::load(options.config);
  if (options.ablate) config.ablation = *options.ablate;
  if (options.seed) config.seed = *options.seed;
  config.validate();

  DataPaths paths;
  paths.notes = absolute_path(options.data.notes);
  paths.patients = absolute_path(options.data.patients ? options.data.patients : sibling_patients(options.data.notes));
  paths.lexicon = absolute_path(options.data.lexicon);
  paths.frames = absolute_path(options.data.frames);
  paths.sections = absolute_path(options.data.sections);

  const Dataset data = load_dataset(paths, config.ablation != Ablation::NoStruct);
  TrainRun run = run_training(config, data);
  fs::create_directories(options.out);
  save_checkpoint(options.out / "checkpoint.json", run.result.model, SplitIds::of(run.split), paths);
  write_text(options.out / "train_log.jsonl", train_log_jsonl(run.result.log));
  write_text(options.out / "config.toml", config.to_flat().to_string());
  spdlog::info("wrote {}", (options.out / "checkpoint.json").string());
}

EvalReport cmd_eval(const EvalOptions& options) {
  Checkpoint ck = load_checkpoint(options.checkpoint);
  const Dataset data = load_dataset(merge(ck.data, options.data), ck.model.uses_frames());
  const DataSplit parts = ck.split.apply(data.records);
  EvalReport report = evaluate_model(ck.model, data, parts, options.horizon, options.split);
  write_text(options.out, report.to_json());
  spdlog::info("{} AUC-ROC on {} ({} pos / {} neg): {:.4f}", to_string(options.horizon), options.split, report.n_pos,
               report.n_neg, report.auc_roc);
  return report;
}

void cmd_extract_frames(const fs::path& notes, const fs::path& lexicon, const std::optional<fs::path>& sections,
                        const fs::path& out) {
  const LoadResult loaded = load_notes(notes);
  const ConceptLexicon lex = ConceptLexicon::load(lexicon);
  const SectionInventory inv = sections ? SectionInventory::load(*sections) : SectionInventory::defaults();
  std::vector<NoteFrames> all;
  for (const PatientRecord& p : loaded.records)
    for (const Note& n : p.notes) all.push_back(NoteFrames{n.note_id, build_frames(n, lex, inv)});
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_frames_jsonl(out, all);
  spdlog::info("wrote frames for {} notes to {}", all.size(), out.string());
}

void cmd_generate(const std::optional<fs::path>& config, const fs::path& out, std::uint64_t seed) {
  const SynthConfig sc = config ? SynthConfig::load(*config) : SynthConfig{};
  const SyntheticCorpus corpus = generate_synthetic(sc, seed);
  write_synthetic(corpus, out);
  spdlog::info("generated {} patients into {}", corpus.records.size(), out.string());
}

void cmd_visualize(const VisualizeOptions& options) {
  Checkpoint ck = load_checkpoint(options.checkpoint);
  const Dataset data = load_dataset(merge(ck.data, options.data), ck.model.uses_frames());
  for (const PatientRecord& p : data.records)
    for (const Note& n : p.notes) {
      if (n.note_id != options.note_id) continue;
      const std::vector<SemanticFrame>* frames = nullptr;
      if (const FrameMap* map = data.frame_map()) {
        auto it = map->find(n.note_id);
        if (it != map->end()) frames = &it->second;
      }
      const NoteExample ex = ck.model.make_example(n, frames);
      write_text(options.out, render_note_html(n, ck.model.analyze(ex)));
      spdlog::info("wrote {}", options.out.string());
      return;
    }
  throw DataError("note " + options.note_id + " not found");
}

EvalReport cmd_baseline(const BaselineOptions& options) {
  const TrainConfig config = TrainConfig::load(options.config);
  const Dataset data = load_dataset(options.data, options.kind == BaselineKind::BagOfConcepts);
  const DataSplit parts = split(data.records, {config.split_train, config.split_test, config.split_validation},
                                config.seed);
  EvalReport report = evaluate_baseline(options.kind, config, data, parts, options.horizon, options.split);
  write_text(options.out, report.to_json());
  spdlog::info("{} baseline {} AUC-ROC on {}: {:.4f}", to_string(options.kind), to_string(options.horizon),
               options.split, report.auc_roc);
  return report;
}

}  // namespace hsc
