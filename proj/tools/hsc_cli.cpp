// hsc: command-line front end.
//
//   hsc generate       --out DIR [--config synth.toml] [--seed K]
//   hsc extract-frames --notes notes.jsonl --lexicon lexicon.json --out frames.jsonl
//   hsc train          --config C --notes N --lexicon L --out DIR [--ablate none|no_struct|no_unstruct]
//   hsc eval           --checkpoint P --horizon 30d|1y --out report.json
//   hsc visualize      --checkpoint P --note-id ID --out note.html
//   hsc baseline       --config C --notes N [--lexicon L] --kind bow|boc --horizon 30d|1y --out report.json
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error.

#include <spdlog/spdlog.h>

#include <iostream>

#include "CLI11.hpp"
#include "hsc/commands.hpp"
#include "hsc/errors.hpp"

namespace {

using hsc::DataOverrides;
using std::filesystem::path;

struct OptionalPath {
  std::string value;
  std::optional<path> get() const { return value.empty() ? std::nullopt : std::optional<path>(value); }
};

void add_overrides(CLI::App* cmd, OptionalPath (&paths)[4]) {
  cmd->add_option("--notes", paths[0].value, "Notes file (default: as recorded in the checkpoint)");
  cmd->add_option("--patients", paths[1].value, "Patient labels file");
  cmd->add_option("--lexicon", paths[2].value, "Concept lexicon");
  cmd->add_option("--frames", paths[3].value, "Precomputed frames file");
}

DataOverrides collect(OptionalPath (&paths)[4]) {
  return DataOverrides{paths[0].get(), paths[1].get(), paths[2].get(), paths[3].get()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical semantic-correspondence embeddings for clinical notes"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  // generate
  std::string gen_config, gen_out;
  std::uint64_t gen_seed = 13;
  auto* gen = app.add_subcommand("generate", "Write a synthetic corpus");
  gen->add_option("--config", gen_config, "Synthetic corpus config");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Random seed");

  // extract-frames
  std::string ex_notes, ex_lexicon, ex_sections, ex_out;
  auto* ex = app.add_subcommand("extract-frames", "Tag notes into semantic frames");
  ex->add_option("--notes", ex_notes, "notes.jsonl")->required();
  ex->add_option("--lexicon", ex_lexicon, "lexicon.json")->required();
  ex->add_option("--sections", ex_sections, "Section header override (JSON)");
  ex->add_option("--out", ex_out, "frames.jsonl")->required();

  // train
  hsc::TrainOptions train_opts;
  std::string tr_config, tr_notes, tr_out, tr_ablate;
  OptionalPath tr_patients, tr_lexicon, tr_frames, tr_sections;
  std::uint64_t tr_seed = 0;
  auto* tr = app.add_subcommand("train", "Train the embedding model");
  tr->add_option("--config", tr_config, "Training config")->required();
  tr->add_option("--notes", tr_notes, "notes.jsonl")->required();
  tr->add_option("--patients", tr_patients.value, "patients.jsonl (default: next to the notes)");
  tr->add_option("--lexicon", tr_lexicon.value, "lexicon.json");
  tr->add_option("--frames", tr_frames.value, "Precomputed frames instead of the lexicon");
  tr->add_option("--sections", tr_sections.value, "Section header override (JSON)");
  tr->add_option("--out", tr_out, "Output directory")->required();
  tr->add_option("--ablate", tr_ablate, "none | no_struct | no_unstruct");
  auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "Override the config seed");

  // eval
  hsc::EvalOptions eval_opts;
  std::string ev_checkpoint, ev_horizon = "30d", ev_out;
  OptionalPath ev_paths[4];
  auto* ev = app.add_subcommand("eval", "AUC-ROC of the downstream mortality probe");
  ev->add_option("--checkpoint", ev_checkpoint, "checkpoint.json")->required();
  ev->add_option("--horizon", ev_horizon, "30d | 1y");
  ev->add_option("--split", eval_opts.split, "test | validation");
  ev->add_option("--out", ev_out, "report.json")->required();
  add_overrides(ev, ev_paths);

  // visualize
  hsc::VisualizeOptions vis_opts;
  std::string vis_checkpoint, vis_out;
  OptionalPath vis_paths[4];
  auto* vis = app.add_subcommand("visualize", "Write an HTML view of word and sentence weights");
  vis->add_option("--checkpoint", vis_checkpoint, "checkpoint.json")->required();
  vis->add_option("--note-id", vis_opts.note_id, "Note to render")->required();
  vis->add_option("--out", vis_out, "Output HTML file")->required();
  add_overrides(vis, vis_paths);

  // baseline
  hsc::BaselineOptions base_opts;
  std::string bl_config, bl_notes, bl_kind = "bow", bl_horizon = "30d", bl_out;
  OptionalPath bl_patients, bl_lexicon, bl_frames;
  auto* bl = app.add_subcommand("baseline", "tf-idf + logistic regression baseline");
  bl->add_option("--config", bl_config, "Training config (split, seed, classifier_l2)")->required();
  bl->add_option("--notes", bl_notes, "notes.jsonl")->required();
  bl->add_option("--patients", bl_patients.value, "patients.jsonl");
  bl->add_option("--lexicon", bl_lexicon.value, "lexicon.json (bag of concepts)");
  bl->add_option("--frames", bl_frames.value, "frames.jsonl (bag of concepts)");
  bl->add_option("--kind", bl_kind, "bow | boc");
  bl->add_option("--horizon", bl_horizon, "30d | 1y");
  bl->add_option("--split", base_opts.split, "test | validation");
  bl->add_option("--out", bl_out, "report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*gen) {
      hsc::cmd_generate(gen_config.empty() ? std::nullopt : std::optional<path>(gen_config), gen_out, gen_seed);
    } else if (*ex) {
      hsc::cmd_extract_frames(ex_notes, ex_lexicon, ex_sections.empty() ? std::nullopt : std::optional<path>(ex_sections),
                              ex_out);
    } else if (*tr) {
      train_opts.config = tr_config;
      train_opts.data.notes = tr_notes;
      train_opts.data.patients = tr_patients.get();
      train_opts.data.lexicon = tr_lexicon.get();
      train_opts.data.frames = tr_frames.get();
      train_opts.data.sections = tr_sections.get();
      train_opts.out = tr_out;
      if (!tr_ablate.empty()) train_opts.ablate = hsc::parse_ablation(tr_ablate);
      if (tr_seed_opt->count() > 0) train_opts.seed = tr_seed;
      hsc::cmd_train(train_opts);
    } else if (*ev) {
      eval_opts.checkpoint = ev_checkpoint;
      eval_opts.horizon = hsc::parse_horizon(ev_horizon);
      eval_opts.out = ev_out;
      eval_opts.data = collect(ev_paths);
      const hsc::EvalReport report = hsc::cmd_eval(eval_opts);
      std::cout << report.to_json();
    } else if (*vis) {
      vis_opts.checkpoint = vis_checkpoint;
      vis_opts.out = vis_out;
      vis_opts.data = collect(vis_paths);
      hsc::cmd_visualize(vis_opts);
    } else if (*bl) {
      base_opts.config = bl_config;
      base_opts.data.notes = bl_notes;
      base_opts.data.patients = bl_patients.get();
      base_opts.data.lexicon = bl_lexicon.get();
      base_opts.data.frames = bl_frames.get();
      base_opts.kind = hsc::parse_baseline(bl_kind);
      base_opts.horizon = hsc::parse_horizon(bl_horizon);
      base_opts.out = bl_out;
      const hsc::EvalReport report = hsc::cmd_baseline(base_opts);
      std::cout << report.to_json();
    }
  } catch (const hsc::ConfigError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const hsc::DataError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
