// Helpers shared by the unit tests and the acceptance harness.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "hsc/autodiff.hpp"
#include "hsc/corpus.hpp"
#include "hsc/frames.hpp"
#include "hsc/model.hpp"
#include "hsc/random.hpp"
#include "hsc/training.hpp"

namespace hsc::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.uniform(-1.0, 1.0);
  return m;
}

/// |a - b| / max(|a|, |b|, floor).
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradientReport {
  std::string name;
  double worst_relative = 0.0;
  double worst_absolute = 0.0;
};

/// Central differences of `loss` for every entry of every parameter against
/// the analytic gradient left in Parameter::grad by `backward`.
inline std::vector<GradientReport> check_gradients(std::span<ad::Parameter* const> params,
                                                   const std::function<double()>& loss,
                                                   const std::function<void()>& backward, double h = 1e-6) {
  for (ad::Parameter* p : params) p->zero_grad();
  backward();
  std::vector<GradientReport> out;
  for (ad::Parameter* p : params) {
    GradientReport r{p->name};
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double old = p->value.data()[i];
      p->value.data()[i] = old + h;
      const double up = loss();
      p->value.data()[i] = old - h;
      const double down = loss();
      p->value.data()[i] = old;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad.data()[i];
      r.worst_relative = std::max(r.worst_relative, relative_error(numeric, analytic, 1e-4));
      r.worst_absolute = std::max(r.worst_absolute, std::abs(numeric - analytic));
    }
    out.push_back(r);
  }
  return out;
}

/// Gradient check of a scalar function of Vars built on a fresh tape.
inline double max_op_gradient_error(std::vector<Matrix> inputs,
                                    const std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>& f,
                                    double h = 1e-6) {
  std::vector<ad::Parameter> params;
  for (std::size_t i = 0; i < inputs.size(); ++i) params.emplace_back("x" + std::to_string(i), inputs[i]);
  auto run = [&](bool backward) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (auto& p : params) vars.push_back(tape.param(p));
    ad::Var out = f(tape, vars);
    if (backward) tape.backward(out);
    return out.scalar();
  };
  std::vector<ad::Parameter*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  double worst = 0.0;
  for (const auto& r : check_gradients(ptrs, [&] { return run(false); }, [&] { run(true); }, h))
    worst = std::max(worst, r.worst_relative);
  return worst;
}

/// A note whose sentences are the given lines, one per line.
inline Note make_note(const std::string& id, const std::string& patient, NoteCategory category,
                      const std::string& text) {
  Note n;
  n.note_id = id;
  n.patient_id = patient;
  n.category = category;
  n.chart_time = "2150-01-01T00:00:00";
  n.raw_text = text;
  n.sentences = split_sentences(text);
  return n;
}

inline PatientRecord make_patient(const std::string& id, std::vector<Note> notes, bool died_30d, bool died_1y) {
  PatientRecord p;
  p.patient_id = id;
  p.notes = std::move(notes);
  p.died_30d = died_30d;
  p.died_1y = died_1y;
  p.age_years = 60;
  return p;
}

inline ConceptLexicon toy_lexicon() {
  ConceptLexicon lex;
  lex.add("seizure disorder", "dsyn");
  lex.add("heart failure", "dsyn");
  lex.add("heart", "bpoc");
  lex.add("aspirin", "phsu");
  return lex;
}

/// Small dimensions used by the gradient and determinism checks.
inline TrainConfig tiny_config() {
  TrainConfig c;
  c.d_emb = 6;
  c.d_frame = 5;
  c.pad_len_n = 4;
  c.conv_filters = {4, 3};
  c.kernel_sizes = {2, 0};
  c.f_L = 8;
  c.d_ssm = 8;
  c.ssm_filters = 4;
  c.dropout = 0.2;
  c.lambda_l2 = 0.01;
  return c;
}

/// One patient, one note of two sentences with at most four words each.
struct TinyInstance {
  std::vector<PatientRecord> records;
  FrameMap frames;
  Model model;
  std::vector<NoteExample> examples;
  std::vector<std::vector<std::vector<FrameIds>>> negatives;

  static TinyInstance build(TrainConfig config, std::uint64_t seed = 5) {
    std::vector<PatientRecord> records{make_patient(
        "P1",
        {make_note("N1", "P1", NoteCategory::Nursing, "No seizure disorder\nworsening heart failure")},
        true, true)};
    ConceptLexicon lex = toy_lexicon();
    FrameMap frames = extract_frames(records, lex);
    config.seed = seed;
    Model model = Model::create(config, records, &frames);
    TinyInstance t{records, frames, std::move(model), {}, {}};
    t.examples = t.model.make_examples(t.records, &t.frames, Horizon::Days30);
    // Random nonzero biases keep every ReLU away from its kink.
    Rng rng(seed + 100);
    for (ad::Parameter* p : t.model.parameters())
      if (p->name.ends_with(".b") || p->name.ends_with("b_n"))
        for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += rng.uniform(0.05, 0.3);
    // Corrupted frames: the sentences' frames swapped.
    const auto& f = t.frames.at("N1");
    std::vector<FrameIds> neg;
    for (std::size_t i = 0; i < f.size(); ++i)
      neg.push_back(t.model.vocab().encode(f[(i + 1) % f.size()], t.model.config().pad_len_n));
    t.negatives = {{neg}};
    return t;
  }

  /// Joint loss with a dropout mask that is identical on every call.
  double loss(bool backward = false) {
    ad::Tape tape;
    ad::Binder bind(tape);
    Rng dropout(77);
    std::vector<const NoteExample*> batch{&examples[0]};
    LossVars l = joint_loss(model, bind, batch, negatives, &dropout);
    if (backward) tape.backward(l.total);
    return l.total.scalar();
  }
};

/// Fresh empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hsc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace hsc::testing
