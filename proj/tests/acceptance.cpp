// Acceptance harness: one PASS/FAIL line per criterion. Exits non-zero if any
// criterion fails. Tolerances are fixed below.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include "hsc/checkpoint.hpp"
#include "hsc/commands.hpp"
#include "hsc/evaluation.hpp"
#include "hsc/synthetic.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace hsc {
namespace {

using namespace hsc::testing;
using Clock = std::chrono::steady_clock;

const std::filesystem::path kSource = HSC_SOURCE_DIR;

constexpr double kGradientTol = 1e-3;       // relative, criterion 1
constexpr double kGradientSeconds = 30.0;   // criterion 1
constexpr double kOracleTol = 1e-6;         // criterion 2
constexpr int kOracleTrials = 100;          // criterion 2
constexpr double kInvariantTol = 1e-6;      // criterion 3
constexpr int kLossEpochs = 5;              // criterion 4
constexpr double kFullAucFloor = 0.90;      // criterion 5
constexpr double kAblationSlack = 0.02;     // criterion 5
constexpr double kEndToEndSeconds = 600.0;  // criterion 5
const std::vector<std::uint64_t> kSeeds{1, 2, 3};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt_double(double x, int precision = 4) {
  std::ostringstream out;
  out.precision(precision);
  out << x;
  return out.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double max_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

// ---------------------------------------------------------------------------
// 1. Gradient correctness.

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  TinyInstance t = TinyInstance::build(tiny_config());
  const NoteExample& note = t.examples[0];
  std::size_t max_words = 0;
  for (std::size_t s = 0; s + 1 < note.bounds.size(); ++s)
    max_words = std::max(max_words, static_cast<std::size_t>(note.bounds[s + 1] - note.bounds[s]));
  const auto params = t.model.parameters();
  double worst = 0;
  std::string worst_name;
  for (const auto& r : check_gradients(params, [&] { return t.loss(false); }, [&] { t.loss(true); }))
    if (r.worst_relative >= worst) {
      worst = r.worst_relative;
      worst_name = r.name;
    }
  const double secs = seconds_since(t0);
  const bool shape_ok = note.sentences == 2 && max_words <= 4 && t.model.config().f_L == 8;
  return {shape_ok && worst <= kGradientTol && secs < kGradientSeconds,
          std::to_string(params.size()) + " parameter tensors, D=" + std::to_string(note.sentences) +
              ", N<=" + std::to_string(max_words) + ", worst relative error " + fmt_double(worst, 3) + " (" +
              worst_name + "), " + fmt_double(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 2. Oracle equivalence.

Outcome oracle_equivalence() {
  double gate = 0, chain = 0, salience = 0, conv = 0, ssm = 0, auc = 0;
  for (int trial = 0; trial < kOracleTrials; ++trial) {
    Rng rng(10'000 + static_cast<std::uint64_t>(trial));
    const Eigen::Index D = 1 + static_cast<Eigen::Index>(rng.below(4));
    const Eigen::Index d_s = 1 + static_cast<Eigen::Index>(rng.below(6));

    // Gating.
    {
      const int d = 1 + static_cast<int>(rng.below(4));
      TermGate g(d, rng);
      g.weight().value = random_matrix(1, d + 1, rng, 2.0);
      std::vector<Eigen::Index> bounds{0};
      for (Eigen::Index s = 0; s < D; ++s) bounds.push_back(bounds.back() + 1 + static_cast<Eigen::Index>(rng.below(4)));
      const Matrix types = random_matrix(d, bounds.back(), rng), idf = random_matrix(1, bounds.back(), rng, 3.0);
      ad::Tape tape;
      ad::Binder bind(tape);
      const Matrix got = g.weights(bind, tape.constant(types), tape.constant(idf), bounds).value();
      const auto want = gate_oracle(g.weight().value, types, idf, bounds);
      for (Eigen::Index j = 0; j < got.cols(); ++j)
        gate = std::max(gate, std::abs(got(0, j) - want[static_cast<std::size_t>(j)]));
    }
    // Trilinear attention chain and salience.
    {
      const Matrix w_s = random_matrix(1, 3 * d_s, rng), e_s = random_matrix(D, d_s, rng),
                   e_sf = random_matrix(D, d_s, rng), w_n = random_matrix(2 * d_s, 1, rng);
      const double b_n = rng.uniform(-1.0, 1.0);
      const AttentionOracle o = attention_oracle(w_s, e_s, e_sf, w_n, b_n);
      const Attention a = bidirectional_attention(similarity_matrix(w_s, e_s, e_sf), e_s, e_sf);
      chain = std::max({chain, max_diff(a.sim, o.sim), max_diff(a.t2s_bar, o.rowsm), max_diff(a.s2t_bar, o.colsm),
                        max_diff(a.u_t2s, o.u_t2s), max_diff(a.u_s2t, o.u_s2t)});
      const FusedNote n = note_representation(fuse(e_s, e_sf, a.u_t2s, a.u_s2t), w_n, b_n);
      salience = std::max({salience, max_diff(n.v, o.v), max_diff(n.alpha, o.alpha), max_diff(n.c, o.c)});
    }
    // Convolution forward.
    {
      const int d = 1 + static_cast<int>(rng.below(3)), n = 3 + static_cast<int>(rng.below(6));
      const std::vector<int> filters{1 + static_cast<int>(rng.below(3)), 1 + static_cast<int>(rng.below(3))};
      const std::vector<int> kernels{1 + static_cast<int>(rng.below(3)), 0};
      const std::vector<int> strides{1 + static_cast<int>(rng.below(2)), 1};
      ConvStack stack("oracle", d, n, filters, kernels, strides, static_cast<int>(d_s), rng);
      for (ad::Parameter* p : stack.parameters()) p->value = random_matrix(p->value.rows(), p->value.cols(), rng, 0.5);
      const Matrix x = random_matrix(d, n, rng);
      conv = std::max(conv, max_diff(stack.encode(x), conv_stack_oracle(x, stack)));
    }
    // Cosine SSM.
    {
      const Matrix v = random_matrix(D, d_s, rng);
      const Matrix s = build_ssm(v);
      for (Eigen::Index i = 0; i < D; ++i)
        for (Eigen::Index k = 0; k < D; ++k)
          ssm = std::max(ssm, std::abs(s(i, k) - (i == k ? 0.0 : cosine_distance_loop(v, i, k))));
    }
    // AUC.
    {
      const std::size_t n = 4 + rng.below(30);
      std::vector<double> scores(n);
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) {
        scores[i] = static_cast<double>(rng.below(8)) / 7.0;
        labels[i] = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.below(2));
      }
      auc = std::max(auc, std::abs(auc_roc(scores, labels) - auc_pairs(scores, labels)));
    }
  }
  const double worst = std::max({gate, chain, salience, conv, ssm, auc});
  return {worst <= kOracleTol, std::to_string(kOracleTrials) + " trials, max abs error: gate " + fmt_double(gate, 2) +
                                   ", attention " + fmt_double(chain, 2) + ", salience " + fmt_double(salience, 2) +
                                   ", conv " + fmt_double(conv, 2) + ", ssm " + fmt_double(ssm, 2) + ", auc " +
                                   fmt_double(auc, 2)};
}

// ---------------------------------------------------------------------------
// 3. Normalization invariants.

Outcome normalization_invariants() {
  double gate = 0, rows = 0, cols = 0, sym = 0, diag = 0;
  for (int trial = 0; trial < kOracleTrials; ++trial) {
    Rng rng(20'000 + static_cast<std::uint64_t>(trial));
    const Eigen::Index D = 1 + static_cast<Eigen::Index>(rng.below(8));
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(12));
    {
      TermGate g(static_cast<int>(d), rng);
      g.weight().value = random_matrix(1, d + 1, rng, 5.0);
      std::vector<Eigen::Index> bounds{0};
      for (Eigen::Index s = 0; s < D; ++s) bounds.push_back(bounds.back() + 1 + static_cast<Eigen::Index>(rng.below(10)));
      ad::Tape tape;
      ad::Binder bind(tape);
      const Matrix w = g.weights(bind, tape.constant(random_matrix(d, bounds.back(), rng, 3.0)),
                                 tape.constant(random_matrix(1, bounds.back(), rng, 3.0)), bounds)
                           .value();
      for (Eigen::Index s = 0; s < D; ++s)
        gate = std::max(gate, std::abs(w.middleCols(bounds[s], bounds[s + 1] - bounds[s]).sum() - 1.0));
    }
    {
      const Matrix e_s = random_matrix(D, d, rng, 3.0), e_sf = random_matrix(D, d, rng, 3.0);
      const Attention a = bidirectional_attention(similarity_matrix(random_matrix(1, 3 * d, rng), e_s, e_sf), e_s, e_sf);
      rows = std::max(rows, (a.t2s_bar.rowwise().sum().array() - 1.0).abs().maxCoeff());
      cols = std::max(cols, (a.s2t_bar.colwise().sum().array() - 1.0).abs().maxCoeff());
      const Matrix s = build_ssm(e_s);
      sym = std::max(sym, max_diff(s, s.transpose()));
      diag = std::max(diag, s.diagonal().cwiseAbs().maxCoeff());
    }
  }
  const double worst = std::max({gate, rows, cols, sym, diag});
  return {worst <= kInvariantTol,
          std::to_string(kOracleTrials) + " trials, max deviation: gate sums " + fmt_double(gate, 2) +
              ", text-to-semantic rows " + fmt_double(rows, 2) + ", semantic-to-text columns " + fmt_double(cols, 2) +
              ", SSM asymmetry " + fmt_double(sym, 2) + ", SSM diagonal " + fmt_double(diag, 2)};
}

// ---------------------------------------------------------------------------
// 5 (shared with 4). End-to-end synthetic runs.

struct SeedRuns {
  std::uint64_t seed = 0;
  std::vector<EpochLog> full_log;
  double full = 0, no_struct = 0, no_unstruct = 0;
};

struct EndToEnd {
  std::vector<SeedRuns> runs;
  double seconds = 0;
  std::string error;
};

const EndToEnd& end_to_end() {
  static std::optional<EndToEnd> cached;
  if (cached) return *cached;
  cached.emplace();
  const auto t0 = Clock::now();
  try {
    const TrainConfig base = TrainConfig::load(kSource / "configs" / "small.toml");
    for (std::uint64_t seed : kSeeds) {
      SyntheticCorpus corpus = generate_synthetic(SynthConfig{}, seed);
      Dataset data;
      data.frames = extract_frames(corpus.records, corpus.lexicon);
      data.records = std::move(corpus.records);
      SeedRuns r;
      r.seed = seed;
      for (Ablation a : {Ablation::None, Ablation::NoStruct, Ablation::NoUnstruct}) {
        TrainConfig cfg = base;
        cfg.seed = seed;
        cfg.ablation = a;
        TrainRun run = run_training(cfg, data);
        const double auc = evaluate_model(run.result.model, data, run.split, Horizon::Days30, "test").auc_roc;
        if (a == Ablation::None) {
          r.full = auc;
          r.full_log = run.result.log;
        } else {
          (a == Ablation::NoStruct ? r.no_struct : r.no_unstruct) = auc;
        }
      }
      cached->runs.push_back(r);
    }
  } catch (const std::exception& e) {
    cached->error = e.what();
  }
  cached->seconds = seconds_since(t0);
  return *cached;
}

// ---------------------------------------------------------------------------
// 4. Loss semantics.

Outcome loss_semantics() {
  std::vector<std::string> problems;
  // Vector level: zero exactly when every margin holds.
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Rng rng(30'000 + static_cast<std::uint64_t>(trial));
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(6));
    const Vector pos = random_matrix(n, 1, rng, 3.0);
    Vector neg = random_matrix(n, 1, rng, 3.0);
    if (trial % 2 == 0) neg = pos.array() - 1.0 - random_matrix(n, 1, rng).cwiseAbs().array();
    const bool satisfied = ((pos - neg).array() >= 1.0).all();
    if ((contrastive_loss(pos, neg) == 0.0) != satisfied) ++mismatches;
  }
  if (mismatches) problems.push_back(std::to_string(mismatches) + " hinge mismatches");

  // Model level with lambda = 0: alpha is linear in W_n, so W_n can be chosen
  // to put each sentence's margin exactly where wanted.
  TrainConfig cfg = tiny_config();
  cfg.lambda_l2 = 0.0;
  TinyInstance t = TinyInstance::build(cfg);
  ad::Parameter& w_n = t.model.correspondence().w_n;
  auto alpha_gap = [&]() {
    ad::Tape tape;
    ad::Binder bind(tape);
    Rng d1(77), d2(77);
    const NoteExample& note = t.examples[0];
    const Vector pos = t.model.forward(bind, note, note.frame_ids, &d1).alpha.value();
    const Vector neg = t.model.forward(bind, note, t.negatives[0][0], &d2).alpha.value();
    return Vector(pos - neg);
  };
  auto cmm = [&]() {
    ad::Tape tape;
    ad::Binder bind(tape);
    Rng dropout(77);
    std::vector<const NoteExample*> batch{&t.examples[0]};
    return joint_loss(t.model, bind, batch, t.negatives, &dropout).cmm.scalar();
  };
  const Eigen::Index width = w_n.value.rows();
  Matrix delta(t.examples[0].sentences, width);
  for (Eigen::Index j = 0; j < width; ++j) {
    w_n.value.setZero();
    w_n.value(j, 0) = 1.0;
    delta.col(j) = alpha_gap();
  }
  // Realized gaps after placing them, and the hinge part of the objective.
  auto place = [&](double a, double b) {
    w_n.value = delta.completeOrthogonalDecomposition().solve(Eigen::Vector2d(a, b));
    return std::pair{alpha_gap(), cmm()};
  };
  int model_cases = 0, model_mismatches = 0;
  for (const auto& [a, b] : std::vector<std::pair<double, double>>{{1.5, 2.0}, {1.5, 0.75}, {0.0, 0.0}, {1.25, 1.01}}) {
    const auto [g, hinge] = place(a, b);
    const double expected = std::max(0.0, 1.0 - g(0)) + std::max(0.0, 1.0 - g(1));
    ++model_cases;
    if (std::abs(hinge - expected) > 1e-12 || (hinge == 0.0) != (g.array() >= 1.0).all()) ++model_mismatches;
  }
  if (model_mismatches) problems.push_back(std::to_string(model_mismatches) + " model-level hinge mismatches");

  // Huber branch boundary.
  const double at_one = smooth_l1(Vector::Ones(1), Vector::Zero(1));
  const double below = smooth_l1(Vector::Constant(1, 1.0 - 1e-9), Vector::Zero(1));
  const double above = smooth_l1(Vector::Constant(1, 1.0 + 1e-9), Vector::Zero(1));
  if (at_one != 0.5 || std::abs(below - 0.5) > 1e-8 || std::abs(above - 0.5) > 1e-8)
    problems.push_back("Huber boundary " + fmt_double(below, 12) + "/" + fmt_double(at_one, 12) + "/" +
                       fmt_double(above, 12));

  // Joint loss over the first epochs of the end-to-end runs.
  const EndToEnd& e2e = end_to_end();
  std::vector<double> drops;
  std::string losses;
  for (const SeedRuns& r : e2e.runs) {
    if (r.full_log.size() <= static_cast<std::size_t>(kLossEpochs)) continue;
    const double first = r.full_log[0].total, last = r.full_log[kLossEpochs].total;
    drops.push_back(last - first);
    losses += (losses.empty() ? "" : ", ") + fmt_double(first) + "->" + fmt_double(last);
  }
  if (drops.size() != kSeeds.size()) problems.push_back("end-to-end runs unavailable: " + e2e.error);
  else if (median(drops) >= 0.0) problems.push_back("median change over 5 epochs " + fmt_double(median(drops)));

  std::string detail = "hinge zero iff margins hold (1000 random score vectors, " + std::to_string(model_cases) +
                       " placed margins on the model with lambda=0), Huber(1) = " + fmt_double(at_one) +
                       ", joint loss epoch 0->5 per seed: " + losses;
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

Outcome end_to_end_task() {
  const EndToEnd& e2e = end_to_end();
  if (!e2e.error.empty()) return {false, "run failed: " + e2e.error};
  std::vector<double> full, ns, nu;
  std::string per_seed;
  for (const SeedRuns& r : e2e.runs) {
    full.push_back(r.full);
    ns.push_back(r.no_struct);
    nu.push_back(r.no_unstruct);
    per_seed += " seed " + std::to_string(r.seed) + ": " + fmt_double(r.full, 3) + "/" + fmt_double(r.no_struct, 3) +
                "/" + fmt_double(r.no_unstruct, 3) + ";";
  }
  const double mf = median(full), mns = median(ns), mnu = median(nu);
  const bool pass = mf >= kFullAucFloor && mf >= mns - kAblationSlack && mf >= mnu - kAblationSlack &&
                    e2e.seconds <= kEndToEndSeconds;
  return {pass, "median test AUC-ROC (30d) full " + fmt_double(mf, 3) + ", no_struct " + fmt_double(mns, 3) +
                    ", no_unstruct " + fmt_double(mnu, 3) + " (full/no_struct/no_unstruct:" + per_seed + ") in " +
                    fmt_double(e2e.seconds, 4) + " s"};
}

// ---------------------------------------------------------------------------
// 6. Frame extraction golden tests.

Outcome frame_golden() {
  const std::filesystem::path fx = kSource / "tests" / "fixtures";
  const LoadResult loaded = load_notes(fx / "family_history_notes.jsonl");
  const ConceptLexicon lex = ConceptLexicon::load(fx / "family_history_lexicon.json");
  const auto gold = read_frames_jsonl(fx / "family_history_frames.jsonl");
  const auto frames = build_frames(loaded.records.at(0).notes.at(0), lex);
  const bool fixture_ok = frames == gold.at(0).frames;
  bool neg_under_family = false;
  for (const auto& f : frames)
    if (f.subcategory == "Family History" && !f.sem_types.empty() && f.sem_types[0] == "neg" &&
        f.sem_tokens == std::vector<std::string>{"seizure disorder"})
      neg_under_family = true;

  std::size_t checked = 0, mismatched = 0, negs = 0;
  for (std::uint64_t seed : kSeeds) {
    const SyntheticCorpus corpus = generate_synthetic(SynthConfig{}, seed);
    for (const auto& p : corpus.records)
      for (const auto& n : p.notes) {
        const auto got = build_frames(n, corpus.lexicon);
        const auto& want = corpus.gold_frames.at(n.note_id);
        if (got != want) ++mismatched;
        for (const auto& f : want) negs += std::count(f.sem_types.begin(), f.sem_types.end(), "neg");
        checked += want.size();
      }
  }
  return {fixture_ok && neg_under_family && mismatched == 0 && negs > 0,
          "fixture " + std::string(fixture_ok ? "matches" : "differs") + " (" + std::to_string(frames.size()) +
              " frames, negated Family History concept " + (neg_under_family ? "found" : "missing") + "); " +
              std::to_string(checked) + " synthetic gold frames over 3 corpora, " + std::to_string(negs) +
              " neg tags, " + std::to_string(mismatched) + " mismatching notes"};
}

// ---------------------------------------------------------------------------
// 7. Determinism.

Outcome determinism() {
  const auto dir = scratch_dir("acceptance_determinism");
  cmd_generate(kSource / "tests" / "fixtures" / "cli_synth.toml", dir / "data", 21);
  std::vector<std::string> checkpoints, logs, reports;
  for (int run = 0; run < 2; ++run) {
    const auto out = dir / ("run" + std::to_string(run));
    TrainOptions opts;
    opts.config = kSource / "configs" / "small.toml";
    opts.data.notes = dir / "data" / "notes.jsonl";
    opts.data.lexicon = dir / "data" / "lexicon.json";
    opts.out = out;
    cmd_train(opts);
    EvalOptions eval;
    eval.checkpoint = out / "checkpoint.json";
    eval.out = out / "report.json";
    cmd_eval(eval);
    checkpoints.push_back(read_file(out / "checkpoint.json"));
    logs.push_back(read_file(out / "train_log.jsonl"));
    reports.push_back(read_file(out / "report.json"));
  }
  const bool same = checkpoints[0] == checkpoints[1] && logs[0] == logs[1] && reports[0] == reports[1];
  return {same && !checkpoints[0].empty() && !reports[0].empty(),
          std::string("two runs: checkpoint ") + (checkpoints[0] == checkpoints[1] ? "identical" : "differs") + " (" +
              std::to_string(checkpoints[0].size()) + " bytes), train log " + (logs[0] == logs[1] ? "identical" : "differs") +
              ", eval report " + (reports[0] == reports[1] ? "identical" : "differs")};
}

}  // namespace
}  // namespace hsc

int main() {
  spdlog::set_level(spdlog::level::warn);
  using hsc::Outcome;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", hsc::gradient_correctness},
      {"oracle equivalence", hsc::oracle_equivalence},
      {"normalization invariants", hsc::normalization_invariants},
      {"loss semantics", hsc::loss_semantics},
      {"end-to-end synthetic task", hsc::end_to_end_task},
      {"frame extraction golden tests", hsc::frame_golden},
      {"determinism", hsc::determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
