// AUC-ROC, evaluation reports, the weight visualization and the bag-of-words
// and bag-of-concepts baselines.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hsc/autodiff.hpp"
#include "hsc/config.hpp"
#include "hsc/corpus.hpp"
#include "hsc/model.hpp"

namespace hsc {

/// Probability that a random positive outscores a random negative, counting
/// ties as one half. Throws DataError without both classes.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

struct EvalReport {
  Horizon horizon = Horizon::Days30;
  double auc_roc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string model;  // "hiersemcor", "no_struct", "no_unstruct", "bow", "boc"
  std::string split;  // evaluated split

  std::string to_json() const;
};

/// Rows of patients with a known label for the horizon, in record order.
struct LabeledSet {
  std::vector<std::size_t> rows;
  std::vector<int> labels;
};
LabeledSet labeled_rows(std::span<const PatientRecord> records, Horizon horizon);

/// Fits the probe on train features and scores the eval features.
EvalReport evaluate_features(const Matrix& train_x, std::span<const PatientRecord> train, const Matrix& eval_x,
                             std::span<const PatientRecord> eval, Horizon horizon, double l2);

/// Min-max scaling to [0, 1]; a constant input maps to 0.5 everywhere.
std::vector<double> minmax_normalize(std::span<const double> values);

/// Static HTML: words shaded orange by normalized gate weight, sentences
/// marked blue by normalized salience.
std::string render_note_html(const Note& note, const NoteAnalysis& analysis);

enum class BaselineKind { BagOfWords, BagOfConcepts };
BaselineKind parse_baseline(std::string_view s);
std::string_view to_string(BaselineKind k);

/// tf-idf over the training notes, averaged per patient and L2-normalized.
/// Terms are words (bag of words) or concept surfaces (bag of concepts); the
/// vocabulary keeps the `max_features` most frequent terms.
class TfidfFeaturizer {
 public:
  TfidfFeaturizer(BaselineKind kind, std::size_t max_features = 500) : kind_(kind), max_features_(max_features) {}

  void fit(std::span<const PatientRecord> train, const FrameMap* frames);
  Matrix transform(std::span<const PatientRecord> records, const FrameMap* frames) const;
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }

 private:
  std::vector<std::string> terms(const Note& note, const FrameMap* frames) const;

  BaselineKind kind_;
  std::size_t max_features_;
  std::vector<std::string> vocabulary_;
  std::map<std::string, std::size_t, std::less<>> index_;
  Vector idf_;
};

}  // namespace hsc
