// Joint objective, negative sampling, the optimizer and the training loop.

#pragma once

#include <functional>
#include <map>
#include <span>
#include <vector>

#include "hsc/autodiff.hpp"
#include "hsc/model.hpp"
#include "hsc/random.hpp"

namespace hsc {

/// Frames of the training split indexed by their word count.
class FramePool {
 public:
  explicit FramePool(std::vector<SemanticFrame> frames);
  static FramePool from_examples(std::span<const NoteExample> examples);

  std::size_t size() const { return frames_.size(); }
  const std::vector<SemanticFrame>& frames() const { return frames_; }
  /// Indices of pool frames with exactly `length` type tags.
  const std::vector<std::size_t>& with_length(std::size_t length) const;

 private:
  std::vector<SemanticFrame> frames_;
  std::map<std::size_t, std::vector<std::size_t>> by_length_;
};

struct NegativeDraw {
  SemanticFrame frame;
  bool fallback = false;  // no same-length candidate; nearest length reshaped
};

/// A uniformly drawn pool frame with the same number of type tags as `frame`
/// and not equal to it. Without such a candidate the nearest length (shorter
/// on ties) is used, its types truncated or padded with "O". Throws DataError
/// when the pool has no usable frame.
NegativeDraw sample_negative_frame(const SemanticFrame& frame, const FramePool& pool, Rng& rng);

/// sum_i max(0, margin - pos_i + neg_i).
double contrastive_loss(const Vector& score_pos, const Vector& score_neg, double margin = 1.0);
ad::Var contrastive_loss(ad::Var score_pos, ad::Var score_neg, double margin = 1.0);

/// Summed elementwise Huber of c - s'.
double smooth_l1(const Vector& c, const Vector& s_prime);
ad::Var smooth_l1(ad::Var c, const Vector& s_prime);

/// lambda * sum of squares over the given parameters.
double l2_penalty(std::span<ad::Parameter* const> params, double lambda);

struct LossVars {
  ad::Var cmm;     // hinge terms plus the L2 penalty
  ad::Var smooth;
  ad::Var supervised;
  ad::Var total;
};

/// Objective of a batch: the mean over notes of the per-note terms plus the L2
/// penalty. `negatives[b][k]` holds the corrupted frame ids of note b for
/// negative k (ignored when the configuration has no contrastive term).
LossVars joint_loss(Model& model, ad::Binder& bind, std::span<const NoteExample* const> batch,
                    std::span<const std::vector<std::vector<FrameIds>>> negatives, Rng* dropout_rng);

class Adam {
 public:
  Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<ad::Parameter* const> params);

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::map<const ad::Parameter*, std::pair<Matrix, Matrix>> moments_;
};

struct EpochLog {
  int epoch = 0;
  double l_cmm = 0;
  double l_smooth = 0;
  double l_sup = 0;
  double total = 0;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
  std::size_t negative_fallbacks = 0;
};

/// Trains on the given records. Epoch 0 of the log is the mean loss of the
/// initial parameters; epochs 1..E are the mean losses seen while training.
/// Throws std::runtime_error if the loss becomes non-finite.
TrainResult train(const TrainConfig& config, std::span<const PatientRecord> train_records, const FrameMap* frames,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Mean of the note vectors.
Vector patient_representation(std::span<const Vector> notes);

/// One vector per patient, in record order.
Matrix represent_patients(Model& model, std::span<const PatientRecord> records, const FrameMap* frames);

}  // namespace hsc
