#include "hsc/training.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hsc/errors.hpp"

namespace hsc {

FramePool::FramePool(std::vector<SemanticFrame> frames) : frames_(std::move(frames)) {
  for (std::size_t i = 0; i < frames_.size(); ++i) by_length_[frames_[i].sem_types.size()].push_back(i);
}

FramePool FramePool::from_examples(std::span<const NoteExample> examples) {
  std::vector<SemanticFrame> frames;
  for (const NoteExample& ex : examples) frames.insert(frames.end(), ex.frames.begin(), ex.frames.end());
  return FramePool(std::move(frames));
}

const std::vector<std::size_t>& FramePool::with_length(std::size_t length) const {
  static const std::vector<std::size_t> kNone;
  auto it = by_length_.find(length);
  return it == by_length_.end() ? kNone : it->second;
}

namespace {

/// Uniform over the entries of `ids` whose frame differs from `frame`, or -1.
long long draw_distinct(const FramePool& pool, const std::vector<std::size_t>& ids, const SemanticFrame& frame,
                        Rng& rng) {
  if (ids.empty()) return -1;
  // Rejection is exact for the uniform-over-distinct target and cheap when
  // duplicates are rare; fall back to filtering when they are not.
  for (int attempt = 0; attempt < 16; ++attempt) {
    const std::size_t i = ids[rng.below(ids.size())];
    if (!(pool.frames()[i] == frame)) return static_cast<long long>(i);
  }
  std::vector<std::size_t> distinct;
  for (std::size_t i : ids)
    if (!(pool.frames()[i] == frame)) distinct.push_back(i);
  if (distinct.empty()) return -1;
  return static_cast<long long>(distinct[rng.below(distinct.size())]);
}

}  // namespace

NegativeDraw sample_negative_frame(const SemanticFrame& frame, const FramePool& pool, Rng& rng) {
  if (pool.size() == 0) throw DataError("negative sampling needs a non-empty frame pool");
  const std::size_t n = frame.sem_types.size();
  NegativeDraw out;
  long long pick = draw_distinct(pool, pool.with_length(n), frame, rng);
  if (pick >= 0) {
    out.frame = pool.frames()[static_cast<std::size_t>(pick)];
    return out;
  }
  std::size_t longest = 0;
  for (const SemanticFrame& f : pool.frames()) longest = std::max(longest, f.sem_types.size());
  const std::size_t reach = std::max(n, longest);
  for (std::size_t d = 1; d <= reach && pick < 0; ++d) {
    if (d <= n) pick = draw_distinct(pool, pool.with_length(n - d), frame, rng);
    if (pick < 0) pick = draw_distinct(pool, pool.with_length(n + d), frame, rng);
  }
  if (pick < 0) throw DataError("the frame pool holds no frame distinct from the positive");
  out.frame = pool.frames()[static_cast<std::size_t>(pick)];
  spdlog::debug("no distinct frame of length {}; reshaping one of length {}", n, out.frame.sem_types.size());
  out.frame.sem_types.resize(n, std::string(kNullType));
  out.fallback = true;
  return out;
}

double contrastive_loss(const Vector& score_pos, const Vector& score_neg, double margin) {
  if (score_pos.size() != score_neg.size()) throw std::invalid_argument("score vectors differ in length");
  return (margin - score_pos.array() + score_neg.array()).max(0.0).sum();
}

ad::Var contrastive_loss(ad::Var score_pos, ad::Var score_neg, double margin) {
  return ad::sum(ad::relu(ad::add_scalar(ad::sub(score_neg, score_pos), margin)));
}

double smooth_l1(const Vector& c, const Vector& s_prime) {
  if (c.size() != s_prime.size()) throw std::invalid_argument("smooth_l1: dimension mismatch");
  double total = 0.0;
  for (Eigen::Index k = 0; k < c.size(); ++k) {
    const double x = std::abs(c(k) - s_prime(k));
    total += x <= 1.0 ? 0.5 * x * x : x - 0.5;
  }
  return total;
}

ad::Var smooth_l1(ad::Var c, const Vector& s_prime) {
  if (c.rows() != s_prime.size() || c.cols() != 1) throw std::invalid_argument("smooth_l1: dimension mismatch");
  return ad::huber(ad::sub(c, c.tape()->constant(s_prime)));
}

double l2_penalty(std::span<ad::Parameter* const> params, double lambda) {
  double total = 0.0;
  for (const ad::Parameter* p : params) total += p->value.squaredNorm();
  return lambda * total;
}

namespace {

ad::Var sum_or_zero(ad::Tape& tape, const std::vector<ad::Var>& terms) {
  if (terms.empty()) return tape.constant(Matrix::Zero(1, 1));
  ad::Var acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = ad::add(acc, terms[i]);
  return acc;
}

bool contrastive(const Model& m) { return m.uses_frames() && m.uses_text(); }
bool supervised(const Model& m) { return !m.uses_text() || m.config().end_to_end; }

}  // namespace

LossVars joint_loss(Model& model, ad::Binder& bind, std::span<const NoteExample* const> batch,
                    std::span<const std::vector<std::vector<FrameIds>>> negatives, Rng* dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("joint_loss on an empty batch");
  ad::Tape& tape = bind.tape();
  const TrainConfig& cfg = model.config();
  std::vector<ad::Var> hinge, smooth, sup;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const NoteExample& note = *batch[b];
    const Model::TextVars text = model.encode_text(bind, note, dropout_rng);
    const NoteVars pos = model.correspond(bind, note, text, model.encode_frames(bind, note, note.frame_ids));
    if (contrastive(model)) {
      if (b >= negatives.size() || negatives[b].empty())
        throw std::invalid_argument("joint_loss: missing negatives for note " + note.note_id);
      for (const auto& neg_ids : negatives[b]) {
        const NoteVars neg = model.correspond(bind, note, text, model.encode_frames(bind, note, neg_ids));
        hinge.push_back(contrastive_loss(pos.alpha, neg.alpha, cfg.margin));
      }
    }
    if (model.uses_text()) smooth.push_back(smooth_l1(pos.c, note.target));
    if (supervised(model) && note.label)
      sup.push_back(ad::bce_with_logits(model.head_logit(bind, pos.representation), *note.label ? 1.0 : 0.0));
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  LossVars out;
  out.cmm = ad::scale(sum_or_zero(tape, hinge), inv);
  if (cfg.lambda_l2 > 0.0) {
    std::vector<ad::Var> squares;
    for (ad::Parameter* p : model.regularized()) squares.push_back(ad::sum_squares(bind(*p)));
    if (!squares.empty()) out.cmm = ad::add(out.cmm, ad::scale(sum_or_zero(tape, squares), cfg.lambda_l2));
  }
  out.smooth = ad::scale(sum_or_zero(tape, smooth), inv);
  out.supervised = ad::scale(sum_or_zero(tape, sup), inv);
  out.total = ad::add(ad::add(out.cmm, out.smooth), out.supervised);
  return out;
}

void Adam::step(std::span<ad::Parameter* const> params) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (ad::Parameter* p : params) {
    auto [it, fresh] = moments_.try_emplace(p);
    auto& [m, v] = it->second;
    if (fresh) {
      m = Matrix::Zero(p->value.rows(), p->value.cols());
      v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    m = beta1_ * m + (1.0 - beta1_) * p->grad;
    v = beta2_ * v + (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
    p->value.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

namespace {

std::vector<std::vector<FrameIds>> draw_negatives(const Model& model, const NoteExample& note, const FramePool& pool,
                                                  Rng& rng, std::size_t& fallbacks) {
  std::vector<std::vector<FrameIds>> out(static_cast<std::size_t>(model.config().negatives_per_pair));
  for (auto& ids : out) {
    ids.reserve(note.frames.size());
    for (const SemanticFrame& f : note.frames) {
      NegativeDraw draw = sample_negative_frame(f, pool, rng);
      fallbacks += draw.fallback ? 1 : 0;
      ids.push_back(model.vocab().encode(draw.frame, model.config().pad_len_n));
    }
  }
  return out;
}

void check_finite(const LossVars& loss, int epoch, std::size_t batch) {
  const double total = loss.total.scalar();
  if (std::isfinite(total)) return;
  throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch) + ": L_cmm=" + std::to_string(loss.cmm.scalar()) +
                           " L_smooth=" + std::to_string(loss.smooth.scalar()) +
                           " L_sup=" + std::to_string(loss.supervised.scalar()));
}

}  // namespace

TrainResult train(const TrainConfig& config, std::span<const PatientRecord> train_records, const FrameMap* frames,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  TrainResult result{Model::create(config, train_records, frames), {}, 0};
  Model& model = result.model;
  const std::vector<NoteExample> examples = model.make_examples(train_records, frames, config.supervised_horizon);
  if (examples.empty()) throw DataError("the training split has no notes");
  const FramePool pool = contrastive(model) ? FramePool::from_examples(examples) : FramePool({});

  Rng order_rng(splitmix64(config.seed ^ 0x6F72646572ULL));
  Rng negative_rng(splitmix64(config.seed ^ 0x6E65676174ULL));
  Rng dropout_rng(splitmix64(config.seed ^ 0x64726F70ULL));
  const std::vector<ad::Parameter*> params = model.parameters();
  Adam adam(config.learning_rate);

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch_size = static_cast<std::size_t>(config.batch_size);

  auto run_epoch = [&](int epoch, bool update) {
    if (update) order_rng.shuffle(std::span<std::size_t>(order));
    Rng fixed_negatives(splitmix64(config.seed ^ 0x6576616CULL));
    Rng& neg_rng = update ? negative_rng : fixed_negatives;
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t start = 0, batch_no = 0; start < order.size(); start += batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      std::vector<const NoteExample*> batch;
      std::vector<std::vector<std::vector<FrameIds>>> negatives;
      for (std::size_t i = start; i < end; ++i) {
        const NoteExample& ex = examples[order[i]];
        batch.push_back(&ex);
        if (contrastive(model)) negatives.push_back(draw_negatives(model, ex, pool, neg_rng, result.negative_fallbacks));
      }
      ad::Tape tape;
      ad::Binder bind(tape);
      const LossVars loss = joint_loss(model, bind, batch, negatives, update ? &dropout_rng : nullptr);
      check_finite(loss, epoch, batch_no);
      const double weight = static_cast<double>(batch.size());
      log.l_cmm += weight * loss.cmm.scalar();
      log.l_smooth += weight * loss.smooth.scalar();
      log.l_sup += weight * loss.supervised.scalar();
      log.total += weight * loss.total.scalar();
      if (!update) continue;
      for (ad::Parameter* p : params) p->zero_grad();
      tape.backward(loss.total);
      adam.step(params);
      model.after_update();
    }
    const double n = static_cast<double>(order.size());
    log.l_cmm /= n;
    log.l_smooth /= n;
    log.l_sup /= n;
    log.total /= n;
    spdlog::info("epoch {}: L_cmm={:.5f} L_smooth={:.5f} L_sup={:.5f} total={:.5f}", epoch, log.l_cmm, log.l_smooth,
                 log.l_sup, log.total);
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  };

  run_epoch(0, false);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) run_epoch(epoch, true);
  if (result.negative_fallbacks > 0)
    spdlog::info("{} negative frames came from the nearest length", result.negative_fallbacks);
  return result;
}

Vector patient_representation(std::span<const Vector> notes) {
  if (notes.empty()) throw std::invalid_argument("patient_representation needs at least one note");
  Vector sum = Vector::Zero(notes[0].size());
  for (const Vector& v : notes) {
    if (v.size() != sum.size()) throw std::invalid_argument("note vectors differ in dimension");
    sum += v;
  }
  return sum / static_cast<double>(notes.size());
}

Matrix represent_patients(Model& model, std::span<const PatientRecord> records, const FrameMap* frames) {
  Matrix out(static_cast<Eigen::Index>(records.size()), model.representation_dim());
  for (std::size_t r = 0; r < records.size(); ++r) {
    std::vector<Vector> notes;
    for (const NoteExample& ex : model.make_examples(records.subspan(r, 1), frames))
      notes.push_back(model.represent(ex));
    if (notes.empty()) throw DataError("patient " + records[r].patient_id + " has no notes");
    out.row(static_cast<Eigen::Index>(r)) = patient_representation(notes).transpose();
  }
  return out;
}

}  // namespace hsc
