#include "hsc/model.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

#include "hsc/errors.hpp"
#include "hsc/random.hpp"

namespace hsc {

FrameMap extract_frames(std::span<const PatientRecord> records, const ConceptLexicon& lexicon,
                        const SectionInventory& sections) {
  FrameMap out;
  for (const PatientRecord& p : records)
    for (const Note& n : p.notes) out[n.note_id] = build_frames(n, lexicon, sections);
  return out;
}

namespace {

constexpr std::uint64_t kTargetSalt = 0x7461726765742D52ULL;

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t salt) { return splitmix64(seed ^ splitmix64(salt)); }

}  // namespace

Model::Model(const TrainConfig& config, FrameVocab vocab, CorpusStats stats)
    : config_(config), vocab_(std::move(vocab)), stats_(std::move(stats)) {
  config_.validate();
  provider_ = make_provider(config_);
  Rng rng(stream_seed(config_.seed, 1));
  const int d_s = config_.d_s();
  tables_ = FrameEmbeddingTable(config_.d_frame, vocab_, stream_seed(config_.seed, 2));
  gate_ = TermGate(config_.d_frame, rng);
  projection_ = ad::Parameter("sa.projection",
                              glorot(config_.d_sa(), config_.d_emb, config_.d_emb, config_.d_sa(), rng));
  ssm_ = SsmEncoder(config_.ssm_window_w, config_.ssm_filters, config_.ssm_kernel, config_.d_ssm, rng);
  frames_ = FrameEncoder(config_.d_frame, config_.pad_len_n, config_.conv_filters, config_.kernel_sizes,
                         config_.strides, config_.f_L, rng);
  corr_ = CorrespondenceParams(d_s, rng);
  Matrix constant(d_s, 1);
  for (Eigen::Index r = 0; r < d_s; ++r) constant(r, 0) = rng.uniform(-0.1, 0.1);
  struct_constant_ = ad::Parameter("struct.constant", std::move(constant));
  head_w_ = ad::Parameter("head.w", Matrix::Zero(representation_dim(), 1));
  head_b_ = ad::Parameter("head.b", Matrix::Zero(1, 1));
}

Model Model::create(const TrainConfig& config, std::span<const PatientRecord> train, const FrameMap* frames) {
  if (train.empty()) throw DataError("the training split is empty");
  const std::vector<const Note*> notes = all_notes(train);
  CorpusStats stats = CorpusStats::compute(notes);

  std::vector<const SemanticFrame*> frame_ptrs;
  if (frames != nullptr) {
    for (const Note* n : notes) {
      auto it = frames->find(n->note_id);
      if (it == frames->end()) continue;
      for (const SemanticFrame& f : it->second) frame_ptrs.push_back(&f);
    }
  } else if (config.ablation != Ablation::NoStruct) {
    throw DataError("semantic frames are required unless ablation = no_struct");
  }
  FrameVocab vocab = FrameVocab::build(frame_ptrs, {std::string(kNullType), std::string(kNegType)});
  spdlog::info("vocabularies: {} section labels, {} concept tokens, {} type tags", vocab.category.size(),
               vocab.token.size(), vocab.type.size());
  return Model(config, std::move(vocab), std::move(stats));
}

int Model::representation_dim() const {
  return config_.ablation == Ablation::NoUnstruct ? config_.d_s() : 2 * config_.d_s();
}

std::vector<ad::Parameter*> Model::parameters() {
  std::vector<ad::Parameter*> out;
  for (FrameComponent z : kFrameComponents) out.push_back(&tables_.table(z));
  out.push_back(&gate_.weight());
  out.push_back(&projection_);
  for (ad::Parameter* p : ssm_.parameters()) out.push_back(p);
  for (ad::Parameter* p : frames_.parameters()) out.push_back(p);
  out.push_back(&corr_.w_s);
  out.push_back(&corr_.w_n);
  out.push_back(&corr_.b_n);
  out.push_back(&struct_constant_);
  out.push_back(&head_w_);
  out.push_back(&head_b_);
  return out;
}

std::vector<ad::Parameter*> Model::regularized() {
  std::vector<ad::Parameter*> out;
  if (config_.ablation == Ablation::NoStruct) return out;
  for (FrameComponent z : kFrameComponents) out.push_back(&tables_.table(z));
  for (ad::Parameter* p : frames_.parameters()) out.push_back(p);
  if (config_.ablation == Ablation::NoUnstruct) return out;
  out.push_back(&gate_.weight());
  out.push_back(&projection_);
  for (ad::Parameter* p : ssm_.parameters()) out.push_back(p);
  return out;
}

ad::Parameter* Model::find(const std::string& name) {
  for (ad::Parameter* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

NoteExample Model::make_example(const Note& note, const std::vector<SemanticFrame>* frames,
                                std::optional<bool> label) const {
  NoteExample ex;
  ex.note_id = note.note_id;
  ex.patient_id = note.patient_id;
  ex.label = label;
  ex.sentences = static_cast<Eigen::Index>(note.sentences.size());
  if (ex.sentences == 0) throw DataError("note " + note.note_id + " has no sentences");
  if (frames != nullptr && frames->size() != note.sentences.size())
    throw DataError("note " + note.note_id + " has " + std::to_string(note.sentences.size()) + " sentences but " +
                    std::to_string(frames->size()) + " frames");
  if (frames == nullptr && uses_frames()) throw DataError("note " + note.note_id + " has no semantic frames");

  Eigen::Index total = 0;
  ex.bounds.push_back(0);
  for (const Sentence& s : note.sentences) {
    if (s.words.empty()) throw DataError("note " + note.note_id + " has an empty sentence");
    total += static_cast<Eigen::Index>(s.words.size());
    ex.bounds.push_back(total);
  }

  const int null_type = vocab_.type.id(kNullType);
  ex.words.resize(provider_->dim(), total);
  ex.idf.resize(1, total);
  ex.gate_types.reserve(static_cast<std::size_t>(total));
  ex.sentence_vectors.resize(ex.sentences, provider_->dim());
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < note.sentences.size(); ++i) {
    const Sentence& s = note.sentences[i];
    const SemanticFrame* frame = frames != nullptr ? &(*frames)[i] : nullptr;
    if (frame != nullptr && frame->sem_types.size() != s.words.size())
      throw DataError("note " + note.note_id + " sentence " + std::to_string(i) + ": " +
                      std::to_string(s.words.size()) + " words but " + std::to_string(frame->sem_types.size()) +
                      " type tags");
    for (std::size_t j = 0; j < s.words.size(); ++j, ++col) {
      ex.words.col(col) = provider_->word_vector(s.words[j]);
      ex.idf(0, col) = stats_.idf(normalize_word(s.words[j]));
      ex.gate_types.push_back(uses_frames() && frame != nullptr ? vocab_.type.id(frame->sem_types[j]) : null_type);
    }
    ex.sentence_vectors.row(static_cast<Eigen::Index>(i)) = provider_->embed_sentence(s).transpose();
  }

  if (frames != nullptr && uses_frames()) {
    ex.frames = *frames;
    for (const SemanticFrame& f : *frames) ex.frame_ids.push_back(vocab_.encode(f, config_.pad_len_n));
  }

  if (uses_text()) {
    const Matrix ssm = build_ssm(ex.sentence_vectors);
    std::vector<Matrix> windows;
    windows.reserve(static_cast<std::size_t>(ex.sentences));
    for (Eigen::Index i = 0; i < ex.sentences; ++i)
      windows.push_back(ssm_window(ssm, static_cast<int>(i), config_.ssm_window_w));
    ex.ssm_patches = ssm_patches(windows, config_.ssm_kernel);
    ex.target = smooth_target(ex.sentence_vectors);
  }
  return ex;
}

std::vector<NoteExample> Model::make_examples(std::span<const PatientRecord> records, const FrameMap* frames,
                                              std::optional<Horizon> label_horizon) const {
  std::vector<NoteExample> out;
  for (const PatientRecord& p : records) {
    const std::optional<bool> y = label_horizon ? label(p, *label_horizon) : std::nullopt;
    for (const Note& n : p.notes) {
      const std::vector<SemanticFrame>* f = nullptr;
      if (frames != nullptr) {
        auto it = frames->find(n.note_id);
        if (it != frames->end()) f = &it->second;
      }
      out.push_back(make_example(n, f, y));
    }
  }
  return out;
}

Vector Model::smooth_target(const Matrix& sentence_vectors) const {
  // The D blocks of the projection are tied, so the target of the
  // order-invariant note vector is itself invariant to sentence order.
  if (projection_target_.size() == 0) {
    Rng rng(stream_seed(config_.seed, kTargetSalt));
    projection_target_.resize(2 * config_.d_s(), config_.d_emb);
    for (Eigen::Index c = 0; c < projection_target_.cols(); ++c)
      for (Eigen::Index k = 0; k < projection_target_.rows(); ++k) projection_target_(k, c) = rng.normal();
  }
  const double width = static_cast<double>(sentence_vectors.size());
  return projection_target_ * sentence_vectors.colwise().sum().transpose() / std::sqrt(width);
}

Model::TextVars Model::encode_text(ad::Binder& bind, const NoteExample& note, Rng* dropout_rng) {
  TextVars out;
  if (!uses_text()) return out;
  ad::Tape& tape = bind.tape();
  ad::Var type_emb = tables_.lookup(bind, FrameComponent::Type, note.gate_types);
  out.gate = gate_.weights(bind, type_emb, tape.constant(note.idf), note.bounds);
  ad::Var e_sa = ad::matmul(bind(projection_), segment_weighted_sum(note.words, out.gate, note.bounds));
  ad::Var e_ssm = ssm_.encode(bind, note.ssm_patches, note.sentences, config_.dropout, dropout_rng);
  out.e_s = ad::transpose(ad::concat_rows({e_ssm, e_sa}));
  return out;
}

ad::Var Model::encode_frames(ad::Binder& bind, const NoteExample& note, std::span<const FrameIds> frame_ids) {
  const Eigen::Index d = note.sentences;
  if (!uses_frames()) {
    ad::Var k = bind(struct_constant_);
    return ad::transpose(d == 1 ? k : ad::repeat_cols(k, d));
  }
  if (static_cast<Eigen::Index>(frame_ids.size()) != d)
    throw std::invalid_argument("note " + note.note_id + ": frame count does not match sentence count");
  return ad::transpose(frames_.encode(bind, tables_, frame_ids));
}

NoteVars Model::correspond(ad::Binder& bind, const NoteExample& note, const TextVars& text, ad::Var e_sf) {
  NoteVars out;
  out.gate = text.gate;
  if (!uses_text()) {
    const Eigen::Index d = note.sentences;
    ad::Var mean = bind.tape().constant(Matrix::Constant(1, d, 1.0 / static_cast<double>(d)));
    out.representation = ad::transpose(ad::matmul(mean, e_sf));
    return out;
  }
  ad::Var sim = similarity_matrix(bind(corr_.w_s), text.e_s, e_sf);
  AttentionVars att = bidirectional_attention(sim, text.e_s, e_sf);
  ad::Var v = fuse(text.e_s, e_sf, att.u_t2s, att.u_s2t);
  SalienceVars sal = note_representation(v, bind(corr_.w_n), bind(corr_.b_n));
  out.alpha = sal.alpha;
  out.c = sal.c;
  out.representation = sal.c;
  return out;
}

NoteVars Model::forward(ad::Binder& bind, const NoteExample& note, std::span<const FrameIds> frame_ids,
                        Rng* dropout_rng) {
  const TextVars text = encode_text(bind, note, dropout_rng);
  return correspond(bind, note, text, encode_frames(bind, note, frame_ids));
}

ad::Var Model::head_logit(ad::Binder& bind, ad::Var representation) {
  return ad::add(ad::matmul(ad::transpose(bind(head_w_)), representation), bind(head_b_));
}

Vector Model::represent(const NoteExample& note) {
  ad::Tape tape;
  ad::Binder bind(tape);
  return forward(bind, note).representation.value().col(0);
}

NoteAnalysis Model::analyze(const NoteExample& note) {
  ad::Tape tape;
  ad::Binder bind(tape);
  NoteVars vars = forward(bind, note);
  NoteAnalysis out;
  out.representation = vars.representation.value().col(0);
  for (std::size_t s = 0; s + 1 < note.bounds.size(); ++s) {
    const Eigen::Index b = note.bounds[s], n = note.bounds[s + 1] - b;
    if (vars.gate.valid())
      out.gates.push_back(vars.gate.value().row(0).segment(b, n).transpose());
    else
      out.gates.push_back(Vector::Constant(n, 1.0 / static_cast<double>(n)));
  }
  out.alpha = vars.alpha.valid() ? Vector(vars.alpha.value().col(0)) : Vector::Ones(note.sentences);
  return out;
}

void Model::after_update() { tables_.clamp_padding(); }

}  // namespace hsc
