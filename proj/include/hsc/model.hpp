// The full network: parameters, per-note precomputed inputs and the forward
// pass from a note and its frames to salience scores and the note vector.

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hsc/autodiff.hpp"
#include "hsc/config.hpp"
#include "hsc/corpus.hpp"
#include "hsc/correspondence.hpp"
#include "hsc/embeddings.hpp"
#include "hsc/frames.hpp"
#include "hsc/sentence_encoder.hpp"

namespace hsc {

/// note_id -> one frame per sentence.
using FrameMap = std::unordered_map<std::string, std::vector<SemanticFrame>>;

FrameMap extract_frames(std::span<const PatientRecord> records, const ConceptLexicon& lexicon,
                        const SectionInventory& sections = SectionInventory::defaults());

/// Everything about one note that does not depend on trainable parameters.
struct NoteExample {
  std::string note_id;
  std::string patient_id;
  Eigen::Index sentences = 0;          // D
  Matrix words;                        // d_emb x T, all words of the note
  Matrix idf;                          // 1 x T
  std::vector<Eigen::Index> bounds;    // D + 1 word offsets
  std::vector<int> gate_types;         // T type ids feeding the gate
  std::vector<SemanticFrame> frames;   // D (empty without frames)
  std::vector<FrameIds> frame_ids;     // D (empty without frames)
  Matrix sentence_vectors;             // D x d_emb
  Matrix ssm_patches;                  // unfolded SSM windows, D columns each
  Vector target;                       // s', 2 d_s
  std::optional<bool> label;           // supervised horizon
};

struct NoteVars {
  ad::Var gate;            // 1 x T
  ad::Var alpha;           // D x 1 (full model and no_struct)
  ad::Var c;               // 2 d_s x 1 (full model and no_struct)
  ad::Var representation;  // note vector used downstream
};

/// Per-sentence weights of one note, for reports.
struct NoteAnalysis {
  std::vector<Vector> gates;  // one per sentence
  Vector alpha;
  Vector representation;
};

class Model {
 public:
  /// Builds vocabularies and idf from the training records and initializes
  /// every parameter from config.seed. `frames` may be null for no_struct.
  static Model create(const TrainConfig& config, std::span<const PatientRecord> train, const FrameMap* frames);
  /// Parameters shaped for the given vocabularies, values to be filled in.
  Model(const TrainConfig& config, FrameVocab vocab, CorpusStats stats);

  const TrainConfig& config() const { return config_; }
  const FrameVocab& vocab() const { return vocab_; }
  const CorpusStats& stats() const { return stats_; }
  const EmbeddingProvider& provider() const { return *provider_; }
  bool uses_frames() const { return config_.ablation != Ablation::NoStruct; }
  bool uses_text() const { return config_.ablation != Ablation::NoUnstruct; }
  int representation_dim() const;

  /// Every parameter in a fixed order.
  std::vector<ad::Parameter*> parameters();
  /// The parameters under the L2 penalty for the configured ablation.
  std::vector<ad::Parameter*> regularized();
  ad::Parameter* find(const std::string& name);

  /// `frames` and `label` may be absent; frames are required unless no_struct.
  NoteExample make_example(const Note& note, const std::vector<SemanticFrame>* frames,
                           std::optional<bool> label = std::nullopt) const;
  std::vector<NoteExample> make_examples(std::span<const PatientRecord> records, const FrameMap* frames,
                                         std::optional<Horizon> label_horizon = std::nullopt) const;

  /// Gate weights (1 x T) and E_s (D x d_s); invalid Vars under no_unstruct.
  struct TextVars {
    ad::Var gate;
    ad::Var e_s;
  };
  TextVars encode_text(ad::Binder& bind, const NoteExample& note, Rng* dropout_rng = nullptr);
  /// E_sf (D x d_s) for the given frame ids, or the constant rows under no_struct.
  ad::Var encode_frames(ad::Binder& bind, const NoteExample& note, std::span<const FrameIds> frame_ids);
  /// Attention, fusion and salience on top of the two encodings.
  NoteVars correspond(ad::Binder& bind, const NoteExample& note, const TextVars& text, ad::Var e_sf);

  /// Forward pass with the given frame ids in place of the note's own (for
  /// corrupted pairs); gating always uses the true frames. Dropout is active
  /// only when `dropout_rng` is given.
  NoteVars forward(ad::Binder& bind, const NoteExample& note, std::span<const FrameIds> frame_ids,
                   Rng* dropout_rng = nullptr);
  NoteVars forward(ad::Binder& bind, const NoteExample& note, Rng* dropout_rng = nullptr) {
    return forward(bind, note, note.frame_ids, dropout_rng);
  }

  /// Logit of the supervised head on a note representation.
  ad::Var head_logit(ad::Binder& bind, ad::Var representation);

  Vector represent(const NoteExample& note);
  NoteAnalysis analyze(const NoteExample& note);

  /// s': fixed Gaussian projection of the flattened D x d_emb sentence matrix
  /// to 2 d_s, entries N(0, 1/(D d_emb)), with the D blocks tied.
  Vector smooth_target(const Matrix& sentence_vectors) const;

  /// Restores invariants after a parameter update (zero padding columns).
  void after_update();

  FrameEmbeddingTable& tables() { return tables_; }
  TermGate& gate() { return gate_; }
  ad::Parameter& projection() { return projection_; }
  SsmEncoder& ssm() { return ssm_; }
  FrameEncoder& frame_encoder() { return frames_; }
  CorrespondenceParams& correspondence() { return corr_; }

 private:
  TrainConfig config_;
  FrameVocab vocab_;
  CorpusStats stats_;
  std::shared_ptr<const EmbeddingProvider> provider_;

  FrameEmbeddingTable tables_;
  TermGate gate_;
  ad::Parameter projection_;  // P: d_sa x d_emb
  SsmEncoder ssm_;
  FrameEncoder frames_;
  CorrespondenceParams corr_;
  ad::Parameter struct_constant_;  // e_sf stand-in for no_struct, d_s x 1
  ad::Parameter head_w_;           // representation_dim x 1
  ad::Parameter head_b_;           // 1 x 1

  mutable Matrix projection_target_;  // 2 d_s x d_emb, standard normal
};

}  // namespace hsc
