// Word and sentence vectors (frozen, pluggable) and the trainable embedding
// tables of the three semantic-frame components.

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hsc/autodiff.hpp"
#include "hsc/config.hpp"
#include "hsc/corpus.hpp"
#include "hsc/frames.hpp"

namespace hsc {

class EmbeddingProvider {
 public:
  explicit EmbeddingProvider(int dim) : dim_(dim) {}
  virtual ~EmbeddingProvider() = default;

  int dim() const { return dim_; }
  virtual std::string_view backend() const = 0;
  virtual Vector word_vector(std::string_view word) const = 0;

  /// N x dim, row j is the vector of word j.
  Matrix embed_words(const Sentence& sentence) const;
  /// Mean of the word rows.
  virtual Vector embed_sentence(const Sentence& sentence) const;

 private:
  int dim_;
};

/// Deterministic vectors derived from a 64-bit hash of the lowercased word:
/// entries are uniform on [-sqrt(3), sqrt(3)] (unit variance) and identical on
/// every platform.
class HashEmbedding final : public EmbeddingProvider {
 public:
  explicit HashEmbedding(int dim, std::uint64_t seed = 0) : EmbeddingProvider(dim), seed_(seed) {}
  std::string_view backend() const override { return "hash"; }
  Vector word_vector(std::string_view word) const override;

 private:
  std::uint64_t seed_;
};

/// Pretrained vectors from a word2vec text file ("token v1 ... vd" per line,
/// optional "count dim" header). Out-of-vocabulary words fall back to hash
/// vectors and are counted.
class TableEmbedding final : public EmbeddingProvider {
 public:
  static TableEmbedding load(const std::filesystem::path& path, std::uint64_t fallback_seed = 0);

  std::string_view backend() const override { return "table"; }
  Vector word_vector(std::string_view word) const override;

  std::size_t vocabulary_size() const { return table_.size(); }
  std::size_t oov_count() const { return oov_count_.load(); }

  TableEmbedding(TableEmbedding&& other) noexcept;

 private:
  TableEmbedding(int dim, std::uint64_t fallback_seed) : EmbeddingProvider(dim), fallback_(dim, fallback_seed) {}

  std::unordered_map<std::string, Vector> table_;
  HashEmbedding fallback_;
  mutable std::atomic<std::size_t> oov_count_{0};
};

std::unique_ptr<EmbeddingProvider> make_provider(const TrainConfig& config);

// ---------------------------------------------------------------------------
// Frame component vocabularies and tables.

enum class FrameComponent { Category, Token, Type };
inline constexpr FrameComponent kFrameComponents[] = {FrameComponent::Category, FrameComponent::Token,
                                                      FrameComponent::Type};
std::string_view to_string(FrameComponent z);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnknown = 1;

  Vocabulary();
  int add(std::string_view token);
  /// kUnknown when absent.
  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> ids_;
};

/// Padded id sequences of the three components of one frame.
struct FrameIds {
  std::vector<int> category;  // [category, subcategory]
  std::vector<int> token;
  std::vector<int> type;

  const std::vector<int>& of(FrameComponent z) const;
};

struct FrameVocab {
  Vocabulary category;
  Vocabulary token;
  Vocabulary type;

  const Vocabulary& of(FrameComponent z) const;

  /// Vocabularies over the given frames; `types` adds tags that must exist even
  /// if unseen (the null and negation tags at least).
  static FrameVocab build(std::span<const SemanticFrame* const> frames, const std::vector<std::string>& types);

  /// Each component truncated or zero-padded to `pad_len`.
  FrameIds encode(const SemanticFrame& frame, int pad_len) const;
  /// Unpadded type ids, one per word.
  std::vector<int> type_ids(const SemanticFrame& frame) const;
};

/// W_emb for each component: d x V, column 0 (padding) fixed at zero.
class FrameEmbeddingTable {
 public:
  FrameEmbeddingTable() = default;
  /// Seeded uniform initialization on [-0.05, 0.05].
  FrameEmbeddingTable(int dim, const FrameVocab& vocab, std::uint64_t seed);

  int dim() const { return dim_; }
  ad::Parameter& table(FrameComponent z);
  const ad::Parameter& table(FrameComponent z) const;

  /// d x ids.size(); padding ids give zero columns. Throws on ids out of range.
  ad::Var lookup(ad::Binder& bind, FrameComponent z, std::span<const int> ids);
  Matrix lookup(FrameComponent z, std::span<const int> ids) const;

  /// Re-zeroes the padding columns (after an optimizer step).
  void clamp_padding();

 private:
  int dim_ = 0;
  ad::Parameter category_;
  ad::Parameter token_;
  ad::Parameter type_;
};

}  // namespace hsc
