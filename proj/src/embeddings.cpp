#include "hsc/embeddings.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "hsc/errors.hpp"
#include "hsc/random.hpp"

namespace hsc {

Matrix EmbeddingProvider::embed_words(const Sentence& sentence) const {
  Matrix out(static_cast<Eigen::Index>(sentence.words.size()), dim_);
  for (std::size_t j = 0; j < sentence.words.size(); ++j)
    out.row(static_cast<Eigen::Index>(j)) = word_vector(sentence.words[j]).transpose();
  return out;
}

Vector EmbeddingProvider::embed_sentence(const Sentence& sentence) const {
  if (sentence.words.empty()) return Vector::Zero(dim_);
  return embed_words(sentence).colwise().mean().transpose();
}

Vector HashEmbedding::word_vector(std::string_view word) const {
  const std::uint64_t key = fnv1a64(normalize_word(word)) ^ splitmix64(seed_);
  const double half_width = std::sqrt(3.0);
  Vector v(dim());
  for (int k = 0; k < dim(); ++k)
    v(k) = half_width * (2.0 * unit_from_bits(splitmix64(key + static_cast<std::uint64_t>(k))) - 1.0);
  return v;
}

TableEmbedding::TableEmbedding(TableEmbedding&& other) noexcept
    : EmbeddingProvider(other.dim()),
      table_(std::move(other.table_)),
      fallback_(other.fallback_),
      oov_count_(other.oov_count_.load()) {}

TableEmbedding TableEmbedding::load(const std::filesystem::path& path, std::uint64_t fallback_seed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vectors file " + path.string());

  std::unordered_map<std::string, Vector> table;
  int dim = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> values;
    double x = 0;
    while (fields >> x) values.push_back(x);
    if (!fields.eof()) throw DataError(path.string() + ":" + std::to_string(line_no) + ": non-numeric vector entry");
    if (line_no == 1 && values.size() == 1) continue;  // "count dim" header
    if (values.empty()) throw DataError(path.string() + ":" + std::to_string(line_no) + ": empty vector");
    if (dim < 0) dim = static_cast<int>(values.size());
    if (static_cast<int>(values.size()) != dim)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                      " components, got " + std::to_string(values.size()));
    table.emplace(normalize_word(token), Eigen::Map<const Vector>(values.data(), dim));
  }
  if (dim < 0) throw DataError("vectors file " + path.string() + " holds no vectors");

  TableEmbedding out(dim, fallback_seed);
  out.table_ = std::move(table);
  return out;
}

Vector TableEmbedding::word_vector(std::string_view word) const {
  auto it = table_.find(normalize_word(word));
  if (it != table_.end()) return it->second;
  oov_count_.fetch_add(1);
  return fallback_.word_vector(word);
}

std::unique_ptr<EmbeddingProvider> make_provider(const TrainConfig& config) {
  if (config.embedding_backend == "hash") return std::make_unique<HashEmbedding>(config.d_emb);
  if (config.embedding_backend == "table") {
    auto table = std::make_unique<TableEmbedding>(TableEmbedding::load(config.vectors_file));
    if (table->dim() != config.d_emb)
      throw ConfigError("vectors file has dimension " + std::to_string(table->dim()) + " but d_emb is " +
                        std::to_string(config.d_emb));
    spdlog::info("loaded {} word vectors from {}", table->vocabulary_size(), config.vectors_file);
    return table;
  }
  throw ConfigError("unknown embedding_backend '" + config.embedding_backend + "'");
}

// ---------------------------------------------------------------------------

std::string_view to_string(FrameComponent z) {
  switch (z) {
    case FrameComponent::Category: return "sc";
    case FrameComponent::Token: return "tok";
    case FrameComponent::Type: return "type";
  }
  return "?";
}

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

int Vocabulary::add(std::string_view token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.emplace_back(token);
  ids_.emplace(std::string(token), id);
  return id;
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnknown : it->second;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < 2 || tokens[0] != "<pad>" || tokens[1] != "<unk>")
    throw DataError("vocabulary must start with <pad>, <unk>");
  Vocabulary v;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (v.add(tokens[i]) != static_cast<int>(i)) throw DataError("duplicate vocabulary token '" + tokens[i] + "'");
  }
  return v;
}

const std::vector<int>& FrameIds::of(FrameComponent z) const {
  switch (z) {
    case FrameComponent::Category: return category;
    case FrameComponent::Token: return token;
    case FrameComponent::Type: return type;
  }
  return type;
}

const Vocabulary& FrameVocab::of(FrameComponent z) const {
  switch (z) {
    case FrameComponent::Category: return category;
    case FrameComponent::Token: return token;
    case FrameComponent::Type: return type;
  }
  return type;
}

FrameVocab FrameVocab::build(std::span<const SemanticFrame* const> frames, const std::vector<std::string>& types) {
  FrameVocab v;
  for (const auto& t : types) v.type.add(t);
  for (const SemanticFrame* f : frames) {
    v.category.add(f->category);
    v.category.add(f->subcategory);
    for (const auto& t : f->sem_tokens) v.token.add(t);
    for (const auto& t : f->sem_types) v.type.add(t);
  }
  return v;
}

namespace {

std::vector<int> encode_padded(const Vocabulary& vocab, const std::vector<std::string>& items, int pad_len) {
  std::vector<int> ids(static_cast<std::size_t>(pad_len), Vocabulary::kPad);
  const std::size_t n = std::min(items.size(), ids.size());
  for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.id(items[i]);
  return ids;
}

}  // namespace

FrameIds FrameVocab::encode(const SemanticFrame& frame, int pad_len) const {
  FrameIds ids;
  ids.category = encode_padded(category, {frame.category, frame.subcategory}, pad_len);
  ids.token = encode_padded(token, frame.sem_tokens, pad_len);
  ids.type = encode_padded(type, frame.sem_types, pad_len);
  return ids;
}

std::vector<int> FrameVocab::type_ids(const SemanticFrame& frame) const {
  std::vector<int> ids;
  ids.reserve(frame.sem_types.size());
  for (const auto& t : frame.sem_types) ids.push_back(type.id(t));
  return ids;
}

// ---------------------------------------------------------------------------

namespace {

ad::Parameter init_table(std::string name, int dim, int vocab_size, Rng& rng) {
  Matrix m(dim, vocab_size);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-0.05, 0.05);
  m.col(Vocabulary::kPad).setZero();
  return ad::Parameter(std::move(name), std::move(m));
}

}  // namespace

FrameEmbeddingTable::FrameEmbeddingTable(int dim, const FrameVocab& vocab, std::uint64_t seed) : dim_(dim) {
  if (dim <= 0) throw ConfigError("frame embedding dimension must be positive");
  Rng rng(splitmix64(seed ^ 0x6672616D65ULL));
  category_ = init_table("frame.emb.sc", dim, vocab.category.size(), rng);
  token_ = init_table("frame.emb.tok", dim, vocab.token.size(), rng);
  type_ = init_table("frame.emb.type", dim, vocab.type.size(), rng);
}

ad::Parameter& FrameEmbeddingTable::table(FrameComponent z) {
  switch (z) {
    case FrameComponent::Category: return category_;
    case FrameComponent::Token: return token_;
    case FrameComponent::Type: return type_;
  }
  return type_;
}

const ad::Parameter& FrameEmbeddingTable::table(FrameComponent z) const {
  return const_cast<FrameEmbeddingTable*>(this)->table(z);
}

ad::Var FrameEmbeddingTable::lookup(ad::Binder& bind, FrameComponent z, std::span<const int> ids) {
  return ad::gather_cols(bind(table(z)), ids);
}

Matrix FrameEmbeddingTable::lookup(FrameComponent z, std::span<const int> ids) const {
  const Matrix& t = table(z).value;
  Matrix out = Matrix::Zero(t.rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || id >= t.cols())
      throw std::out_of_range("frame id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(t.cols()));
    if (id != Vocabulary::kPad) out.col(static_cast<Eigen::Index>(i)) = t.col(id);
  }
  return out;
}

void FrameEmbeddingTable::clamp_padding() {
  for (FrameComponent z : kFrameComponents) table(z).value.col(Vocabulary::kPad).setZero();
}

}  // namespace hsc
