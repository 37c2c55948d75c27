// Semantic frames: the structured companion of every sentence, produced by a
// dictionary tagger (concept lexicon + negation cues) and a section detector.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hsc/corpus.hpp"

namespace hsc {

inline constexpr std::string_view kNullType = "O";
inline constexpr std::string_view kNegType = "neg";
inline constexpr std::string_view kPreamble = "Preamble";

struct SemanticFrame {
  std::string category;
  std::string subcategory;
  std::vector<std::string> sem_tokens;  // matched concept surfaces, in order
  std::vector<std::string> sem_types;   // one tag per word of the sentence

  bool operator==(const SemanticFrame&) const = default;
};

class ConceptLexicon {
 public:
  ConceptLexicon();

  /// Surfaces are lowercased and whitespace-collapsed; empty surfaces or types throw.
  void add(std::string_view surface, std::string_view type);
  void set_negation_cues(std::set<std::string> cues);

  std::optional<std::string_view> type_of(std::string_view normalized_surface) const;
  bool is_negation_cue(std::string_view word) const;

  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }
  const std::set<std::string, std::less<>>& negation_cues() const { return cues_; }
  std::size_t max_words() const { return max_words_; }
  /// Every type tag the lexicon can emit, plus "O" and "neg".
  std::vector<std::string> type_inventory() const;

  static ConceptLexicon parse(std::string_view json_text);
  static ConceptLexicon load(const std::filesystem::path& path);
  std::string to_json() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string, std::less<>> entries_;
  std::set<std::string, std::less<>> cues_;
  std::size_t max_words_ = 0;
};

/// Known section headers per note category. A line that starts with one of
/// them (case-insensitive) followed by ':' opens that section.
class SectionInventory {
 public:
  static SectionInventory defaults();
  /// JSON object {category: [header, ...]}; listed categories replace the defaults.
  static SectionInventory load(const std::filesystem::path& path);

  /// Canonical header spelling if `candidate` names a header of the category.
  std::optional<std::string> match(NoteCategory category, std::string_view candidate) const;
  const std::vector<std::string>& headers(NoteCategory category) const;
  void set_headers(NoteCategory category, std::vector<std::string> headers);

 private:
  std::map<NoteCategory, std::vector<std::string>> headers_;
};

/// Subcategory of every sentence: the most recent header at or before the
/// sentence start, "Preamble" before the first header.
std::vector<std::pair<std::size_t, std::string>> detect_sections(const Note& note, const SectionInventory& sections);

/// Greedy left-to-right longest-match tagging. Negation cues always get "neg"
/// and never take part in a concept match; unmatched words get "O". Only the
/// token and type parts of the returned frame are filled.
SemanticFrame tag_sentence(const Sentence& sentence, const ConceptLexicon& lexicon);

/// One frame per sentence of the note.
std::vector<SemanticFrame> build_frames(const Note& note, const ConceptLexicon& lexicon,
                                        const SectionInventory& sections = SectionInventory::defaults());

struct NoteFrames {
  std::string note_id;
  std::vector<SemanticFrame> frames;
};

void write_frames_jsonl(const std::filesystem::path& path, std::span<const NoteFrames> notes);
std::vector<NoteFrames> read_frames_jsonl(const std::filesystem::path& path);

}  // namespace hsc
