// Clinical note corpus: data model, JSONL ingestion, sentence splitting,
// class subsampling, patient-level splits and idf statistics.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hsc/config.hpp"

namespace hsc {

enum class NoteCategory { DischargeSummary, Nursing, Radiology, Echo, ECG, Physician };

/// Accepts the MIMIC spellings ("Discharge summary", "Nursing/other", "Physician ") too.
std::optional<NoteCategory> parse_category(std::string_view s);
std::string_view to_string(NoteCategory c);
inline constexpr NoteCategory kAllCategories[] = {NoteCategory::DischargeSummary, NoteCategory::Nursing,
                                                  NoteCategory::Radiology,        NoteCategory::Echo,
                                                  NoteCategory::ECG,              NoteCategory::Physician};

struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct Sentence {
  std::vector<std::string> words;
  CharSpan span;  // [begin, end) into the note's raw text
};

struct Note {
  std::string note_id;
  std::string patient_id;
  NoteCategory category = NoteCategory::DischargeSummary;
  std::string chart_time;
  std::string raw_text;
  std::vector<Sentence> sentences;
};

struct PatientRecord {
  std::string patient_id;
  std::vector<Note> notes;
  std::optional<bool> died_30d;
  std::optional<bool> died_1y;
  int age_years = 0;
};

std::optional<bool> label(const PatientRecord& p, Horizon h);

/// Lowercased form used for idf, hashing and lexicon lookup.
std::string normalize_word(std::string_view word);

struct SplitterOptions {
  /// Lowercase tokens, trailing period included, after which ". " does not end a sentence.
  std::vector<std::string> abbreviations{"dr.",  "mr.",   "mrs.",   "ms.",   "vs.",   "e.g.", "i.e.",
                                         "etc.", "approx.", "b.i.d.", "t.i.d.", "q.i.d.", "q.d.", "p.o.",
                                         "p.r.n.", "h.s.",  "a.m.",   "p.m.",  "st.",   "pt.",  "wt."};
};

/// Splits raw note text into sentences: every line break ends a sentence, and
/// within a line a period followed by whitespace does too, unless the token
/// it closes is a listed abbreviation or a bare list number ("1.").
std::vector<Sentence> split_sentences(std::string_view text, const SplitterOptions& options = {});

struct LoadStats {
  std::size_t notes_read = 0;
  std::size_t skipped_unknown_category = 0;
  std::size_t skipped_empty_text = 0;
  std::size_t excluded_minor_patients = 0;
  std::size_t excluded_multi_admission_patients = 0;
};

struct LoadResult {
  std::vector<PatientRecord> records;  // sorted by patient_id
  LoadStats stats;
};

/// Reads notes.jsonl (and optionally patients.jsonl for labels), groups notes by
/// patient, sorts them by chart time and applies the adult / single-admission
/// filters. Throws DataError naming the offending line on malformed input.
LoadResult load_notes(const std::filesystem::path& notes_path,
                      const std::optional<std::filesystem::path>& patients_path = std::nullopt,
                      const SplitterOptions& options = {});

void write_notes_jsonl(const std::filesystem::path& path, std::span<const PatientRecord> records);
void write_patients_jsonl(const std::filesystem::path& path, std::span<const PatientRecord> records);

/// Keeps every positive and exactly `target_neg` negatives for the horizon,
/// drawn uniformly with the seed. Patients with an unknown label are dropped.
std::vector<PatientRecord> subsample_negatives(std::span<const PatientRecord> records, Horizon horizon,
                                               std::size_t target_neg, std::uint64_t seed);

struct SplitRatios {
  double train = 0.8;
  double test = 0.1;
  double validation = 0.1;
};

struct DataSplit {
  std::vector<PatientRecord> train;
  std::vector<PatientRecord> test;
  std::vector<PatientRecord> validation;
};

/// Random patient-level partition. Part sizes are round(ratio * n) for train and
/// test; validation takes the remainder.
DataSplit split(std::span<const PatientRecord> records, SplitRatios ratios, std::uint64_t seed);

/// Smoothed inverse document frequency with one note per document:
/// idf(w) = ln((1 + n_docs) / (1 + df(w))) + 1.
class CorpusStats {
 public:
  CorpusStats() = default;

  static CorpusStats compute(std::span<const Note* const> notes);

  double idf(std::string_view word) const;
  /// idf of a word never seen in the documents.
  double unseen_idf() const;

  std::size_t document_count() const { return document_count_; }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  const std::map<std::string, std::size_t, std::less<>>& document_frequency() const { return df_; }

  static CorpusStats from_counts(std::size_t document_count, std::map<std::string, std::size_t, std::less<>> df);

 private:
  std::size_t document_count_ = 0;
  std::map<std::string, std::size_t, std::less<>> df_;
  std::vector<std::string> vocabulary_;
};

CorpusStats compute_idf(std::span<const Note* const> train_notes);

/// Pointers to every note of every record, in record order.
std::vector<const Note*> all_notes(std::span<const PatientRecord> records);

}  // namespace hsc
