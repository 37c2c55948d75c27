// Desk-scale synthetic corpus: template-built clinical notes with planted
// section headers, lexicon concepts, negations and deterioration markers, plus
// the gold frame of every sentence.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hsc/config.hpp"
#include "hsc/corpus.hpp"
#include "hsc/frames.hpp"

namespace hsc {

struct SynthConfig {
  int patients = 500;
  double notes_per_patient_mean = 2.2;
  // Class ratios of the 30-day (1156 : 2500) and 1-year (3768 : 5000) cohorts.
  double prevalence_30d = 1156.0 / 3656.0;
  double prevalence_1y = 3768.0 / 8768.0;
  /// Probability that a note of a 30-day positive carries deterioration markers.
  double marker_rate = 0.8;
  /// Same, for patients who die within a year but not within 30 days.
  double marker_rate_1y = 0.0;
  int min_sections = 2;
  int max_sections = 4;
  int min_sentences_per_section = 1;
  int max_sentences_per_section = 3;

  void validate() const;
  static SynthConfig from_flat(const FlatConfig& flat);
  static SynthConfig load(const std::filesystem::path& path) { return from_flat(FlatConfig::load(path)); }
};

struct SyntheticCorpus {
  std::vector<PatientRecord> records;
  std::map<std::string, std::vector<SemanticFrame>> gold_frames;  // by note_id
  ConceptLexicon lexicon;
};

/// The concept lexicon every synthetic note is written against.
ConceptLexicon synthetic_lexicon();
/// Words the generator uses to signal deterioration; never lexicon entries.
const std::vector<std::string>& deterioration_markers();

SyntheticCorpus generate_synthetic(const SynthConfig& config, std::uint64_t seed);

/// Writes notes.jsonl, patients.jsonl, lexicon.json and gold_frames.jsonl.
void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace hsc
