#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "hsc/corpus.hpp"
#include "hsc/errors.hpp"
#include "hsc/synthetic.hpp"
#include "test_support.hpp"

namespace hsc {
namespace {

using testing::make_note;
using testing::make_patient;
using testing::scratch_dir;
using testing::write_file;

std::string note_line(const std::string& note, const std::string& patient, const std::string& text, int age = 60,
                      int admissions = 1, const std::string& category = "Nursing/other",
                      const std::string& time = "2150-01-01T00:00:00") {
  return R"({"note_id":")" + note + R"(","patient_id":")" + patient + R"(","category":")" + category +
         R"(","chart_time":")" + time + R"(","text":")" + text + R"(","age_years":)" + std::to_string(age) +
         R"(,"admission_count":)" + std::to_string(admissions) + "}\n";
}

std::vector<std::vector<std::string>> words_of(const std::vector<Sentence>& sentences) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : sentences) out.push_back(s.words);
  return out;
}

TEST(SentenceSplitter, NewlinesAndPeriods) {
  const auto s = words_of(split_sentences("Pt stable. Vitals ok\nNo fever."));
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], (std::vector<std::string>{"Pt", "stable"}));
  EXPECT_EQ(s[1], (std::vector<std::string>{"Vitals", "ok"}));
  EXPECT_EQ(s[2], (std::vector<std::string>{"No", "fever"}));
}

TEST(SentenceSplitter, DecimalsAbbreviationsAndListNumbers) {
  const auto s = words_of(split_sentences("Temp 37.5 per Dr. Smith e.g. today. 1. aspirin"));
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0], (std::vector<std::string>{"Temp", "37.5", "per", "Dr", "Smith", "e.g", "today"}));
  EXPECT_EQ(s[1], (std::vector<std::string>{"1", "aspirin"}));
}

TEST(SentenceSplitter, ConfigurableAbbreviations) {
  SplitterOptions none;
  none.abbreviations.clear();
  EXPECT_EQ(split_sentences("Seen by Dr. Smith", none).size(), 2u);
  EXPECT_EQ(split_sentences("Seen by Dr. Smith").size(), 1u);
}

TEST(SentenceSplitter, SpansPointIntoRawText) {
  const std::string text = "  Hello, world.\nBye";
  for (const Sentence& s : split_sentences(text)) {
    EXPECT_EQ(text.substr(s.span.begin, s.words.front().size()), s.words.front());
    EXPECT_EQ(text.substr(s.span.end - s.words.back().size(), s.words.back().size()), s.words.back());
  }
  EXPECT_TRUE(split_sentences("\n\n  \n").empty());
}

TEST(Category, ParsesMimicSpellings) {
  EXPECT_EQ(parse_category("Discharge summary"), NoteCategory::DischargeSummary);
  EXPECT_EQ(parse_category("Nursing/other"), NoteCategory::Nursing);
  EXPECT_EQ(parse_category("Physician "), NoteCategory::Physician);
  EXPECT_EQ(parse_category("ECG"), NoteCategory::ECG);
  EXPECT_FALSE(parse_category("Social Work").has_value());
  for (NoteCategory c : kAllCategories) EXPECT_EQ(parse_category(to_string(c)), c);
}

class LoaderTest : public ::testing::Test {
 protected:
  std::filesystem::path dir = scratch_dir("loader");
};

TEST_F(LoaderTest, GroupsNotesByPatientInChartOrder) {
  write_file(dir / "notes.jsonl", note_line("N2", "P1", "Later note.", 60, 1, "Nursing", "2150-01-02T00:00:00") +
                                      note_line("N1", "P1", "Early note.", 60, 1, "Radiology", "2150-01-01T00:00:00"));
  const LoadResult r = load_notes(dir / "notes.jsonl");
  ASSERT_EQ(r.records.size(), 1u);
  ASSERT_EQ(r.records[0].notes.size(), 2u);
  EXPECT_EQ(r.records[0].notes[0].note_id, "N1");
  EXPECT_EQ(r.records[0].notes[0].category, NoteCategory::Radiology);
  EXPECT_FALSE(r.records[0].died_30d.has_value());
}

TEST_F(LoaderTest, ExcludesMinorsAndRepeatAdmissions) {
  write_file(dir / "notes.jsonl", note_line("N1", "A", "Adult.", 40) + note_line("N2", "B", "Child.", 17) +
                                      note_line("N3", "C", "Twice admitted.", 50, 2));
  const LoadResult r = load_notes(dir / "notes.jsonl");
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].patient_id, "A");
  EXPECT_EQ(r.stats.excluded_minor_patients, 1u);
  EXPECT_EQ(r.stats.excluded_multi_admission_patients, 1u);
}

TEST_F(LoaderTest, SkipsUnknownCategoriesAndEmptyText) {
  write_file(dir / "notes.jsonl",
             note_line("N1", "A", "Fine.") + note_line("N2", "A", "Social.", 60, 1, "Social Work") +
                 note_line("N3", "A", "  "));
  const LoadResult r = load_notes(dir / "notes.jsonl");
  EXPECT_EQ(r.stats.notes_read, 3u);
  EXPECT_EQ(r.stats.skipped_unknown_category, 1u);
  EXPECT_EQ(r.stats.skipped_empty_text, 1u);
  EXPECT_EQ(r.records.at(0).notes.size(), 1u);
}

TEST_F(LoaderTest, ReadsLabelsAndImpliesOneYearDeath) {
  write_file(dir / "notes.jsonl", note_line("N1", "A", "One.") + note_line("N2", "B", "Two."));
  write_file(dir / "patients.jsonl",
             R"({"patient_id":"A","died_30d":true,"died_1y":null})"
             "\n"
             R"({"patient_id":"B","died_30d":false,"died_1y":false})"
             "\n");
  const LoadResult r = load_notes(dir / "notes.jsonl", dir / "patients.jsonl");
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[0].died_30d, true);
  EXPECT_EQ(r.records[0].died_1y, true);
  EXPECT_EQ(label(r.records[1], Horizon::Year1), false);
}

TEST_F(LoaderTest, IncoherentLabelsAreDataErrors) {
  write_file(dir / "notes.jsonl", note_line("N1", "A", "One."));
  write_file(dir / "patients.jsonl", R"({"patient_id":"A","died_30d":true,"died_1y":false})"
                                     "\n");
  EXPECT_THROW(load_notes(dir / "notes.jsonl", dir / "patients.jsonl"), DataError);
}

TEST_F(LoaderTest, MalformedLinesNameTheLine) {
  write_file(dir / "notes.jsonl", note_line("N1", "A", "One.") + "{not json\n");
  try {
    load_notes(dir / "notes.jsonl");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos);
  }
  write_file(dir / "missing.jsonl", R"({"note_id":"N1"})"
                                    "\n");
  EXPECT_THROW(load_notes(dir / "missing.jsonl"), DataError);
  EXPECT_THROW(load_notes(dir / "absent.jsonl"), DataError);
}

TEST_F(LoaderTest, WriteThenLoadRoundTrips) {
  SynthConfig sc;
  sc.patients = 20;
  const SyntheticCorpus corpus = generate_synthetic(sc, 4);
  write_notes_jsonl(dir / "notes.jsonl", corpus.records);
  write_patients_jsonl(dir / "patients.jsonl", corpus.records);
  const LoadResult r = load_notes(dir / "notes.jsonl", dir / "patients.jsonl");
  ASSERT_EQ(r.records.size(), corpus.records.size());
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    EXPECT_EQ(r.records[i].patient_id, corpus.records[i].patient_id);
    EXPECT_EQ(r.records[i].died_30d, corpus.records[i].died_30d);
    ASSERT_EQ(r.records[i].notes.size(), corpus.records[i].notes.size());
    for (std::size_t k = 0; k < r.records[i].notes.size(); ++k)
      EXPECT_EQ(r.records[i].notes[k].raw_text, corpus.records[i].notes[k].raw_text);
  }
}

std::vector<PatientRecord> labelled_population(int positives, int negatives) {
  std::vector<PatientRecord> out;
  for (int i = 0; i < positives + negatives; ++i) {
    const bool pos = i < positives;
    out.push_back(make_patient("P" + std::to_string(10000 + i),
                               {make_note("N" + std::to_string(i), "P", NoteCategory::Nursing, "x")}, pos, pos));
  }
  return out;
}

TEST(Subsample, KeepsAllPositivesAndExactNegativeCount) {
  const auto pop = labelled_population(1156, 3000);
  const auto kept = subsample_negatives(pop, Horizon::Days30, 2500, 3);
  const auto pos = std::count_if(kept.begin(), kept.end(), [](const auto& p) { return *p.died_30d; });
  EXPECT_EQ(pos, 1156);
  EXPECT_EQ(kept.size(), 1156u + 2500u);
}

TEST(Subsample, OneYearCohort) {
  const auto pop = labelled_population(3768, 5200);
  const auto kept = subsample_negatives(pop, Horizon::Year1, 5000, 3);
  EXPECT_EQ(kept.size(), 3768u + 5000u);
}

TEST(Subsample, AllNegativesIsIdentityAndTooManyThrows) {
  const auto pop = labelled_population(5, 12);
  EXPECT_EQ(subsample_negatives(pop, Horizon::Days30, 12, 9).size(), pop.size());
  EXPECT_THROW(subsample_negatives(pop, Horizon::Days30, 13, 9), DataError);
}

TEST(Subsample, IndependentOfInputOrder) {
  auto pop = labelled_population(5, 40);
  const auto a = subsample_negatives(pop, Horizon::Days30, 10, 21);
  std::reverse(pop.begin(), pop.end());
  const auto b = subsample_negatives(pop, Horizon::Days30, 10, 21);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].patient_id, b[i].patient_id);
}

TEST(Split, TenPatientsGiveEightOneOne) {
  const auto pop = labelled_population(3, 7);
  const DataSplit s = split(pop, {}, 11);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.test.size(), 1u);
  EXPECT_EQ(s.validation.size(), 1u);
}

TEST(Split, PartitionIsDisjointCompleteAndSeeded) {
  const auto pop = labelled_population(13, 44);
  const DataSplit a = split(pop, {}, 5);
  const DataSplit b = split(pop, {}, 5);
  std::set<std::string> seen;
  for (const auto* part : {&a.train, &a.test, &a.validation})
    for (const auto& p : *part) EXPECT_TRUE(seen.insert(p.patient_id).second);
  EXPECT_EQ(seen.size(), pop.size());
  auto ids = [](const std::vector<PatientRecord>& v) {
    std::vector<std::string> out;
    for (const auto& p : v) out.push_back(p.patient_id);
    return out;
  };
  EXPECT_EQ(ids(a.train), ids(b.train));
  EXPECT_EQ(ids(a.test), ids(b.test));
  EXPECT_NE(ids(a.test), ids(split(pop, {}, 6).test));
}

TEST(Split, DegenerateRatiosAndErrors) {
  const auto pop = labelled_population(2, 8);
  const DataSplit s = split(pop, {1.0, 0.0, 0.0}, 1);
  EXPECT_EQ(s.train.size(), 10u);
  EXPECT_TRUE(s.test.empty());
  EXPECT_THROW(split(pop, {0.5, 0.2, 0.2}, 1), ConfigError);
  EXPECT_THROW(split(labelled_population(1, 1), {}, 1), DataError);
}

TEST(Idf, HandEvaluatedValues) {
  std::vector<Note> notes{make_note("1", "P", NoteCategory::Nursing, "common rare"),
                          make_note("2", "P", NoteCategory::Nursing, "common"),
                          make_note("3", "P", NoteCategory::Nursing, "Common"),
                          make_note("4", "P", NoteCategory::Nursing, "common common")};
  std::vector<const Note*> ptrs;
  for (const auto& n : notes) ptrs.push_back(&n);
  const CorpusStats stats = CorpusStats::compute(ptrs);
  EXPECT_EQ(stats.document_count(), 4u);
  EXPECT_NEAR(stats.idf("common"), 1.0, 1e-12);
  EXPECT_NEAR(stats.idf("rare"), 1.916290731874155, 1e-12);
  EXPECT_NEAR(stats.idf("never"), 2.6094379124341003, 1e-12);
  EXPECT_NEAR(stats.unseen_idf(), stats.idf("never"), 0.0);
}

TEST(Idf, InvariantToNoteOrder) {
  SynthConfig sc;
  sc.patients = 15;
  const auto corpus = generate_synthetic(sc, 8);
  auto notes = all_notes(corpus.records);
  const CorpusStats a = CorpusStats::compute(notes);
  std::reverse(notes.begin(), notes.end());
  const CorpusStats b = CorpusStats::compute(notes);
  EXPECT_EQ(a.document_frequency(), b.document_frequency());
  for (const auto& w : a.vocabulary()) EXPECT_EQ(a.idf(w), b.idf(w));
}

}  // namespace
}  // namespace hsc
