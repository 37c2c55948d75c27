#include "hsc/synthetic.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "hsc/errors.hpp"
#include "hsc/random.hpp"

namespace hsc {

namespace {

const std::vector<std::pair<std::string, std::string>>& lexicon_entries() {
  static const std::vector<std::pair<std::string, std::string>> entries{
      {"seizure disorder", "dsyn"},      {"pneumonia", "dsyn"},         {"heart failure", "dsyn"},
      {"congestive heart failure", "dsyn"}, {"sepsis", "dsyn"},         {"diabetes mellitus", "dsyn"},
      {"hypertension", "dsyn"},          {"atrial fibrillation", "dsyn"}, {"renal failure", "dsyn"},
      {"emphysema", "dsyn"},             {"pneumothorax", "dsyn"},      {"copd", "dsyn"},
      {"stroke", "dsyn"},                {"cirrhosis", "dsyn"},         {"anemia", "dsyn"},
      {"myocardial infarction", "dsyn"}, {"pleural effusion", "dsyn"},  {"respiratory failure", "dsyn"},
      {"chest pain", "sosy"},            {"dyspnea", "sosy"},           {"fever", "sosy"},
      {"cough", "sosy"},                 {"nausea", "sosy"},            {"fatigue", "sosy"},
      {"edema", "sosy"},                 {"confusion", "sosy"},         {"shortness of breath", "sosy"},
      {"aspirin", "phsu"},               {"heparin", "phsu"},           {"metoprolol", "phsu"},
      {"furosemide", "phsu"},            {"insulin", "phsu"},           {"vancomycin", "phsu"},
      {"warfarin", "phsu"},              {"lisinopril", "phsu"},        {"heart", "bpoc"},
      {"lung", "bpoc"},                  {"kidney", "bpoc"},            {"liver", "bpoc"},
      {"abdomen", "bpoc"},               {"chest x-ray", "diap"},       {"echocardiogram", "diap"},
      {"ct scan", "diap"},               {"subcutaneous emphysema", "dsyn"}};
  return entries;
}

const std::vector<std::string>& fillers() {
  static const std::vector<std::string> words{
      "patient", "was",     "noted",  "with",    "reports",   "on",        "admission", "today",   "mild",
      "given",   "for",     "stable", "follow",  "up",        "the",       "and",       "this",    "morning",
      "continued", "per",   "team",   "to",      "monitor",   "remains",   "in",        "bed",     "family",
      "at",      "bedside", "tolerated", "well", "overnight", "seen",      "by",        "resident", "evaluated",
      "again",   "after",   "discussion", "status", "unchanged", "labs", "reviewed",  "will",    "recheck"};
  return words;
}

std::string capitalize(std::string w) {
  if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto j = std::min(s.find(' ', i), s.size());
    out.push_back(s.substr(i, j - i));
    i = j + 1;
  }
  return out;
}

struct GeneratedSentence {
  std::vector<std::string> words;
  SemanticFrame frame;
};

class NoteWriter {
 public:
  NoteWriter(Rng& rng, const ConceptLexicon& lexicon) : rng_(rng), lexicon_(lexicon) {
    for (const auto& [s, t] : lexicon_entries()) concepts_.push_back(s);
  }

  GeneratedSentence header(const std::string& name) const {
    GeneratedSentence g;
    g.words = split_words(name);
    g.frame.sem_types.assign(g.words.size(), std::string(kNullType));
    return g;
  }

  GeneratedSentence preamble() {
    static const std::vector<std::vector<std::string>> lines{
        {"Note", "written", "by", "Dr.", "Smith", "after", "discussion", "with", "family"},
        {"Patient", "seen", "and", "evaluated", "by", "resident", "this", "morning"},
        {"Labs", "reviewed", "at", "bedside", "today"}};
    GeneratedSentence g;
    for (const auto& w : lines[rng_.below(lines.size())]) g.words.push_back(w);
    g.frame.sem_types.assign(g.words.size(), std::string(kNullType));
    return g;
  }

  /// One content sentence; returns whether a marker was placed.
  GeneratedSentence content(bool want_marker, bool& placed_marker) {
    GeneratedSentence g;
    auto filler_run = [&](int lo, int hi) {
      const int n = lo + static_cast<int>(rng_.below(static_cast<std::uint64_t>(hi - lo + 1)));
      for (int k = 0; k < n; ++k) push(g, fillers()[rng_.below(fillers().size())], kNullType);
    };
    filler_run(1, 3);
    if (rng_.bernoulli(0.2)) {
      push(g, "temperature", kNullType);
      push(g, fmt::format("{}.{}", 36 + rng_.below(4), rng_.below(10)), kNullType);
    }
    const int n_concepts = rng_.bernoulli(0.8) ? 1 + static_cast<int>(rng_.below(2)) : 0;
    for (int c = 0; c < n_concepts; ++c) {
      if (c > 0) filler_run(1, 2);
      const bool marker_here = want_marker && rng_.bernoulli(c == 0 ? 0.9 : 0.5);
      const bool marker_before = rng_.bernoulli(0.5);
      if (marker_here && marker_before) push(g, pick_marker(), kNullType);
      if (!marker_here && rng_.bernoulli(0.25)) {
        const auto& cues = lexicon_.negation_cues();
        auto it = cues.begin();
        std::advance(it, static_cast<std::ptrdiff_t>(rng_.below(cues.size())));
        push(g, *it, kNegType);
      }
      const std::string& surface = concepts_[rng_.below(concepts_.size())];
      const std::string type(*lexicon_.type_of(surface));
      for (const auto& w : split_words(surface)) push(g, w, type);
      g.frame.sem_tokens.push_back(surface);
      if (marker_here && !marker_before) push(g, pick_marker(), kNullType);
      placed_marker = placed_marker || marker_here;
    }
    if (want_marker && n_concepts == 0 && !placed_marker) {
      // Force a marker next to a concept so marked notes always carry one.
      push(g, pick_marker(), kNullType);
      const std::string& surface = concepts_[rng_.below(concepts_.size())];
      const std::string type(*lexicon_.type_of(surface));
      for (const auto& w : split_words(surface)) push(g, w, type);
      g.frame.sem_tokens.push_back(surface);
      placed_marker = true;
    }
    filler_run(0, 2);
    if (rng_.bernoulli(0.5)) g.words[0] = capitalize(g.words[0]);
    return g;
  }

 private:
  static void push(GeneratedSentence& g, const std::string& word, std::string_view type) {
    g.words.push_back(word);
    g.frame.sem_types.emplace_back(type);
  }

  const std::string& pick_marker() { return deterioration_markers()[rng_.below(deterioration_markers().size())]; }

  Rng& rng_;
  const ConceptLexicon& lexicon_;
  std::vector<std::string> concepts_;
};

NoteCategory draw_category(Rng& rng) {
  // Roughly the category mix of an ICU note export.
  static const std::vector<std::pair<NoteCategory, double>> weights{
      {NoteCategory::DischargeSummary, 0.35}, {NoteCategory::Nursing, 0.25}, {NoteCategory::Radiology, 0.15},
      {NoteCategory::Physician, 0.10},        {NoteCategory::Echo, 0.10},    {NoteCategory::ECG, 0.05}};
  double u = rng.uniform();
  for (const auto& [c, w] : weights) {
    if (u < w) return c;
    u -= w;
  }
  return NoteCategory::DischargeSummary;
}

}  // namespace

void SynthConfig::validate() const {
  auto rate = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(fmt::format("{} must be in [0, 1], got {}", name, v));
  };
  rate(prevalence_30d, "prevalence_30d");
  rate(prevalence_1y, "prevalence_1y");
  rate(marker_rate, "marker_rate");
  rate(marker_rate_1y, "marker_rate_1y");
  if (prevalence_30d > prevalence_1y)
    throw ConfigError("prevalence_30d cannot exceed prevalence_1y (30-day deaths are 1-year deaths)");
  if (patients < 1) throw ConfigError("patients must be >= 1");
  if (notes_per_patient_mean < 1.0) throw ConfigError("notes_per_patient_mean must be >= 1");
  if (min_sections < 1 || max_sections < min_sections) throw ConfigError("bad section count range");
  if (min_sentences_per_section < 1 || max_sentences_per_section < min_sentences_per_section)
    throw ConfigError("bad sentences-per-section range");
}

SynthConfig SynthConfig::from_flat(const FlatConfig& flat) {
  static const std::vector<std::string> known{"patients",       "notes_per_patient_mean", "prevalence_30d",
                                              "prevalence_1y",  "marker_rate",            "marker_rate_1y",
                                              "min_sections",   "max_sections",           "min_sentences_per_section",
                                              "max_sentences_per_section"};
  if (auto unknown = flat.unknown_keys(known); !unknown.empty())
    throw ConfigError(fmt::format("unknown synth config key(s): {}", fmt::join(unknown, ", ")));
  SynthConfig c;
  c.patients = static_cast<int>(flat.get_int("patients", c.patients));
  c.notes_per_patient_mean = flat.get_double("notes_per_patient_mean", c.notes_per_patient_mean);
  c.prevalence_30d = flat.get_double("prevalence_30d", c.prevalence_30d);
  c.prevalence_1y = flat.get_double("prevalence_1y", c.prevalence_1y);
  c.marker_rate = flat.get_double("marker_rate", c.marker_rate);
  c.marker_rate_1y = flat.get_double("marker_rate_1y", c.marker_rate_1y);
  c.min_sections = static_cast<int>(flat.get_int("min_sections", c.min_sections));
  c.max_sections = static_cast<int>(flat.get_int("max_sections", c.max_sections));
  c.min_sentences_per_section = static_cast<int>(flat.get_int("min_sentences_per_section", c.min_sentences_per_section));
  c.max_sentences_per_section = static_cast<int>(flat.get_int("max_sentences_per_section", c.max_sentences_per_section));
  c.validate();
  return c;
}

ConceptLexicon synthetic_lexicon() {
  ConceptLexicon lex;
  for (const auto& [s, t] : lexicon_entries()) lex.add(s, t);
  return lex;
}

const std::vector<std::string>& deterioration_markers() {
  static const std::vector<std::string> markers{"worsened", "worsening", "deteriorating", "increased", "declining"};
  return markers;
}

SyntheticCorpus generate_synthetic(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  SyntheticCorpus out;
  out.lexicon = synthetic_lexicon();
  const SectionInventory sections = SectionInventory::defaults();
  Rng rng(seed);
  NoteWriter writer(rng, out.lexicon);
  int note_counter = 0;

  for (int p = 0; p < config.patients; ++p) {
    PatientRecord rec;
    rec.patient_id = fmt::format("P{:05d}", p);
    rec.age_years = 18 + static_cast<int>(rng.below(73));
    const double u = rng.uniform();
    rec.died_1y = u < config.prevalence_1y;
    rec.died_30d = u < config.prevalence_30d;
    const double marker_p = *rec.died_30d ? config.marker_rate : (*rec.died_1y ? config.marker_rate_1y : 0.0);
    const int n_notes = 1 + rng.poisson(config.notes_per_patient_mean - 1.0);

    for (int k = 0; k < n_notes; ++k) {
      Note note;
      note.note_id = fmt::format("N{:06d}", note_counter++);
      note.patient_id = rec.patient_id;
      note.category = draw_category(rng);
      note.chart_time = fmt::format("2150-01-{:02d}T{:02d}:00:00", 1 + k / 4, 6 * (k % 4));
      const bool marked = rng.bernoulli(marker_p);
      bool placed = false;

      struct Line {
        std::vector<GeneratedSentence> sentences;
        std::string section;
        bool header = false;
      };
      std::vector<Line> lines;
      if (rng.bernoulli(0.5)) lines.push_back({{writer.preamble()}, std::string(kPreamble), false});
      const auto& headers = sections.headers(note.category);
      std::vector<std::size_t> chosen(headers.size());
      for (std::size_t i = 0; i < chosen.size(); ++i) chosen[i] = i;
      rng.shuffle(std::span<std::size_t>(chosen));
      const auto section_span = static_cast<std::uint64_t>(config.max_sections - config.min_sections + 1);
      chosen.resize(std::min(chosen.size(), static_cast<std::size_t>(config.min_sections) + rng.below(section_span)));
      std::sort(chosen.begin(), chosen.end());

      const auto sent_span =
          static_cast<std::uint64_t>(config.max_sentences_per_section - config.min_sentences_per_section + 1);
      for (std::size_t s = 0; s < chosen.size(); ++s) {
        const std::string& name = headers[chosen[s]];
        lines.push_back({{writer.header(name)}, name, true});
        const int n_sent = config.min_sentences_per_section + static_cast<int>(rng.below(sent_span));
        for (int j = 0; j < n_sent; ++j) {
          // The last content sentence of a marked note must carry a marker if none has yet.
          const bool last = s + 1 == chosen.size() && j + 1 == n_sent;
          const bool want = marked && (rng.bernoulli(0.6) || (last && !placed));
          GeneratedSentence g = writer.content(want, placed);
          Line& prev = lines.back();
          if (!prev.header && prev.sentences.size() == 1 && rng.bernoulli(0.25))
            prev.sentences.push_back(std::move(g));  // two sentences on one line
          else
            lines.push_back({{std::move(g)}, name, false});
        }
      }

      std::string text;
      std::vector<SemanticFrame> gold;
      for (const Line& line : lines) {
        for (std::size_t si = 0; si < line.sentences.size(); ++si) {
          const auto& g = line.sentences[si];
          if (si > 0) text += ' ';
          text += fmt::format("{}", fmt::join(g.words, " "));
          text += line.header ? ":" : ".";
          SemanticFrame f = g.frame;
          f.category = std::string(to_string(note.category));
          f.subcategory = line.section;
          gold.push_back(std::move(f));
        }
        text += '\n';
      }
      note.raw_text = std::move(text);
      note.sentences = split_sentences(note.raw_text);
      out.gold_frames[note.note_id] = std::move(gold);
      rec.notes.push_back(std::move(note));
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_notes_jsonl(dir / "notes.jsonl", corpus.records);
  write_patients_jsonl(dir / "patients.jsonl", corpus.records);
  corpus.lexicon.save(dir / "lexicon.json");
  std::vector<NoteFrames> gold;
  for (const auto& p : corpus.records)
    for (const auto& n : p.notes) gold.push_back({n.note_id, corpus.gold_frames.at(n.note_id)});
  write_frames_jsonl(dir / "gold_frames.jsonl", gold);
}

}  // namespace hsc
