#include "hsc/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "hsc/errors.hpp"
#include "hsc/random.hpp"
#include "json.hpp"

namespace hsc {

using nlohmann::json;

std::optional<NoteCategory> parse_category(std::string_view s) {
  std::string key;
  for (char c : s)
    if (std::isalnum(static_cast<unsigned char>(c))) key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (key == "dischargesummary") return NoteCategory::DischargeSummary;
  if (key == "nursing" || key == "nursingother") return NoteCategory::Nursing;
  if (key == "radiology") return NoteCategory::Radiology;
  if (key == "echo") return NoteCategory::Echo;
  if (key == "ecg") return NoteCategory::ECG;
  if (key == "physician") return NoteCategory::Physician;
  return std::nullopt;
}

std::string_view to_string(NoteCategory c) {
  switch (c) {
    case NoteCategory::DischargeSummary: return "DischargeSummary";
    case NoteCategory::Nursing: return "Nursing";
    case NoteCategory::Radiology: return "Radiology";
    case NoteCategory::Echo: return "Echo";
    case NoteCategory::ECG: return "ECG";
    case NoteCategory::Physician: return "Physician";
  }
  return "DischargeSummary";
}

std::optional<bool> label(const PatientRecord& p, Horizon h) {
  return h == Horizon::Days30 ? p.died_30d : p.died_1y;
}

std::string normalize_word(std::string_view word) {
  std::string out(word);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

namespace {

constexpr std::string_view kStripChars = ".,;:!?()[]{}\"'";

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

/// Appends the words of text[begin, end) as one sentence, if any survive stripping.
void emit_sentence(std::string_view text, std::size_t begin, std::size_t end, std::vector<Sentence>& out) {
  Sentence s;
  std::size_t i = begin;
  while (i < end) {
    while (i < end && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < end && !is_space(text[j])) ++j;
    std::size_t b = i, e = j;
    while (b < e && kStripChars.find(text[b]) != std::string_view::npos) ++b;
    while (e > b && kStripChars.find(text[e - 1]) != std::string_view::npos) --e;
    if (e > b) {
      if (s.words.empty()) s.span.begin = b;
      s.span.end = e;
      s.words.emplace_back(text.substr(b, e - b));
    }
    i = j;
  }
  if (!s.words.empty()) out.push_back(std::move(s));
}

bool ends_sentence(std::string_view line, std::size_t dot, const SplitterOptions& options) {
  std::size_t start = dot;
  while (start > 0 && !is_space(line[start - 1])) --start;
  const std::string token = normalize_word(line.substr(start, dot - start + 1));
  // Drop leading punctuation such as "(e.g."
  const auto first = token.find_first_not_of("([{\"'");
  const std::string bare = first == std::string::npos ? token : token.substr(first);
  if (std::find(options.abbreviations.begin(), options.abbreviations.end(), bare) != options.abbreviations.end())
    return false;
  const std::string_view stem = std::string_view(bare).substr(0, bare.size() - 1);
  if (!stem.empty() && std::all_of(stem.begin(), stem.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    return false;
  return true;
}

}  // namespace

std::vector<Sentence> split_sentences(std::string_view text, const SplitterOptions& options) {
  std::vector<Sentence> out;
  std::size_t line_begin = 0;
  while (line_begin <= text.size()) {
    std::size_t line_end = text.find('\n', line_begin);
    if (line_end == std::string_view::npos) line_end = text.size();
    const std::string_view line = text.substr(line_begin, line_end - line_begin);
    std::size_t seg_begin = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] != '.' || i + 1 >= line.size() || !is_space(line[i + 1])) continue;
      if (!ends_sentence(line, i, options)) continue;
      emit_sentence(text, line_begin + seg_begin, line_begin + i + 1, out);
      seg_begin = i + 1;
    }
    emit_sentence(text, line_begin + seg_begin, line_end, out);
    line_begin = line_end + 1;
  }
  return out;
}

namespace {

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError(fmt::format("{}: missing field \"{}\"", where, key));
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw DataError(fmt::format("{}: field \"{}\" has the wrong type", where, key));
  }
}

std::optional<bool> optional_bool(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_boolean()) throw DataError(fmt::format("{}: field \"{}\" must be true, false or null", where, key));
  return it->get<bool>();
}

struct PatientAccumulator {
  std::vector<Note> notes;
  int min_age = 1 << 30;
  int max_admissions = 0;
};

}  // namespace

LoadResult load_notes(const std::filesystem::path& notes_path,
                      const std::optional<std::filesystem::path>& patients_path, const SplitterOptions& options) {
  std::ifstream in(notes_path);
  if (!in) throw DataError(fmt::format("cannot open notes file {}", notes_path.string()));

  LoadResult result;
  std::map<std::string, PatientAccumulator> patients;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), is_space)) continue;
    const std::string where = fmt::format("{}:{}", notes_path.string(), lineno);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(fmt::format("{}: malformed JSON ({})", where, e.what()));
    }
    if (!obj.is_object()) throw DataError(fmt::format("{}: expected a JSON object", where));
    ++result.stats.notes_read;

    Note note;
    note.note_id = field<std::string>(obj, "note_id", where);
    note.patient_id = field<std::string>(obj, "patient_id", where);
    const auto category_name = field<std::string>(obj, "category", where);
    note.chart_time = field<std::string>(obj, "chart_time", where);
    note.raw_text = field<std::string>(obj, "text", where);
    const int age = field<int>(obj, "age_years", where);
    const int admissions = field<int>(obj, "admission_count", where);

    auto category = parse_category(category_name);
    if (!category) {
      ++result.stats.skipped_unknown_category;
      continue;
    }
    note.category = *category;
    note.sentences = split_sentences(note.raw_text, options);
    if (note.sentences.empty()) {
      ++result.stats.skipped_empty_text;
      continue;
    }
    auto& acc = patients[note.patient_id];
    acc.min_age = std::min(acc.min_age, age);
    acc.max_admissions = std::max(acc.max_admissions, admissions);
    acc.notes.push_back(std::move(note));
  }
  if (result.stats.skipped_unknown_category > 0)
    spdlog::warn("{}: skipped {} note(s) with an unknown category", notes_path.string(),
                 result.stats.skipped_unknown_category);

  std::unordered_map<std::string, std::pair<std::optional<bool>, std::optional<bool>>> labels;
  if (patients_path) {
    std::ifstream pin(*patients_path);
    if (!pin) throw DataError(fmt::format("cannot open patients file {}", patients_path->string()));
    lineno = 0;
    while (std::getline(pin, line)) {
      ++lineno;
      if (std::all_of(line.begin(), line.end(), is_space)) continue;
      const std::string where = fmt::format("{}:{}", patients_path->string(), lineno);
      json obj;
      try {
        obj = json::parse(line);
      } catch (const json::parse_error& e) {
        throw DataError(fmt::format("{}: malformed JSON ({})", where, e.what()));
      }
      if (!obj.is_object()) throw DataError(fmt::format("{}: expected a JSON object", where));
      const auto id = field<std::string>(obj, "patient_id", where);
      auto d30 = optional_bool(obj, "died_30d", where);
      auto d1y = optional_bool(obj, "died_1y", where);
      if (d30 == true && d1y == false)
        throw DataError(fmt::format("{}: died_30d is true but died_1y is false", where));
      if (d30 == true) d1y = true;
      labels[id] = {d30, d1y};
    }
  }

  for (auto& [id, acc] : patients) {
    if (acc.min_age < 18) {
      ++result.stats.excluded_minor_patients;
      continue;
    }
    if (acc.max_admissions > 1) {
      ++result.stats.excluded_multi_admission_patients;
      continue;
    }
    PatientRecord rec;
    rec.patient_id = id;
    rec.age_years = acc.min_age;
    rec.notes = std::move(acc.notes);
    std::stable_sort(rec.notes.begin(), rec.notes.end(), [](const Note& a, const Note& b) {
      return std::tie(a.chart_time, a.note_id) < std::tie(b.chart_time, b.note_id);
    });
    if (auto it = labels.find(id); it != labels.end()) {
      rec.died_30d = it->second.first;
      rec.died_1y = it->second.second;
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

void write_notes_jsonl(const std::filesystem::path& path, std::span<const PatientRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  for (const auto& p : records)
    for (const auto& n : p.notes) {
      json obj{{"note_id", n.note_id},
               {"patient_id", n.patient_id},
               {"category", std::string(to_string(n.category))},
               {"chart_time", n.chart_time},
               {"text", n.raw_text},
               {"age_years", p.age_years},
               {"admission_count", 1}};
      out << obj.dump() << '\n';
    }
}

void write_patients_jsonl(const std::filesystem::path& path, std::span<const PatientRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  auto to_json = [](const std::optional<bool>& v) { return v ? json(*v) : json(nullptr); };
  for (const auto& p : records) {
    json obj{{"patient_id", p.patient_id}, {"died_30d", to_json(p.died_30d)}, {"died_1y", to_json(p.died_1y)}};
    out << obj.dump() << '\n';
  }
}

std::vector<PatientRecord> subsample_negatives(std::span<const PatientRecord> records, Horizon horizon,
                                               std::size_t target_neg, std::uint64_t seed) {
  // Canonical order first so the draw does not depend on the caller's ordering.
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return records[a].patient_id < records[b].patient_id; });

  std::vector<std::size_t> negatives;
  for (std::size_t i : order)
    if (label(records[i], horizon) == false) negatives.push_back(i);
  if (target_neg > negatives.size())
    throw DataError(fmt::format("requested {} negatives for {} but only {} are available", target_neg,
                                to_string(horizon), negatives.size()));

  Rng rng(seed);
  for (std::size_t i = 0; i < target_neg; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(negatives.size() - i));
    std::swap(negatives[i], negatives[j]);
  }
  std::set<std::size_t> keep(negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(target_neg));

  std::vector<PatientRecord> out;
  for (std::size_t i : order) {
    const auto y = label(records[i], horizon);
    if (y == true || (y == false && keep.contains(i))) out.push_back(records[i]);
  }
  return out;
}

DataSplit split(std::span<const PatientRecord> records, SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.test < 0 || ratios.validation < 0 ||
      std::abs(ratios.train + ratios.test + ratios.validation - 1.0) > 1e-9)
    throw ConfigError("split ratios must be non-negative and sum to 1");
  if (records.size() < 3) throw DataError(fmt::format("need at least 3 patients to split, got {}", records.size()));

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return records[a].patient_id < records[b].patient_id; });
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  const auto n = static_cast<double>(records.size());
  const auto n_train = std::min(records.size(), static_cast<std::size_t>(std::llround(ratios.train * n)));
  const auto n_test = std::min(records.size() - n_train, static_cast<std::size_t>(std::llround(ratios.test * n)));

  DataSplit out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& rec = records[order[k]];
    if (k < n_train)
      out.train.push_back(rec);
    else if (k < n_train + n_test)
      out.test.push_back(rec);
    else
      out.validation.push_back(rec);
  }
  auto by_id = [](const PatientRecord& a, const PatientRecord& b) { return a.patient_id < b.patient_id; };
  std::sort(out.train.begin(), out.train.end(), by_id);
  std::sort(out.test.begin(), out.test.end(), by_id);
  std::sort(out.validation.begin(), out.validation.end(), by_id);
  return out;
}

CorpusStats CorpusStats::compute(std::span<const Note* const> notes) {
  std::map<std::string, std::size_t, std::less<>> df;
  for (const Note* note : notes) {
    std::set<std::string> seen;
    for (const auto& s : note->sentences)
      for (const auto& w : s.words) seen.insert(normalize_word(w));
    for (const auto& w : seen) ++df[w];
  }
  return from_counts(notes.size(), std::move(df));
}

CorpusStats CorpusStats::from_counts(std::size_t document_count, std::map<std::string, std::size_t, std::less<>> df) {
  CorpusStats stats;
  stats.document_count_ = document_count;
  stats.df_ = std::move(df);
  stats.vocabulary_.reserve(stats.df_.size());
  for (const auto& [w, n] : stats.df_) stats.vocabulary_.push_back(w);
  return stats;
}

double CorpusStats::idf(std::string_view word) const {
  const auto it = df_.find(normalize_word(word));
  const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((1.0 + static_cast<double>(document_count_)) / (1.0 + df)) + 1.0;
}

double CorpusStats::unseen_idf() const { return std::log(1.0 + static_cast<double>(document_count_)) + 1.0; }

CorpusStats compute_idf(std::span<const Note* const> train_notes) {
  if (train_notes.empty()) throw DataError("compute_idf needs at least one note");
  return CorpusStats::compute(train_notes);
}

std::vector<const Note*> all_notes(std::span<const PatientRecord> records) {
  std::vector<const Note*> out;
  for (const auto& p : records)
    for (const auto& n : p.notes) out.push_back(&n);
  return out;
}

}  // namespace hsc
