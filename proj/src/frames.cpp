#include "hsc/frames.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "hsc/errors.hpp"
#include "json.hpp"

namespace hsc {

using nlohmann::json;

namespace {

std::string collapse(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

ConceptLexicon::ConceptLexicon() : cues_{"no", "not", "denies", "without", "negative"} {}

void ConceptLexicon::add(std::string_view surface, std::string_view type) {
  std::string key = collapse(surface);
  if (key.empty()) throw DataError("lexicon entry with an empty surface form");
  if (type.empty()) throw DataError(fmt::format("lexicon entry \"{}\" has an empty type", key));
  max_words_ = std::max<std::size_t>(max_words_, 1 + static_cast<std::size_t>(std::count(key.begin(), key.end(), ' ')));
  entries_[std::move(key)] = std::string(type);
}

void ConceptLexicon::set_negation_cues(std::set<std::string> cues) {
  cues_.clear();
  for (const auto& c : cues) cues_.insert(normalize_word(c));
}

std::optional<std::string_view> ConceptLexicon::type_of(std::string_view normalized_surface) const {
  auto it = entries_.find(normalized_surface);
  if (it == entries_.end()) return std::nullopt;
  return std::string_view(it->second);
}

bool ConceptLexicon::is_negation_cue(std::string_view word) const { return cues_.contains(normalize_word(word)); }

std::vector<std::string> ConceptLexicon::type_inventory() const {
  std::set<std::string> types{std::string(kNullType), std::string(kNegType)};
  for (const auto& [s, t] : entries_) types.insert(t);
  return {types.begin(), types.end()};
}

ConceptLexicon ConceptLexicon::parse(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError(fmt::format("lexicon: malformed JSON ({})", e.what()));
  }
  if (!doc.is_object() || !doc.contains("entries") || !doc["entries"].is_object())
    throw DataError("lexicon: expected {\"entries\": {surface: type}, \"negation_cues\": [...]}");
  ConceptLexicon lex;
  for (const auto& [surface, type] : doc["entries"].items()) {
    if (!type.is_string()) throw DataError(fmt::format("lexicon: type of \"{}\" must be a string", surface));
    lex.add(surface, type.get<std::string>());
  }
  if (doc.contains("negation_cues")) {
    std::set<std::string> cues;
    for (const auto& c : doc["negation_cues"]) {
      if (!c.is_string()) throw DataError("lexicon: negation_cues must be strings");
      cues.insert(c.get<std::string>());
    }
    lex.set_negation_cues(std::move(cues));
  }
  return lex;
}

ConceptLexicon ConceptLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open lexicon {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string ConceptLexicon::to_json() const {
  json doc;
  doc["entries"] = json::object();
  for (const auto& [s, t] : entries_) doc["entries"][s] = t;
  doc["negation_cues"] = json::array();
  for (const auto& c : cues_) doc["negation_cues"].push_back(c);
  return doc.dump(2);
}

void ConceptLexicon::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  out << to_json() << '\n';
}

SectionInventory SectionInventory::defaults() {
  SectionInventory inv;
  inv.headers_[NoteCategory::DischargeSummary] = {
      "Admission Date", "Discharge Date", "Service", "Allergies", "Attending", "Chief Complaint",
      "Major Surgical or Invasive Procedure", "History of Present Illness", "Past Medical History",
      "Social History", "Family History", "Physical Exam", "Pertinent Results", "Brief Hospital Course",
      "Medications on Admission", "Discharge Medications", "Discharge Disposition", "Discharge Diagnosis",
      "Discharge Condition", "Discharge Instructions", "Followup Instructions"};
  inv.headers_[NoteCategory::Nursing] = {"Neuro", "Cardiovascular", "Respiratory", "GI", "GU", "Skin",
                                         "Social", "Assessment", "Action", "Response", "Plan"};
  inv.headers_[NoteCategory::Radiology] = {"Reason for Exam", "Clinical Information", "Indication", "Comparison",
                                           "Technique", "Findings", "Impression"};
  inv.headers_[NoteCategory::Echo] = {"Indication", "Left Atrium", "Left Ventricle", "Right Ventricle",
                                      "Aortic Valve", "Mitral Valve", "Pericardium", "Findings", "Conclusions",
                                      "Impression"};
  inv.headers_[NoteCategory::ECG] = {"Rhythm", "Intervals", "Interpretation", "Impression"};
  inv.headers_[NoteCategory::Physician] = {"Chief Complaint", "HPI", "Review of Systems", "Physical Examination",
                                           "Labs", "Medications", "Assessment and Plan", "Assessment", "Plan"};
  return inv;
}

SectionInventory SectionInventory::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open section inventory {}", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(fmt::format("{}: malformed JSON ({})", path.string(), e.what()));
  }
  SectionInventory inv = defaults();
  for (const auto& [name, list] : doc.items()) {
    auto category = parse_category(name);
    if (!category) throw DataError(fmt::format("{}: unknown category \"{}\"", path.string(), name));
    inv.headers_[*category] = list.get<std::vector<std::string>>();
  }
  return inv;
}

std::optional<std::string> SectionInventory::match(NoteCategory category, std::string_view candidate) const {
  const std::string key = collapse(candidate);
  auto it = headers_.find(category);
  if (it == headers_.end()) return std::nullopt;
  for (const auto& h : it->second)
    if (collapse(h) == key) return h;
  return std::nullopt;
}

const std::vector<std::string>& SectionInventory::headers(NoteCategory category) const {
  static const std::vector<std::string> none;
  auto it = headers_.find(category);
  return it == headers_.end() ? none : it->second;
}

void SectionInventory::set_headers(NoteCategory category, std::vector<std::string> headers) {
  headers_[category] = std::move(headers);
}

std::vector<std::pair<std::size_t, std::string>> detect_sections(const Note& note, const SectionInventory& sections) {
  // Header offsets, in text order.
  std::vector<std::pair<std::size_t, std::string>> headers;
  const std::string_view text = note.raw_text;
  std::size_t line_begin = 0;
  while (line_begin < text.size()) {
    std::size_t line_end = text.find('\n', line_begin);
    if (line_end == std::string_view::npos) line_end = text.size();
    const std::string_view line = text.substr(line_begin, line_end - line_begin);
    if (const auto colon = line.find(':'); colon != std::string_view::npos)
      if (auto h = sections.match(note.category, trim(line.substr(0, colon)))) headers.emplace_back(line_begin, *h);
    line_begin = line_end + 1;
  }

  std::vector<std::pair<std::size_t, std::string>> out;
  out.reserve(note.sentences.size());
  std::size_t next = 0;
  std::string current(kPreamble);
  for (std::size_t i = 0; i < note.sentences.size(); ++i) {
    while (next < headers.size() && headers[next].first <= note.sentences[i].span.begin) current = headers[next++].second;
    out.emplace_back(i, current);
  }
  return out;
}

SemanticFrame tag_sentence(const Sentence& sentence, const ConceptLexicon& lexicon) {
  SemanticFrame frame;
  const std::size_t n = sentence.words.size();
  std::vector<std::string> words(n);
  std::vector<bool> cue(n);
  for (std::size_t j = 0; j < n; ++j) {
    words[j] = normalize_word(sentence.words[j]);
    cue[j] = lexicon.is_negation_cue(words[j]);
  }
  frame.sem_types.reserve(n);
  std::size_t i = 0;
  while (i < n) {
    if (cue[i]) {
      frame.sem_types.emplace_back(kNegType);
      ++i;
      continue;
    }
    std::size_t longest = 0;
    std::string_view type;
    std::string surface;
    const std::size_t max_len = std::min(lexicon.max_words(), n - i);
    std::string candidate;
    for (std::size_t len = 1; len <= max_len; ++len) {
      if (cue[i + len - 1]) break;
      if (len > 1) candidate += ' ';
      candidate += words[i + len - 1];
      if (auto t = lexicon.type_of(candidate)) {
        longest = len;
        type = *t;
        surface = candidate;
      }
    }
    if (longest == 0) {
      frame.sem_types.emplace_back(kNullType);
      ++i;
      continue;
    }
    for (std::size_t k = 0; k < longest; ++k) frame.sem_types.emplace_back(type);
    frame.sem_tokens.push_back(std::move(surface));
    i += longest;
  }
  return frame;
}

std::vector<SemanticFrame> build_frames(const Note& note, const ConceptLexicon& lexicon,
                                        const SectionInventory& sections) {
  const auto subcategories = detect_sections(note, sections);
  std::vector<SemanticFrame> frames;
  frames.reserve(note.sentences.size());
  for (std::size_t i = 0; i < note.sentences.size(); ++i) {
    SemanticFrame f = tag_sentence(note.sentences[i], lexicon);
    f.category = std::string(to_string(note.category));
    f.subcategory = subcategories[i].second;
    frames.push_back(std::move(f));
  }
  return frames;
}

void write_frames_jsonl(const std::filesystem::path& path, std::span<const NoteFrames> notes) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  for (const auto& nf : notes)
    for (std::size_t i = 0; i < nf.frames.size(); ++i) {
      const auto& f = nf.frames[i];
      json obj{{"note_id", nf.note_id},       {"sent_idx", i},
               {"category", f.category},      {"subcategory", f.subcategory},
               {"sem_tokens", f.sem_tokens},  {"sem_types", f.sem_types}};
      out << obj.dump() << '\n';
    }
}

std::vector<NoteFrames> read_frames_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open frames file {}", path.string()));
  std::vector<NoteFrames> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json obj = json::parse(line);
      const auto note_id = obj.at("note_id").get<std::string>();
      const auto idx = obj.at("sent_idx").get<std::size_t>();
      if (out.empty() || out.back().note_id != note_id) out.push_back({note_id, {}});
      if (idx != out.back().frames.size())
        throw DataError(fmt::format("{}:{}: sentence index {} out of order", path.string(), lineno, idx));
      out.back().frames.push_back({obj.at("category").get<std::string>(), obj.at("subcategory").get<std::string>(),
                                   obj.at("sem_tokens").get<std::vector<std::string>>(),
                                   obj.at("sem_types").get<std::vector<std::string>>()});
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

}  // namespace hsc
