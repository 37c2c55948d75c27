#include "hsc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include "json.hpp"
#include <set>
#include <sstream>

#include "hsc/classifier.hpp"
#include "hsc/errors.hpp"

namespace hsc {

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? pos : neg).push_back(scores[i]);
  if (pos.empty() || neg.empty()) throw DataError("AUC needs at least one positive and one negative");
  // Sorting the negatives turns the pair count into two binary searches per positive.
  std::sort(neg.begin(), neg.end());
  double credit = 0.0;
  for (double p : pos) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    const auto hi = std::upper_bound(lo, neg.end(), p);
    credit += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return credit / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["horizon"] = std::string(to_string(horizon));
  j["auc_roc"] = auc_roc;
  j["n_pos"] = n_pos;
  j["n_neg"] = n_neg;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["model"] = model;
  j["split"] = split;
  return j.dump(2) + "\n";
}

LabeledSet labeled_rows(std::span<const PatientRecord> records, Horizon horizon) {
  LabeledSet out;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const std::optional<bool> y = label(records[r], horizon);
    if (!y) continue;
    out.rows.push_back(r);
    out.labels.push_back(*y ? 1 : 0);
  }
  return out;
}

namespace {

Matrix take_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace

EvalReport evaluate_features(const Matrix& train_x, std::span<const PatientRecord> train, const Matrix& eval_x,
                             std::span<const PatientRecord> eval, Horizon horizon, double l2) {
  const LabeledSet tr = labeled_rows(train, horizon);
  const LabeledSet ev = labeled_rows(eval, horizon);
  const MortalityClassifier clf = MortalityClassifier::fit(take_rows(train_x, tr.rows), tr.labels, l2);
  const Vector p = clf.predict_proba(take_rows(eval_x, ev.rows));
  EvalReport report;
  report.horizon = horizon;
  report.auc_roc = auc_roc(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), ev.labels);
  for (int y : ev.labels) (y ? report.n_pos : report.n_neg) += 1;
  return report;
}

std::vector<double> minmax_normalize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.5);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*hi - *lo <= 0.0) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / (*hi - *lo);
  return out;
}

namespace {

std::string escape_html(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed3(double x) {
  std::ostringstream os;
  os.precision(3);
  os << std::fixed << x;
  return os.str();
}

}  // namespace

std::string render_note_html(const Note& note, const NoteAnalysis& analysis) {
  if (analysis.gates.size() != note.sentences.size())
    throw std::invalid_argument("analysis does not match the note's sentences");
  const std::vector<double> alpha =
      minmax_normalize(std::span<const double>(analysis.alpha.data(), static_cast<std::size_t>(analysis.alpha.size())));
  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" << escape_html(note.note_id)
       << "</title>\n<style>body{font-family:sans-serif;max-width:60em;margin:2em auto}"
          ".s{margin:.2em 0;padding:.2em .5em;border-left:.8em solid}"
          ".w{padding:0 .1em;border-radius:.2em}</style></head><body>\n";
  html << "<h1>" << escape_html(note.note_id) << " (" << escape_html(to_string(note.category)) << ")</h1>\n";
  html << "<p>Word shading: normalized importance weight. Bar: normalized sentence salience.</p>\n";
  for (std::size_t i = 0; i < note.sentences.size(); ++i) {
    const Sentence& s = note.sentences[i];
    const Vector& g = analysis.gates[i];
    if (static_cast<std::size_t>(g.size()) != s.words.size())
      throw std::invalid_argument("gate weights of sentence " + std::to_string(i) + " do not match its words");
    const std::vector<double> gn = minmax_normalize(std::span<const double>(g.data(), static_cast<std::size_t>(g.size())));
    html << "<div class=\"s\" title=\"salience " << fixed3(alpha[i]) << "\" style=\"border-color:rgba(31,119,180,"
         << fixed3(alpha[i]) << ")\">";
    for (std::size_t j = 0; j < s.words.size(); ++j) {
      html << "<span class=\"w\" title=\"" << fixed3(gn[j]) << "\" style=\"background:rgba(255,127,14," << fixed3(gn[j])
           << ")\">" << escape_html(s.words[j]) << "</span> ";
    }
    html << "</div>\n";
  }
  html << "</body></html>\n";
  return html.str();
}

BaselineKind parse_baseline(std::string_view s) {
  if (s == "bow") return BaselineKind::BagOfWords;
  if (s == "boc") return BaselineKind::BagOfConcepts;
  throw ConfigError("unknown baseline '" + std::string(s) + "' (expected bow or boc)");
}

std::string_view to_string(BaselineKind k) { return k == BaselineKind::BagOfWords ? "bow" : "boc"; }

std::vector<std::string> TfidfFeaturizer::terms(const Note& note, const FrameMap* frames) const {
  std::vector<std::string> out;
  if (kind_ == BaselineKind::BagOfWords) {
    for (const Sentence& s : note.sentences)
      for (const std::string& w : s.words) out.push_back(normalize_word(w));
    return out;
  }
  if (frames == nullptr) throw DataError("the bag-of-concepts baseline needs semantic frames");
  auto it = frames->find(note.note_id);
  if (it == frames->end()) throw DataError("no frames for note " + note.note_id);
  for (const SemanticFrame& f : it->second) out.insert(out.end(), f.sem_tokens.begin(), f.sem_tokens.end());
  return out;
}

void TfidfFeaturizer::fit(std::span<const PatientRecord> train, const FrameMap* frames) {
  std::map<std::string, std::size_t, std::less<>> df;
  std::size_t docs = 0;
  for (const PatientRecord& p : train)
    for (const Note& n : p.notes) {
      ++docs;
      const std::vector<std::string> t = terms(n, frames);
      for (const std::string& term : std::set<std::string>(t.begin(), t.end())) ++df[term];
    }
  std::vector<std::pair<std::string, std::size_t>> ranked(df.begin(), df.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > max_features_) ranked.resize(max_features_);
  std::sort(ranked.begin(), ranked.end());
  vocabulary_.clear();
  index_.clear();
  idf_.resize(static_cast<Eigen::Index>(ranked.size()));
  for (const auto& [term, count] : ranked) {
    idf_(static_cast<Eigen::Index>(vocabulary_.size())) =
        std::log((1.0 + static_cast<double>(docs)) / (1.0 + static_cast<double>(count))) + 1.0;
    index_.emplace(term, vocabulary_.size());
    vocabulary_.push_back(term);
  }
}

Matrix TfidfFeaturizer::transform(std::span<const PatientRecord> records, const FrameMap* frames) const {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(vocabulary_.size()));
  for (std::size_t r = 0; r < records.size(); ++r) {
    Vector acc = Vector::Zero(out.cols());
    for (const Note& n : records[r].notes) {
      Vector tf = Vector::Zero(out.cols());
      for (const std::string& t : terms(n, frames)) {
        auto it = index_.find(t);
        if (it != index_.end()) tf(static_cast<Eigen::Index>(it->second)) += 1.0;
      }
      acc += tf.cwiseProduct(idf_);
    }
    if (!records[r].notes.empty()) acc /= static_cast<double>(records[r].notes.size());
    const double norm = acc.norm();
    if (norm > 0) acc /= norm;
    out.row(static_cast<Eigen::Index>(r)) = acc.transpose();
  }
  return out;
}

}  // namespace hsc
