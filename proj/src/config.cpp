#include "hsc/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "hsc/errors.hpp"
#include "hsc/random.hpp"

namespace hsc {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

FlatConfig FlatConfig::parse(std::string_view text, std::string_view origin) {
  FlatConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // A '#' inside quotes is kept.
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    const std::string body = trim(line);
    if (body.empty() || body.front() == '[') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError(fmt::format("{}:{}: expected `key = value`", origin, lineno));
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw ConfigError(fmt::format("{}:{}: empty key", origin, lineno));
    cfg.values_[key] = value;
  }
  return cfg;
}

FlatConfig FlatConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string FlatConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double FlatConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("config key `{}`: `{}` is not a number", key, it->second));
  }
}

long long FlatConfig::get_int(const std::string& key, long long fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  long long v = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError(fmt::format("config key `{}`: `{}` is not an integer", key, s));
  return v;
}

bool FlatConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError(fmt::format("config key `{}`: `{}` is not a boolean", key, it->second));
}

std::vector<int> FlatConfig::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<int> out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (t.empty()) continue;
    int v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size())
      throw ConfigError(fmt::format("config key `{}`: `{}` is not an integer list", key, it->second));
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> FlatConfig::unknown_keys(const std::vector<std::string>& known) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(k);
  return out;
}

std::string FlatConfig::to_string() const {
  std::string out;
  for (const auto& [k, v] : values_) out += fmt::format("{} = {}\n", k, v);
  return out;
}

Ablation parse_ablation(std::string_view s) {
  if (s == "none") return Ablation::None;
  if (s == "no_struct") return Ablation::NoStruct;
  if (s == "no_unstruct") return Ablation::NoUnstruct;
  throw ConfigError(fmt::format("unknown ablation `{}` (none|no_struct|no_unstruct)", s));
}

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::NoStruct: return "no_struct";
    case Ablation::NoUnstruct: return "no_unstruct";
  }
  return "none";
}

Horizon parse_horizon(std::string_view s) {
  if (s == "30d") return Horizon::Days30;
  if (s == "1y") return Horizon::Year1;
  throw ConfigError(fmt::format("unknown horizon `{}` (30d|1y)", s));
}

std::string_view to_string(Horizon h) { return h == Horizon::Days30 ? "30d" : "1y"; }

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (embedding_backend != "hash" && embedding_backend != "table")
    fail(fmt::format("embedding_backend must be hash or table, got `{}`", embedding_backend));
  if (embedding_backend == "table" && vectors_file.empty()) fail("embedding_backend = table needs vectors_file");
  if (d_emb < 1 || d_frame < 1 || f_L < 1 || pad_len_n < 1) fail("dimensions must be positive");
  if (conv_layers < 1) fail("conv_layers must be >= 1");
  const auto layers = static_cast<size_t>(conv_layers);
  if (conv_filters.size() != layers || kernel_sizes.size() != layers || strides.size() != layers)
    fail(fmt::format("conv_filters, kernel_sizes and strides need {} entries each", conv_layers));
  for (size_t l = 0; l < layers; ++l) {
    if (conv_filters[l] < 1) fail("conv_filters entries must be positive");
    if (kernel_sizes[l] < 0) fail("kernel_sizes entries must be >= 0");
    if (strides[l] < 1) fail("strides entries must be positive");
  }
  if (d_ssm < 1 || d_sa() < 1)
    fail(fmt::format("need 0 < d_ssm < d_s = 3*f_L = {}, got d_ssm = {}", d_s(), d_ssm));
  if (ssm_window_w < 0) fail("ssm_window_w must be >= 0");
  if (ssm_filters < 1 || ssm_kernel < 1 || ssm_kernel % 2 == 0) fail("ssm_kernel must be a positive odd number");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
  if (lambda_l2 < 0.0) fail("lambda_l2 must be >= 0");
  if (negatives_per_pair < 1) fail("negatives_per_pair must be >= 1");
  if (learning_rate <= 0.0) fail("learning_rate must be positive");
  if (epochs < 0 || batch_size < 1) fail("epochs must be >= 0 and batch_size >= 1");
  if (classifier_l2 < 0.0) fail("classifier_l2 must be >= 0");
  if (target_neg_30d < 0 || target_neg_1y < 0) fail("target_neg_* must be >= 0");
  if (split_train < 0 || split_test < 0 || split_validation < 0 ||
      std::abs(split_train + split_test + split_validation - 1.0) > 1e-9)
    fail("split ratios must be non-negative and sum to 1");
}

namespace {

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "seed", "embedding_backend", "vectors_file", "d_emb", "d_frame", "pad_len_n", "conv_layers",
      "conv_filters", "kernel_sizes", "strides", "f_L", "d_ssm", "ssm_window_w", "ssm_filters",
      "ssm_kernel", "dropout", "margin", "lambda_l2", "negatives_per_pair", "learning_rate", "epochs",
      "batch_size", "ablation", "end_to_end", "supervised_horizon", "classifier_l2", "target_neg_30d",
      "target_neg_1y", "split_train", "split_test", "split_validation"};
  return keys;
}

std::string join(const std::vector<int>& v) { return fmt::format("{}", fmt::join(v, ",")); }

std::string num(double v) { return fmt::format("{}", v); }

}  // namespace

TrainConfig TrainConfig::from_flat(const FlatConfig& flat) {
  if (auto unknown = flat.unknown_keys(known_keys()); !unknown.empty())
    throw ConfigError(fmt::format("unknown config key(s): {}", fmt::join(unknown, ", ")));
  TrainConfig c;
  c.seed = static_cast<std::uint64_t>(flat.get_int("seed", static_cast<long long>(c.seed)));
  c.embedding_backend = flat.get_string("embedding_backend", c.embedding_backend);
  c.vectors_file = flat.get_string("vectors_file", c.vectors_file);
  c.d_emb = static_cast<int>(flat.get_int("d_emb", c.d_emb));
  c.d_frame = static_cast<int>(flat.get_int("d_frame", c.d_frame));
  c.pad_len_n = static_cast<int>(flat.get_int("pad_len_n", c.pad_len_n));
  c.conv_layers = static_cast<int>(flat.get_int("conv_layers", c.conv_layers));
  c.conv_filters = flat.get_int_list("conv_filters", c.conv_filters);
  c.kernel_sizes = flat.get_int_list("kernel_sizes", c.kernel_sizes);
  c.strides = flat.get_int_list("strides", c.strides);
  c.f_L = static_cast<int>(flat.get_int("f_L", c.f_L));
  c.d_ssm = static_cast<int>(flat.get_int("d_ssm", c.d_ssm));
  c.ssm_window_w = static_cast<int>(flat.get_int("ssm_window_w", c.ssm_window_w));
  c.ssm_filters = static_cast<int>(flat.get_int("ssm_filters", c.ssm_filters));
  c.ssm_kernel = static_cast<int>(flat.get_int("ssm_kernel", c.ssm_kernel));
  c.dropout = flat.get_double("dropout", c.dropout);
  c.margin = flat.get_double("margin", c.margin);
  c.lambda_l2 = flat.get_double("lambda_l2", c.lambda_l2);
  c.negatives_per_pair = static_cast<int>(flat.get_int("negatives_per_pair", c.negatives_per_pair));
  c.learning_rate = flat.get_double("learning_rate", c.learning_rate);
  c.epochs = static_cast<int>(flat.get_int("epochs", c.epochs));
  c.batch_size = static_cast<int>(flat.get_int("batch_size", c.batch_size));
  c.ablation = parse_ablation(flat.get_string("ablation", std::string(to_string(c.ablation))));
  c.end_to_end = flat.get_bool("end_to_end", c.end_to_end);
  c.supervised_horizon =
      parse_horizon(flat.get_string("supervised_horizon", std::string(to_string(c.supervised_horizon))));
  c.classifier_l2 = flat.get_double("classifier_l2", c.classifier_l2);
  c.target_neg_30d = static_cast<int>(flat.get_int("target_neg_30d", c.target_neg_30d));
  c.target_neg_1y = static_cast<int>(flat.get_int("target_neg_1y", c.target_neg_1y));
  c.split_train = flat.get_double("split_train", c.split_train);
  c.split_test = flat.get_double("split_test", c.split_test);
  c.split_validation = flat.get_double("split_validation", c.split_validation);
  c.validate();
  return c;
}

FlatConfig TrainConfig::to_flat() const {
  FlatConfig f;
  f.set("seed", std::to_string(seed));
  f.set("embedding_backend", embedding_backend);
  f.set("vectors_file", vectors_file);
  f.set("d_emb", std::to_string(d_emb));
  f.set("d_frame", std::to_string(d_frame));
  f.set("pad_len_n", std::to_string(pad_len_n));
  f.set("conv_layers", std::to_string(conv_layers));
  f.set("conv_filters", join(conv_filters));
  f.set("kernel_sizes", join(kernel_sizes));
  f.set("strides", join(strides));
  f.set("f_L", std::to_string(f_L));
  f.set("d_ssm", std::to_string(d_ssm));
  f.set("ssm_window_w", std::to_string(ssm_window_w));
  f.set("ssm_filters", std::to_string(ssm_filters));
  f.set("ssm_kernel", std::to_string(ssm_kernel));
  f.set("dropout", num(dropout));
  f.set("margin", num(margin));
  f.set("lambda_l2", num(lambda_l2));
  f.set("negatives_per_pair", std::to_string(negatives_per_pair));
  f.set("learning_rate", num(learning_rate));
  f.set("epochs", std::to_string(epochs));
  f.set("batch_size", std::to_string(batch_size));
  f.set("ablation", std::string(to_string(ablation)));
  f.set("end_to_end", end_to_end ? "true" : "false");
  f.set("supervised_horizon", std::string(to_string(supervised_horizon)));
  f.set("classifier_l2", num(classifier_l2));
  f.set("target_neg_30d", std::to_string(target_neg_30d));
  f.set("target_neg_1y", std::to_string(target_neg_1y));
  f.set("split_train", num(split_train));
  f.set("split_test", num(split_test));
  f.set("split_validation", num(split_validation));
  return f;
}

std::string TrainConfig::hash() const { return fmt::format("{:016x}", fnv1a64(to_flat().to_string())); }

}  // namespace hsc
