// Flat `key = value` configuration files and the training configuration.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace hsc {

/// Ordered key/value pairs parsed from a TOML-style flat file. Lines are
/// `key = value`; `#` starts a comment; values may be double-quoted; lists
/// are comma separated.
class FlatConfig {
 public:
  static FlatConfig parse(std::string_view text, std::string_view origin = "<config>");
  static FlatConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.contains(key); }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  /// Keys not in `known`, for typo detection.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  std::string to_string() const;

 private:
  std::map<std::string, std::string> values_;
};

enum class Ablation { None, NoStruct, NoUnstruct };
enum class Horizon { Days30, Year1 };

Ablation parse_ablation(std::string_view s);
std::string_view to_string(Ablation a);
Horizon parse_horizon(std::string_view s);
std::string_view to_string(Horizon h);

struct TrainConfig {
  std::uint64_t seed = 13;

  // Word/sentence vectors.
  std::string embedding_backend = "hash";  // hash | table
  std::string vectors_file;
  int d_emb = 50;

  // Structured (frame) encoder.
  int d_frame = 50;
  int pad_len_n = 32;
  int conv_layers = 2;
  std::vector<int> conv_filters{64, 64};
  std::vector<int> kernel_sizes{3, 0};  // 0: span the whole remaining length
  std::vector<int> strides{1, 1};
  int f_L = 64;

  // Self-similarity encoder.
  int d_ssm = 64;
  int ssm_window_w = 1;
  int ssm_filters = 64;
  int ssm_kernel = 3;
  double dropout = 0.1;

  // Objective and optimizer.
  double margin = 1.0;
  double lambda_l2 = 1e-5;
  int negatives_per_pair = 1;
  double learning_rate = 1e-3;
  int epochs = 10;
  int batch_size = 16;
  Ablation ablation = Ablation::None;
  bool end_to_end = false;
  Horizon supervised_horizon = Horizon::Days30;

  // Downstream probe and data protocol.
  double classifier_l2 = 1e-2;
  int target_neg_30d = 0;  // 0 keeps every negative
  int target_neg_1y = 0;
  double split_train = 0.8;
  double split_test = 0.1;
  double split_validation = 0.1;

  int d_s() const { return 3 * f_L; }
  int d_sa() const { return d_s() - d_ssm; }
  /// Width of one half of a fused sentence row; fused rows and note vectors are 2h wide.
  int h() const { return d_s(); }

  void validate() const;

  static TrainConfig from_flat(const FlatConfig& flat);
  static TrainConfig load(const std::filesystem::path& path) { return from_flat(FlatConfig::load(path)); }
  FlatConfig to_flat() const;
  /// Stable hex digest of the canonical flat form.
  std::string hash() const;
};

}  // namespace hsc
