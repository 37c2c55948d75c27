// Per-sentence encoders: term gating over word vectors, the three ConvNet
// frame-component encoders, and the self-similarity (SSM) encoder.
//
// The trainable encoders work on whole notes at once: sentence i of a note is
// column i of every d x D output.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "hsc/autodiff.hpp"
#include "hsc/embeddings.hpp"
#include "hsc/random.hpp"

namespace hsc {

// ---------------------------------------------------------------------------
// Term gating.

class TermGate {
 public:
  TermGate() = default;
  /// d: frame-type embedding width.
  TermGate(int d, Rng& rng);

  ad::Parameter& weight() { return w_g_; }
  const ad::Parameter& weight() const { return w_g_; }

  /// Gate weights for the words of a note laid side by side. `type_emb` is
  /// d x T, `idf` is 1 x T and sentence s owns columns [bounds[s], bounds[s+1]).
  ad::Var weights(ad::Binder& bind, ad::Var type_emb, ad::Var idf, std::span<const Eigen::Index> bounds);
  /// One sentence: type_emb d x N, idf of length N. Throws on N = 0.
  Vector weights(const Matrix& type_emb, const Vector& idf) const;

 private:
  ad::Parameter w_g_;  // 1 x (d + 1)
};

/// Column s of the result is sum_j g_j words.col(j) over sentence s's columns.
/// `words` is d_emb x T and carries no gradient.
ad::Var segment_weighted_sum(const Matrix& words, ad::Var g, std::span<const Eigen::Index> bounds);

// ---------------------------------------------------------------------------
// ConvNet over one frame component.

struct ConvLayerShape {
  int in_channels = 0;
  int in_length = 0;
  int filters = 0;
  int kernel = 0;
  int stride = 1;
  int out_length = 0;
};

/// Resolves the valid-mode layer shapes for a d x n input. A kernel of 0 spans
/// the whole remaining length; the last layer must end at length 1. Throws
/// ConfigError with the computed lengths when the input is too short.
std::vector<ConvLayerShape> resolve_conv_shapes(int d, int n, const std::vector<int>& filters,
                                                const std::vector<int>& kernels, const std::vector<int>& strides);

class ConvStack {
 public:
  ConvStack() = default;
  ConvStack(const std::string& name, int d, int n, const std::vector<int>& filters, const std::vector<int>& kernels,
            const std::vector<int>& strides, int f_L, Rng& rng);

  const std::vector<ConvLayerShape>& shapes() const { return shapes_; }
  int output_dim() const { return static_cast<int>(fc_b_.value.rows()); }

  /// Each input is d x n; the result is f_L x inputs.size().
  ad::Var encode(ad::Binder& bind, std::span<const ad::Var> inputs);
  Vector encode(const Matrix& input) const;

  /// Layer l filters as f_l x (C * v_l): row i, column c * v_l + t multiplies input(c, p * s_l + t).
  ad::Parameter& conv_weight(std::size_t l) { return weights_.at(l); }
  /// Layer l biases as f_l x out_length: one bias per filter and output position.
  ad::Parameter& conv_bias(std::size_t l) { return biases_.at(l); }
  ad::Parameter& fc_weight() { return fc_w_; }
  ad::Parameter& fc_bias() { return fc_b_; }

  std::vector<ad::Parameter*> parameters();

 private:
  std::vector<ConvLayerShape> shapes_;
  std::vector<ad::Parameter> weights_;
  std::vector<ad::Parameter> biases_;
  ad::Parameter fc_w_;
  ad::Parameter fc_b_;
};

/// h_sc, h_tok and h_type stacked: d_s = 3 f_L rows per sentence.
class FrameEncoder {
 public:
  FrameEncoder() = default;
  FrameEncoder(int d, int n, const std::vector<int>& filters, const std::vector<int>& kernels,
               const std::vector<int>& strides, int f_L, Rng& rng);

  ConvStack& stack(FrameComponent z);
  int output_dim() const { return 3 * category_.output_dim(); }
  int pad_length() const { return pad_len_; }

  /// d_s x frames.size().
  ad::Var encode(ad::Binder& bind, FrameEmbeddingTable& tables, std::span<const FrameIds> frames);
  Vector encode(const FrameEmbeddingTable& tables, const FrameIds& frame) const;

  std::vector<ad::Parameter*> parameters();

 private:
  int pad_len_ = 0;
  ConvStack category_;
  ConvStack token_;
  ConvStack type_;
};

// ---------------------------------------------------------------------------
// Self-similarity matrix.

/// SSM[i, k] = 1 - cos(v_i, v_k) for the rows of a D x d_emb matrix. Zero
/// vectors are at distance 1 from everything, themselves included only off
/// the diagonal.
Matrix build_ssm(const Matrix& sentence_vectors);

/// Rows i-w .. i+w, shifted inward at the note edges. Notes shorter than 2w+1
/// sentences repeat their edge rows.
Matrix ssm_window(const Matrix& ssm, int i, int w);

/// Unfolds one window per sentence for a 'same'-padded convolution along the
/// sentence axis: (2w+1) * kernel rows, D columns per window.
Matrix ssm_patches(std::span<const Matrix> windows, int kernel);

class SsmEncoder {
 public:
  SsmEncoder() = default;
  SsmEncoder(int w, int filters, int kernel, int d_ssm, Rng& rng);

  int kernel() const { return kernel_; }
  int window() const { return w_; }
  int output_dim() const { return static_cast<int>(dense_b_.value.rows()); }

  /// Convolution, ReLU and max over each window's D columns, dropout (only
  /// when `dropout_rng` is given) and a linear layer: d_ssm x windows.
  ad::Var encode(ad::Binder& bind, const Matrix& patches, Eigen::Index columns_per_window, double dropout,
                 Rng* dropout_rng);
  Vector encode(const Matrix& window) const;

  ad::Parameter& conv_weight() { return conv_w_; }
  ad::Parameter& conv_bias() { return conv_b_; }
  ad::Parameter& dense_weight() { return dense_w_; }
  ad::Parameter& dense_bias() { return dense_b_; }

  std::vector<ad::Parameter*> parameters();

 private:
  int w_ = 1;
  int kernel_ = 3;
  ad::Parameter conv_w_;   // filters x (2w+1) * kernel
  ad::Parameter conv_b_;   // filters x 1
  ad::Parameter dense_w_;  // d_ssm x filters
  ad::Parameter dense_b_;  // d_ssm x 1
};

/// e_s = [e_ssm; e_sa]. Throws if the widths do not add up to d_s.
Vector sentence_embedding(const Vector& e_ssm, const Vector& e_sa, int d_s);

/// Glorot-uniform matrix.
Matrix glorot(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

}  // namespace hsc
