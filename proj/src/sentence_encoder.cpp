#include "hsc/sentence_encoder.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "hsc/errors.hpp"

namespace hsc {

Matrix glorot(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-limit, limit);
  return m;
}

// ---------------------------------------------------------------------------

TermGate::TermGate(int d, Rng& rng) {
  Matrix w(1, d + 1);
  for (Eigen::Index k = 0; k < w.cols(); ++k) w(0, k) = rng.uniform(-0.1, 0.1);
  w_g_ = ad::Parameter("gate.w_g", std::move(w));
}

ad::Var TermGate::weights(ad::Binder& bind, ad::Var type_emb, ad::Var idf, std::span<const Eigen::Index> bounds) {
  if (type_emb.cols() != idf.cols() || idf.rows() != 1)
    throw std::invalid_argument("gate inputs disagree on the word count");
  ad::Var features = ad::concat_rows({type_emb, idf});
  return ad::softmax_segments(ad::matmul(bind(w_g_), features), bounds);
}

Vector TermGate::weights(const Matrix& type_emb, const Vector& idf) const {
  if (type_emb.cols() == 0) throw std::invalid_argument("cannot gate an empty sentence");
  if (type_emb.cols() != idf.size()) throw std::invalid_argument("gate inputs disagree on the word count");
  const Eigen::Index d = type_emb.rows();
  Vector logits = (w_g_.value.leftCols(d) * type_emb).transpose();
  logits.array() += w_g_.value(0, d) * idf.array();
  Vector g = (logits.array() - logits.maxCoeff()).exp();
  return g / g.sum();
}

ad::Var segment_weighted_sum(const Matrix& words, ad::Var g, std::span<const Eigen::Index> bounds) {
  if (g.rows() != 1 || g.cols() != words.cols()) throw std::invalid_argument("segment_weighted_sum: shape mismatch");
  const Eigen::Index segments = static_cast<Eigen::Index>(bounds.size()) - 1;
  Matrix out(words.rows(), segments);
  for (Eigen::Index s = 0; s < segments; ++s) {
    const Eigen::Index b = bounds[s], n = bounds[s + 1] - bounds[s];
    out.col(s) = words.middleCols(b, n) * g.value().middleCols(b, n).transpose();
  }
  std::vector<Eigen::Index> owned(bounds.begin(), bounds.end());
  return g.tape()->record(std::move(out), {g}, [g, words, owned](ad::Tape& t, const Matrix& grad) {
    Matrix dg(1, words.cols());
    for (std::size_t s = 0; s + 1 < owned.size(); ++s) {
      const Eigen::Index b = owned[s], n = owned[s + 1] - owned[s];
      dg.middleCols(b, n) = grad.col(static_cast<Eigen::Index>(s)).transpose() * words.middleCols(b, n);
    }
    t.accumulate(g, dg);
  });
}

// ---------------------------------------------------------------------------

std::vector<ConvLayerShape> resolve_conv_shapes(int d, int n, const std::vector<int>& filters,
                                                const std::vector<int>& kernels, const std::vector<int>& strides) {
  if (filters.empty()) throw ConfigError("at least one convolution layer is required");
  if (kernels.size() != filters.size() || strides.size() != filters.size())
    throw ConfigError("conv_filters, kernel_sizes and strides must have one entry per layer");
  std::vector<ConvLayerShape> shapes;
  int channels = d;
  int length = n;
  std::string trace = "n=" + std::to_string(n);
  for (std::size_t l = 0; l < filters.size(); ++l) {
    ConvLayerShape s;
    s.in_channels = channels;
    s.in_length = length;
    s.filters = filters[l];
    s.stride = strides[l];
    s.kernel = kernels[l] == 0 ? length : kernels[l];
    if (s.filters < 1 || s.stride < 1 || s.kernel < 1)
      throw ConfigError("layer " + std::to_string(l + 1) + " needs positive filters, kernel and stride");
    if (s.kernel > length)
      throw ConfigError("layer " + std::to_string(l + 1) + " kernel " + std::to_string(s.kernel) +
                        " exceeds its input length (" + trace + ")");
    s.out_length = (length - s.kernel) / s.stride + 1;
    trace += " -> " + std::to_string(s.out_length);
    shapes.push_back(s);
    channels = s.filters;
    length = s.out_length;
  }
  if (length != 1)
    throw ConfigError("the last convolution layer must collapse the length to 1 (" + trace +
                      "); use kernel size 0 for a full-span layer");
  return shapes;
}

ConvStack::ConvStack(const std::string& name, int d, int n, const std::vector<int>& filters,
                     const std::vector<int>& kernels, const std::vector<int>& strides, int f_L, Rng& rng)
    : shapes_(resolve_conv_shapes(d, n, filters, kernels, strides)) {
  for (std::size_t l = 0; l < shapes_.size(); ++l) {
    const ConvLayerShape& s = shapes_[l];
    const Eigen::Index fan_in = static_cast<Eigen::Index>(s.in_channels) * s.kernel;
    weights_.emplace_back(name + ".conv" + std::to_string(l + 1) + ".w",
                          glorot(s.filters, fan_in, fan_in, s.filters, rng));
    biases_.emplace_back(name + ".conv" + std::to_string(l + 1) + ".b", Matrix::Zero(s.filters, s.out_length));
  }
  const int last = shapes_.back().filters;
  fc_w_ = ad::Parameter(name + ".fc.w", glorot(f_L, last, last, f_L, rng));
  fc_b_ = ad::Parameter(name + ".fc.b", Matrix::Zero(f_L, 1));
}

ad::Var ConvStack::encode(ad::Binder& bind, std::span<const ad::Var> inputs) {
  if (inputs.empty()) throw std::invalid_argument("ConvStack::encode needs at least one input");
  const auto batch = static_cast<Eigen::Index>(inputs.size());
  std::vector<ad::Var> xs(inputs.begin(), inputs.end());
  ad::Var y;
  for (std::size_t l = 0; l < shapes_.size(); ++l) {
    const ConvLayerShape& s = shapes_[l];
    std::vector<ad::Var> patches;
    patches.reserve(xs.size());
    for (const ad::Var& x : xs) {
      if (x.rows() != s.in_channels || x.cols() != s.in_length)
        throw std::invalid_argument("ConvStack input has the wrong shape");
      patches.push_back(ad::im2col(x, s.kernel, s.stride, 0));
    }
    ad::Var p = patches.size() == 1 ? patches[0] : ad::concat_cols(patches);
    ad::Var b = batch == 1 ? bind(biases_[l]) : ad::repeat_cols(bind(biases_[l]), batch);
    y = ad::relu(ad::add(ad::matmul(bind(weights_[l]), p), b));
    if (l + 1 < shapes_.size()) {
      xs.clear();
      for (Eigen::Index i = 0; i < batch; ++i) xs.push_back(ad::slice_cols(y, i * s.out_length, s.out_length));
    }
  }
  return ad::relu(ad::add_broadcast(ad::matmul(bind(fc_w_), y), bind(fc_b_)));
}

Vector ConvStack::encode(const Matrix& input) const {
  ad::Tape tape;
  ad::Binder bind(tape);
  const ad::Var x = tape.constant(input);
  return const_cast<ConvStack*>(this)->encode(bind, std::span<const ad::Var>(&x, 1)).value().col(0);
}

std::vector<ad::Parameter*> ConvStack::parameters() {
  std::vector<ad::Parameter*> out;
  for (std::size_t l = 0; l < shapes_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  out.push_back(&fc_w_);
  out.push_back(&fc_b_);
  return out;
}

// ---------------------------------------------------------------------------

FrameEncoder::FrameEncoder(int d, int n, const std::vector<int>& filters, const std::vector<int>& kernels,
                           const std::vector<int>& strides, int f_L, Rng& rng)
    : pad_len_(n),
      category_("frame.sc", d, n, filters, kernels, strides, f_L, rng),
      token_("frame.tok", d, n, filters, kernels, strides, f_L, rng),
      type_("frame.type", d, n, filters, kernels, strides, f_L, rng) {}

ConvStack& FrameEncoder::stack(FrameComponent z) {
  switch (z) {
    case FrameComponent::Category: return category_;
    case FrameComponent::Token: return token_;
    case FrameComponent::Type: return type_;
  }
  return type_;
}

ad::Var FrameEncoder::encode(ad::Binder& bind, FrameEmbeddingTable& tables, std::span<const FrameIds> frames) {
  std::vector<ad::Var> parts;
  for (FrameComponent z : kFrameComponents) {
    std::vector<ad::Var> inputs;
    inputs.reserve(frames.size());
    for (const FrameIds& ids : frames) inputs.push_back(tables.lookup(bind, z, ids.of(z)));
    parts.push_back(stack(z).encode(bind, inputs));
  }
  return ad::concat_rows(parts);
}

Vector FrameEncoder::encode(const FrameEmbeddingTable& tables, const FrameIds& frame) const {
  auto* self = const_cast<FrameEncoder*>(this);
  const int f = category_.output_dim();
  Vector out(3 * f);
  int offset = 0;
  for (FrameComponent z : kFrameComponents) {
    out.segment(offset, f) = self->stack(z).encode(tables.lookup(z, frame.of(z)));
    offset += f;
  }
  return out;
}

std::vector<ad::Parameter*> FrameEncoder::parameters() {
  std::vector<ad::Parameter*> out;
  for (FrameComponent z : kFrameComponents)
    for (ad::Parameter* p : stack(z).parameters()) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------

Matrix build_ssm(const Matrix& v) {
  const Eigen::Index n = v.rows();
  Vector norms = v.rowwise().norm();
  Matrix ssm = Matrix::Zero(n, n);
  bool zero_vector = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    zero_vector = zero_vector || norms(i) == 0.0;
    for (Eigen::Index k = i + 1; k < n; ++k) {
      double dist = 1.0;
      if (norms(i) > 0.0 && norms(k) > 0.0) dist = 1.0 - v.row(i).dot(v.row(k)) / (norms(i) * norms(k));
      ssm(i, k) = dist;
      ssm(k, i) = dist;
    }
  }
  if (zero_vector) spdlog::debug("SSM built over a zero sentence vector; its distances are set to 1");
  return ssm;
}

Matrix ssm_window(const Matrix& ssm, int i, int w) {
  const int n = static_cast<int>(ssm.rows());
  if (i < 0 || i >= n) throw std::out_of_range("ssm_window: sentence index out of range");
  const int rows = 2 * w + 1;
  Matrix out(rows, n);
  if (n >= rows) {
    const int start = std::clamp(i - w, 0, n - rows);
    out = ssm.middleRows(start, rows);
  } else {
    spdlog::debug("note with {} sentences is shorter than the SSM window {}; repeating edge rows", n, rows);
    for (int r = 0; r < rows; ++r) out.row(r) = ssm.row(std::clamp(i - w + r, 0, n - 1));
  }
  return out;
}

Matrix ssm_patches(std::span<const Matrix> windows, int kernel) {
  if (windows.empty()) return Matrix(0, 0);
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("ssm_kernel must be a positive odd number");
  const Eigen::Index rows = windows[0].rows(), cols = windows[0].cols();
  const int pad = kernel / 2;
  Matrix out = Matrix::Zero(rows * kernel, cols * static_cast<Eigen::Index>(windows.size()));
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const Matrix& x = windows[b];
    if (x.rows() != rows || x.cols() != cols) throw std::invalid_argument("ssm_patches: windows differ in shape");
    for (Eigen::Index p = 0; p < cols; ++p)
      for (Eigen::Index c = 0; c < rows; ++c)
        for (int t = 0; t < kernel; ++t) {
          const Eigen::Index src = p + t - pad;
          if (src >= 0 && src < cols) out(c * kernel + t, static_cast<Eigen::Index>(b) * cols + p) = x(c, src);
        }
  }
  return out;
}

SsmEncoder::SsmEncoder(int w, int filters, int kernel, int d_ssm, Rng& rng) : w_(w), kernel_(kernel) {
  if (w < 0) throw ConfigError("ssm_window_w must be non-negative");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("ssm_kernel must be a positive odd number");
  const Eigen::Index fan_in = static_cast<Eigen::Index>(2 * w + 1) * kernel;
  conv_w_ = ad::Parameter("ssm.conv.w", glorot(filters, fan_in, fan_in, filters, rng));
  conv_b_ = ad::Parameter("ssm.conv.b", Matrix::Zero(filters, 1));
  dense_w_ = ad::Parameter("ssm.dense.w", glorot(d_ssm, filters, filters, d_ssm, rng));
  dense_b_ = ad::Parameter("ssm.dense.b", Matrix::Zero(d_ssm, 1));
}

ad::Var SsmEncoder::encode(ad::Binder& bind, const Matrix& patches, Eigen::Index columns_per_window, double dropout,
                           Rng* dropout_rng) {
  ad::Tape& tape = bind.tape();
  ad::Var y = ad::relu(ad::add_broadcast(ad::matmul(bind(conv_w_), tape.constant(patches)), bind(conv_b_)));
  ad::Var pooled = ad::block_row_max(y, columns_per_window);
  if (dropout_rng != nullptr && dropout > 0.0) {
    Matrix mask(pooled.rows(), pooled.cols());
    for (Eigen::Index c = 0; c < mask.cols(); ++c)
      for (Eigen::Index r = 0; r < mask.rows(); ++r)
        mask(r, c) = dropout_rng->bernoulli(dropout) ? 0.0 : 1.0 / (1.0 - dropout);
    pooled = ad::hadamard(pooled, tape.constant(std::move(mask)));
  }
  return ad::add_broadcast(ad::matmul(bind(dense_w_), pooled), bind(dense_b_));
}

Vector SsmEncoder::encode(const Matrix& window) const {
  ad::Tape tape;
  ad::Binder bind(tape);
  const Matrix patches = ssm_patches(std::span<const Matrix>(&window, 1), kernel_);
  return const_cast<SsmEncoder*>(this)->encode(bind, patches, window.cols(), 0.0, nullptr).value().col(0);
}

std::vector<ad::Parameter*> SsmEncoder::parameters() { return {&conv_w_, &conv_b_, &dense_w_, &dense_b_}; }

Vector sentence_embedding(const Vector& e_ssm, const Vector& e_sa, int d_s) {
  if (e_ssm.size() + e_sa.size() != d_s)
    throw std::invalid_argument("sentence embedding parts have widths " + std::to_string(e_ssm.size()) + " + " +
                                std::to_string(e_sa.size()) + ", expected " + std::to_string(d_s));
  Vector out(d_s);
  out << e_ssm, e_sa;
  return out;
}

}  // namespace hsc
