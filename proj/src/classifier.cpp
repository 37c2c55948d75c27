#include "hsc/classifier.hpp"

#include <cmath>
#include <stdexcept>

#include "hsc/errors.hpp"

namespace hsc {

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  s.mean = x.colwise().mean().transpose();
  s.scale = Vector::Ones(x.cols());
  if (x.rows() > 1) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double sd = std::sqrt((x.col(c).array() - s.mean(c)).square().sum() / static_cast<double>(x.rows()));
      if (sd > 1e-12) s.scale(c) = sd;
    }
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.size()) throw std::invalid_argument("Standardizer: column count mismatch");
  return ((x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
}

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double LogisticRegression::objective(const Matrix& x, std::span<const int> y, const Vector& w, double b, double l2) {
  const Vector z = (x * w).array() + b;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) loss += softplus(z(i)) - y[static_cast<std::size_t>(i)] * z(i);
  return loss / static_cast<double>(x.rows()) + 0.5 * l2 * w.squaredNorm();
}

LogisticRegression LogisticRegression::fit(const Matrix& x, std::span<const int> y, double l2, int max_iter,
                                           double tol) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw std::invalid_argument("labels and rows differ in count");
  if (x.rows() == 0) throw DataError("cannot fit a classifier on zero examples");
  const Eigen::Index n = x.rows(), d = x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  // theta = [w; b], design row = [x_i, 1].
  Matrix a(n, d + 1);
  a << x, Vector::Ones(n);
  Vector yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv(i) = y[static_cast<std::size_t>(i)];
  Vector penalty = Vector::Constant(d + 1, l2);
  penalty(d) = 0.0;

  Vector theta = Vector::Zero(d + 1);
  auto obj = [&](const Vector& t) { return objective(x, y, t.head(d), t(d), l2); };
  double current = obj(theta);
  LogisticRegression out;
  for (int it = 0; it < max_iter; ++it) {
    const Vector z = a * theta;
    Vector p(n), s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p(i) = sigmoid(z(i));
      s(i) = p(i) * (1.0 - p(i));
    }
    const Vector grad = inv_n * (a.transpose() * (p - yv)) + penalty.cwiseProduct(theta);
    Matrix hess = inv_n * (a.transpose() * s.asDiagonal() * a);
    hess.diagonal() += penalty + Vector::Constant(d + 1, 1e-10);
    const Vector step = hess.ldlt().solve(grad);
    double t = 1.0;
    Vector next = theta - step;
    double value = obj(next);
    while (value > current && t > 1e-8) {
      t *= 0.5;
      next = theta - t * step;
      value = obj(next);
    }
    out.iterations = it + 1;
    const double decrease = current - value;
    if (value <= current) {
      theta = next;
      current = value;
    }
    if (grad.lpNorm<Eigen::Infinity>() < tol || std::abs(decrease) < tol * std::max(1.0, std::abs(current))) break;
  }
  out.weights = theta.head(d);
  out.bias = theta(d);
  return out;
}

Vector LogisticRegression::decision(const Matrix& x) const { return (x * weights).array() + bias; }

Vector LogisticRegression::predict_proba(const Matrix& x) const {
  Vector z = decision(x);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = sigmoid(z(i));
  return z;
}

MortalityClassifier MortalityClassifier::fit(const Matrix& reps, std::span<const int> labels, double l2) {
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  if (positives == 0 || positives == labels.size())
    throw DataError("the classifier training set contains a single class");
  MortalityClassifier c;
  c.standardizer = Standardizer::fit(reps);
  c.model = LogisticRegression::fit(c.standardizer.apply(reps), labels, l2);
  return c;
}

Vector MortalityClassifier::predict_proba(const Matrix& reps) const {
  return model.predict_proba(standardizer.apply(reps));
}

}  // namespace hsc
