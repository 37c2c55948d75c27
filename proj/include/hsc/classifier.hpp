// L2-regularized logistic regression for the downstream mortality probe.

#pragma once

#include <span>
#include <vector>

#include "hsc/autodiff.hpp"

namespace hsc {

/// Per-column centering and scaling fitted on training rows. Constant columns
/// keep scale 1.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;
};

/// Minimizes (1/n) sum_i [log(1 + e^{z_i}) - y_i z_i] + (l2 / 2) |w|^2 with
/// z = X w + b; the bias is not penalized. Solved by damped Newton steps.
class LogisticRegression {
 public:
  static LogisticRegression fit(const Matrix& x, std::span<const int> y, double l2, int max_iter = 100,
                                double tol = 1e-10);

  Vector decision(const Matrix& x) const;
  Vector predict_proba(const Matrix& x) const;
  /// The minimized objective at (w, b) for the given data.
  static double objective(const Matrix& x, std::span<const int> y, const Vector& w, double b, double l2);

  Vector weights;
  double bias = 0.0;
  int iterations = 0;
};

/// Standardization followed by logistic regression.
class MortalityClassifier {
 public:
  /// Throws DataError when the labels are all one class.
  static MortalityClassifier fit(const Matrix& reps, std::span<const int> labels, double l2);
  Vector predict_proba(const Matrix& reps) const;

  Standardizer standardizer;
  LogisticRegression model;
};

}  // namespace hsc
