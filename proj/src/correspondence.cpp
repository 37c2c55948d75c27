#include "hsc/correspondence.hpp"

#include <stdexcept>
#include <string>

#include "hsc/sentence_encoder.hpp"

namespace hsc {

namespace {

void check_pair(Eigen::Index rows_s, Eigen::Index cols_s, Eigen::Index rows_sf, Eigen::Index cols_sf) {
  if (rows_s != rows_sf || cols_s != cols_sf)
    throw std::invalid_argument("E_s is " + std::to_string(rows_s) + "x" + std::to_string(cols_s) + " but E_sf is " +
                                std::to_string(rows_sf) + "x" + std::to_string(cols_sf));
}

void check_weight(Eigen::Index rows, Eigen::Index cols, Eigen::Index d_s) {
  if (rows != 1 || cols != 3 * d_s)
    throw std::invalid_argument("W_s must be 1 x " + std::to_string(3 * d_s));
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    out.row(r) = (x.row(r).array() - x.row(r).maxCoeff()).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

}  // namespace

ad::Var similarity_matrix(ad::Var w_s, ad::Var e_s, ad::Var e_sf) {
  check_pair(e_s.rows(), e_s.cols(), e_sf.rows(), e_sf.cols());
  const Eigen::Index d = e_s.cols();
  check_weight(w_s.rows(), w_s.cols(), d);
  ad::Var a = ad::matmul(e_s, ad::transpose(ad::slice_cols(w_s, 0, d)));   // D x 1
  ad::Var b = ad::matmul(ad::slice_cols(w_s, d, d), ad::transpose(e_sf));  // 1 x D
  ad::Var cross = ad::matmul(ad::mul_broadcast(e_s, ad::slice_cols(w_s, 2 * d, d)), ad::transpose(e_sf));
  return ad::add_broadcast(ad::add_broadcast(cross, a), b);
}

Matrix similarity_matrix(const Matrix& w_s, const Matrix& e_s, const Matrix& e_sf) {
  check_pair(e_s.rows(), e_s.cols(), e_sf.rows(), e_sf.cols());
  const Eigen::Index d = e_s.cols();
  check_weight(w_s.rows(), w_s.cols(), d);
  const Vector a = e_s * w_s.leftCols(d).transpose();
  const Vector b = e_sf * w_s.middleCols(d, d).transpose();
  const Eigen::RowVectorXd w3 = w_s.rightCols(d);
  Matrix sim = (e_s.array().rowwise() * w3.array()).matrix() * e_sf.transpose();
  sim.colwise() += a;
  sim.rowwise() += b.transpose();
  return sim;
}

AttentionVars bidirectional_attention(ad::Var sim, ad::Var e_s, ad::Var e_sf) {
  ad::Var t2s = ad::softmax_rows(sim);
  ad::Var s2t = ad::softmax_cols(sim);
  return {ad::matmul(t2s, e_sf), ad::matmul(ad::matmul(t2s, ad::transpose(s2t)), e_s)};
}

Attention bidirectional_attention(const Matrix& sim, const Matrix& e_s, const Matrix& e_sf) {
  Attention a;
  a.sim = sim;
  a.t2s_bar = softmax_rows(sim);
  a.s2t_bar = softmax_rows(sim.transpose()).transpose();
  a.u_t2s = a.t2s_bar * e_sf;
  a.u_s2t = a.t2s_bar * a.s2t_bar.transpose() * e_s;
  return a;
}

ad::Var fuse(ad::Var e_s, ad::Var e_sf, ad::Var u_t2s, ad::Var u_s2t) {
  check_pair(e_s.rows(), e_s.cols(), e_sf.rows(), e_sf.cols());
  check_pair(u_t2s.rows(), u_t2s.cols(), u_s2t.rows(), u_s2t.cols());
  check_pair(e_s.rows(), e_s.cols(), u_t2s.rows(), u_t2s.cols());
  return ad::concat_cols({ad::hadamard(e_s, u_t2s), ad::hadamard(e_sf, u_s2t)});
}

Matrix fuse(const Matrix& e_s, const Matrix& e_sf, const Matrix& u_t2s, const Matrix& u_s2t) {
  check_pair(e_s.rows(), e_s.cols(), e_sf.rows(), e_sf.cols());
  check_pair(u_t2s.rows(), u_t2s.cols(), u_s2t.rows(), u_s2t.cols());
  check_pair(e_s.rows(), e_s.cols(), u_t2s.rows(), u_t2s.cols());
  Matrix v(e_s.rows(), 2 * e_s.cols());
  v << e_s.cwiseProduct(u_t2s), e_sf.cwiseProduct(u_s2t);
  return v;
}

SalienceVars note_representation(ad::Var v, ad::Var w_n, ad::Var b_n) {
  if (w_n.rows() != v.cols() || w_n.cols() != 1) throw std::invalid_argument("W_n must be (2 d_s) x 1");
  ad::Var alpha = ad::add_broadcast(ad::matmul(v, w_n), b_n);
  return {alpha, ad::matmul(ad::transpose(v), alpha)};
}

FusedNote note_representation(const Matrix& v, const Matrix& w_n, double b_n) {
  if (w_n.rows() != v.cols() || w_n.cols() != 1) throw std::invalid_argument("W_n must be (2 d_s) x 1");
  FusedNote out;
  out.v = v;
  out.alpha = (v * w_n).array() + b_n;
  out.c = v.transpose() * out.alpha;
  return out;
}

CorrespondenceParams::CorrespondenceParams(int d_s, Rng& rng)
    : w_s("trilinear.w_s", glorot(1, 3 * d_s, 3 * d_s, 1, rng)),
      w_n("salience.w_n", glorot(2 * d_s, 1, 2 * d_s, 1, rng)),
      b_n("salience.b_n", Matrix::Constant(1, 1, 1.0)) {}

}  // namespace hsc
