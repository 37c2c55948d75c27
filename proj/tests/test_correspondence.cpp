#include <gtest/gtest.h>

#include <cmath>

#include "hsc/correspondence.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace hsc {
namespace {

using testing::random_matrix;

double max_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

struct Case {
  Matrix w_s, e_s, e_sf, w_n;
  double b_n;
};

Case random_case(Rng& rng, Eigen::Index D, Eigen::Index d) {
  return {random_matrix(1, 3 * d, rng), random_matrix(D, d, rng), random_matrix(D, d, rng),
          random_matrix(2 * d, 1, rng), rng.uniform(-1.0, 1.0)};
}

TEST(Correspondence, MatchesLoopOracle) {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(100 + trial);
    const Eigen::Index D = 1 + static_cast<Eigen::Index>(rng.below(4));
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(6));
    const Case k = random_case(rng, D, d);
    const testing::AttentionOracle o = testing::attention_oracle(k.w_s, k.e_s, k.e_sf, k.w_n, k.b_n);
    const Attention a = bidirectional_attention(similarity_matrix(k.w_s, k.e_s, k.e_sf), k.e_s, k.e_sf);
    EXPECT_LT(max_diff(a.sim, o.sim), 1e-12);
    EXPECT_LT(max_diff(a.t2s_bar, o.rowsm), 1e-12);
    EXPECT_LT(max_diff(a.s2t_bar, o.colsm), 1e-12);
    EXPECT_LT(max_diff(a.u_t2s, o.u_t2s), 1e-12);
    EXPECT_LT(max_diff(a.u_s2t, o.u_s2t), 1e-12);
    const FusedNote n = note_representation(fuse(k.e_s, k.e_sf, a.u_t2s, a.u_s2t), k.w_n, k.b_n);
    EXPECT_LT(max_diff(n.v, o.v), 1e-12);
    EXPECT_LT(max_diff(n.alpha, o.alpha), 1e-12);
    EXPECT_LT(max_diff(n.c, o.c), 1e-12);
  }
}

TEST(Correspondence, TapeAgreesWithDirectEvaluation) {
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(300 + trial);
    const Case k = random_case(rng, 1 + static_cast<Eigen::Index>(rng.below(4)), 1 + static_cast<Eigen::Index>(rng.below(6)));
    ad::Tape t;
    ad::Var e_s = t.constant(k.e_s), e_sf = t.constant(k.e_sf);
    ad::Var sim = similarity_matrix(t.constant(k.w_s), e_s, e_sf);
    const AttentionVars u = bidirectional_attention(sim, e_s, e_sf);
    const SalienceVars s =
        note_representation(fuse(e_s, e_sf, u.u_t2s, u.u_s2t), t.constant(k.w_n), t.constant(Matrix::Constant(1, 1, k.b_n)));
    const testing::AttentionOracle o = testing::attention_oracle(k.w_s, k.e_s, k.e_sf, k.w_n, k.b_n);
    EXPECT_LT(max_diff(sim.value(), o.sim), 1e-12);
    EXPECT_LT(max_diff(s.alpha.value(), o.alpha), 1e-12);
    EXPECT_LT(max_diff(s.c.value(), o.c), 1e-12);
  }
}

TEST(Correspondence, AttentionIsStochastic) {
  Rng rng(1);
  const Case k = random_case(rng, 4, 5);
  const Attention a = bidirectional_attention(similarity_matrix(k.w_s, k.e_s, k.e_sf) * 3.0, k.e_s, k.e_sf);
  EXPECT_LT((a.t2s_bar.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_LT((a.s2t_bar.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_GE(a.t2s_bar.minCoeff(), 0.0);
  EXPECT_GE(a.s2t_bar.minCoeff(), 0.0);
}

TEST(Correspondence, ZeroTrilinearWeightGivesUniformAttention) {
  Rng rng(2);
  const Case k = random_case(rng, 4, 3);
  const Matrix sim = similarity_matrix(Matrix::Zero(1, 9), k.e_s, k.e_sf);
  EXPECT_TRUE(sim.isZero());
  const Attention a = bidirectional_attention(sim, k.e_s, k.e_sf);
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_LT(max_diff(a.u_t2s.row(i), k.e_sf.colwise().mean()), 1e-12);
    EXPECT_LT(max_diff(a.u_s2t.row(i), k.e_s.colwise().mean()), 1e-12);
  }
}

TEST(Correspondence, SingleSentenceNote) {
  Rng rng(3);
  const Case k = random_case(rng, 1, 4);
  const Attention a = bidirectional_attention(similarity_matrix(k.w_s, k.e_s, k.e_sf), k.e_s, k.e_sf);
  EXPECT_DOUBLE_EQ(a.t2s_bar(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(a.s2t_bar(0, 0), 1.0);
  EXPECT_EQ(a.u_t2s, k.e_sf);
  EXPECT_EQ(a.u_s2t, k.e_s);
  const Matrix v = fuse(k.e_s, k.e_sf, a.u_t2s, a.u_s2t);
  EXPECT_EQ(v.leftCols(4), k.e_s.cwiseProduct(k.e_sf));
  EXPECT_EQ(v.rightCols(4), k.e_sf.cwiseProduct(k.e_s));
}

TEST(Correspondence, UnitSalienceSumsRows) {
  Rng rng(4);
  const Matrix v = random_matrix(3, 6, rng);
  const FusedNote n = note_representation(v, Matrix::Zero(6, 1), 1.0);
  EXPECT_TRUE(n.alpha.isOnes());
  EXPECT_LT(max_diff(n.c, v.colwise().sum().transpose()), 1e-15);
}

TEST(Correspondence, JointSentencePermutation) {
  Rng rng(5);
  const Case k = random_case(rng, 4, 3);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
  perm.indices() << 2, 0, 3, 1;
  const Matrix ps = perm * k.e_s, psf = perm * k.e_sf;
  const Attention a = bidirectional_attention(similarity_matrix(k.w_s, k.e_s, k.e_sf), k.e_s, k.e_sf);
  const Attention b = bidirectional_attention(similarity_matrix(k.w_s, ps, psf), ps, psf);
  EXPECT_LT(max_diff(b.sim, perm * a.sim * perm.transpose()), 1e-12);
  EXPECT_LT(max_diff(b.u_t2s, perm * a.u_t2s), 1e-12);
  EXPECT_LT(max_diff(b.u_s2t, perm * a.u_s2t), 1e-12);
  const FusedNote na = note_representation(fuse(k.e_s, k.e_sf, a.u_t2s, a.u_s2t), k.w_n, k.b_n);
  const FusedNote nb = note_representation(fuse(ps, psf, b.u_t2s, b.u_s2t), k.w_n, k.b_n);
  EXPECT_LT(max_diff(nb.alpha, perm * na.alpha), 1e-12);
  EXPECT_LT(max_diff(nb.c, na.c), 1e-12);
}

TEST(Correspondence, ShapeErrors) {
  Rng rng(6);
  EXPECT_THROW(similarity_matrix(Matrix::Zero(1, 9), random_matrix(2, 3, rng), random_matrix(3, 3, rng)),
               std::invalid_argument);
  EXPECT_THROW(similarity_matrix(Matrix::Zero(1, 8), random_matrix(2, 3, rng), random_matrix(2, 3, rng)),
               std::invalid_argument);
  EXPECT_THROW(note_representation(random_matrix(2, 6, rng), Matrix::Zero(5, 1), 1.0), std::invalid_argument);
}

TEST(Correspondence, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  const Eigen::Index D = 3, d = 4;
  CorrespondenceParams p(static_cast<int>(d), rng);
  ad::Parameter e_s("e_s", random_matrix(D, d, rng)), e_sf("e_sf", random_matrix(D, d, rng));
  const Matrix probe = random_matrix(2 * d, 1, rng);
  auto loss = [&](bool backward) {
    ad::Tape t;
    ad::Var s = t.param(e_s), f = t.param(e_sf);
    const AttentionVars u = bidirectional_attention(similarity_matrix(t.param(p.w_s), s, f), s, f);
    const SalienceVars n = note_representation(fuse(s, f, u.u_t2s, u.u_s2t), t.param(p.w_n), t.param(p.b_n));
    ad::Var out = ad::sum(ad::hadamard(n.c, t.constant(probe)));
    if (backward) t.backward(out);
    return out.scalar();
  };
  std::vector<ad::Parameter*> params{&p.w_s, &p.w_n, &p.b_n, &e_s, &e_sf};
  for (const auto& r : testing::check_gradients(params, [&] { return loss(false); }, [&] { loss(true); }))
    EXPECT_LT(r.worst_relative, 1e-6) << r.name;
}

TEST(Correspondence, InitialSalienceBiasIsOne) {
  Rng rng(8);
  const CorrespondenceParams p(5, rng);
  EXPECT_EQ(p.w_s.value.cols(), 15);
  EXPECT_EQ(p.w_n.value.rows(), 10);
  EXPECT_EQ(p.b_n.value(0, 0), 1.0);
}

}  // namespace
}  // namespace hsc
