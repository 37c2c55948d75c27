// Bidirectional trilinear attention between a note's sentence embeddings and
// its frame embeddings, and salience-weighted aggregation into a note vector.
//
// E_s and E_sf are D x d_s with one sentence per row.

#pragma once

#include "hsc/autodiff.hpp"
#include "hsc/random.hpp"

namespace hsc {

struct Attention {
  Matrix sim;        // D x D
  Matrix t2s_bar;    // row softmax of sim
  Matrix s2t_bar;    // column softmax of sim
  Matrix u_t2s;      // D x d_s
  Matrix u_s2t;      // D x d_s
};

struct FusedNote {
  Matrix v;      // D x 2 d_s
  Vector alpha;  // D
  Vector c;      // 2 d_s
};

/// SIM[i, k] = W_s . [E_s[i]; E_sf[k]; E_s[i] .* E_sf[k]] with W_s 1 x 3 d_s.
ad::Var similarity_matrix(ad::Var w_s, ad::Var e_s, ad::Var e_sf);
Matrix similarity_matrix(const Matrix& w_s, const Matrix& e_s, const Matrix& e_sf);

struct AttentionVars {
  ad::Var u_t2s;
  ad::Var u_s2t;
};

/// U_t2s = rowsoftmax(SIM) E_sf; U_s2t = rowsoftmax(SIM) colsoftmax(SIM)^T E_s.
AttentionVars bidirectional_attention(ad::Var sim, ad::Var e_s, ad::Var e_sf);
Attention bidirectional_attention(const Matrix& sim, const Matrix& e_s, const Matrix& e_sf);

/// V = [E_s .* U_t2s, E_sf .* U_s2t].
ad::Var fuse(ad::Var e_s, ad::Var e_sf, ad::Var u_t2s, ad::Var u_s2t);
Matrix fuse(const Matrix& e_s, const Matrix& e_sf, const Matrix& u_t2s, const Matrix& u_s2t);

struct SalienceVars {
  ad::Var alpha;  // D x 1
  ad::Var c;      // 2 d_s x 1
};

/// alpha = V W_n + b_n (unnormalized), c = V^T alpha. W_n is 2 d_s x 1, b_n 1 x 1.
SalienceVars note_representation(ad::Var v, ad::Var w_n, ad::Var b_n);
FusedNote note_representation(const Matrix& v, const Matrix& w_n, double b_n);

/// Trainable weights of the trilinear network and the salience head.
struct CorrespondenceParams {
  ad::Parameter w_s;  // 1 x 3 d_s
  ad::Parameter w_n;  // 2 d_s x 1
  ad::Parameter b_n;  // 1 x 1

  CorrespondenceParams() = default;
  CorrespondenceParams(int d_s, Rng& rng);
};

}  // namespace hsc
