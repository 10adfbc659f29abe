#pragma once

#include "patchlab/numerics/rng.hpp"
#include "patchlab/numerics/tensor.hpp"

namespace patchlab {

struct TruncatedSvd {
  Tensor approximation;
  int achieved_rank = 0;
};

// Best rank-min(r, rank(m)) approximation of a matrix in Frobenius norm.
// r = 0 yields the zero matrix.
TruncatedSvd truncated_svd(const Tensor& m, int r);

// Numerical rank with the usual max(rows, cols) * eps * sigma_max cutoff.
int numerical_rank(const Tensor& m);

// Random orthogonal k x k matrix Q that is not the identity and fixes the
// all-ones vector, so Q mixes rows of a data matrix while keeping column
// means and the centered Gram matrix. Built as (1/k) 1 1^T + B R B^T with B an
// orthonormal basis of the complement of 1 and R Haar-distributed on O(k-1).
Tensor random_orthogonal_fixing_ones(int k, Rng& rng);

// Orthonormal (Helmert) basis of the complement of the all-ones vector, k x (k-1).
RowMatrix ones_complement_basis(int k);

}  // namespace patchlab
