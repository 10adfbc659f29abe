#include "patchlab/numerics/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "patchlab/error.hpp"

namespace patchlab {

int numerical_rank(const Tensor& m) {
  require(m.rank() == 2, ErrorCode::kInvalidArgument, "numerical_rank needs a matrix");
  if (m.empty()) return 0;
  Eigen::JacobiSVD<RowMatrix> svd(m.mat());
  const auto& sigma = svd.singularValues();
  if (sigma.size() == 0 || sigma(0) == 0.0) return 0;
  const double tol = static_cast<double>(std::max(m.dim(0), m.dim(1))) *
                     std::numeric_limits<double>::epsilon() * sigma(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) > tol) ++rank;
  }
  return rank;
}

TruncatedSvd truncated_svd(const Tensor& m, int r) {
  require(m.rank() == 2, ErrorCode::kInvalidArgument, "truncated_svd needs a matrix");
  require(r >= 0, ErrorCode::kInvalidArgument, "truncated_svd: rank must be non-negative");
  require(m.all_finite(), ErrorCode::kNumericDomain, "truncated_svd: non-finite input");

  TruncatedSvd out{Tensor(m.shape()), 0};
  if (r == 0 || m.empty()) return out;

  Eigen::JacobiSVD<RowMatrix> svd(m.mat(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sigma = svd.singularValues();
  const double tol = sigma.size() == 0
                         ? 0.0
                         : static_cast<double>(std::max(m.dim(0), m.dim(1))) *
                               std::numeric_limits<double>::epsilon() * sigma(0);
  int keep = 0;
  while (keep < r && keep < sigma.size() && sigma(keep) > tol) ++keep;
  out.achieved_rank = keep;
  if (keep == 0) return out;

  out.approximation.mat() = svd.matrixU().leftCols(keep) * sigma.head(keep).asDiagonal() *
                            svd.matrixV().leftCols(keep).transpose();
  return out;
}

RowMatrix ones_complement_basis(int k) {
  RowMatrix basis = RowMatrix::Zero(k, k - 1);
  for (int j = 1; j < k; ++j) {
    const double norm = std::sqrt(static_cast<double>(j) * (j + 1));
    for (int i = 0; i < j; ++i) basis(i, j - 1) = 1.0 / norm;
    basis(j, j - 1) = -static_cast<double>(j) / norm;
  }
  return basis;
}

Tensor random_orthogonal_fixing_ones(int k, Rng& rng) {
  require(k >= 2, ErrorCode::kInvalidArgument,
          "random_orthogonal_fixing_ones: k must be at least 2");
  if (k == 2) {
    // The only non-identity choice; built exactly rather than through rounding.
    RowMatrix swap{{0.0, 1.0}, {1.0, 0.0}};
    return Tensor::from(swap);
  }
  const RowMatrix basis = ones_complement_basis(k);
  const RowMatrix mean_part = RowMatrix::Constant(k, k, 1.0 / k);
  const int m = k - 1;

  for (;;) {
    RowMatrix gauss(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) gauss(i, j) = rng.normal();
    }
    Eigen::HouseholderQR<RowMatrix> qr(gauss);
    RowMatrix rot = qr.householderQ();
    const RowMatrix upper = qr.matrixQR().triangularView<Eigen::Upper>();
    // Sign fix on R's diagonal makes the draw Haar-distributed.
    for (int j = 0; j < m; ++j) {
      if (upper(j, j) < 0.0) rot.col(j) *= -1.0;
    }
    RowMatrix q = mean_part + basis * rot * basis.transpose();
    const double displacement = (q - RowMatrix::Identity(k, k)).cwiseAbs().maxCoeff();
    if (displacement > 1e-6) return Tensor::from(q);
  }
}

}  // namespace patchlab
