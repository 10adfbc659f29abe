#include "patchlab/numerics/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "patchlab/error.hpp"

namespace patchlab {
namespace {

std::size_t product(const Tensor::Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  require(product(shape_) == data_.size(), ErrorCode::kInvalidArgument,
          "tensor shape does not match element count");
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major) {
  return Tensor({rows, cols}, std::move(row_major));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, ErrorCode::kInvalidArgument, "ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::from(const RowMatrix& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  t.mat() = m;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  require(axis < shape_.size(), ErrorCode::kInvalidArgument, "tensor axis out of range");
  return shape_[axis];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

MatrixMap Tensor::mat() {
  require(rank() == 2, ErrorCode::kInvalidArgument, "matrix view needs a rank-2 tensor");
  return MatrixMap(data_.data(), static_cast<Eigen::Index>(shape_[0]), static_cast<Eigen::Index>(shape_[1]));
}

ConstMatrixMap Tensor::mat() const {
  require(rank() == 2, ErrorCode::kInvalidArgument, "matrix view needs a rank-2 tensor");
  return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(shape_[0]),
                        static_cast<Eigen::Index>(shape_[1]));
}

VectorMap Tensor::vec() { return VectorMap(data_.data(), static_cast<Eigen::Index>(data_.size())); }
ConstVectorMap Tensor::vec() const {
  return ConstVectorMap(data_.data(), static_cast<Eigen::Index>(data_.size()));
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape_ == b.shape_ &&
         (a.data_.empty() || std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(double)) == 0);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size(), ErrorCode::kInvalidArgument, "max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double frobenius_norm(const Tensor& t) { return t.vec().norm(); }

}  // namespace patchlab
