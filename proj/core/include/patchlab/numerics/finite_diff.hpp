#pragma once

#include <functional>

#include "patchlab/numerics/tensor.hpp"

namespace patchlab {

using ScalarFn = std::function<double(const Tensor&)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h);

}  // namespace patchlab
