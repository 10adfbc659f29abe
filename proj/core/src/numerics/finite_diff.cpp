#include "patchlab/numerics/finite_diff.hpp"

#include <cmath>

#include "patchlab/error.hpp"

namespace patchlab {

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h) {
  require(h > 0.0, ErrorCode::kInvalidArgument, "finite_diff_grad: step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    require(std::isfinite(up) && std::isfinite(down), ErrorCode::kNumericDomain,
            "finite_diff_grad: objective returned a non-finite value");
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace patchlab
