#include "patchlab/numerics/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "patchlab/error.hpp"

namespace patchlab {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(splitmix64(seed ^ splitmix64(stream))) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t Rng::uniform_index(std::size_t n) {
  require(n > 0, ErrorCode::kInvalidArgument, "uniform_index needs n > 0");
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<std::size_t>(x % bound);
}

int Rng::uniform_int(int lo, int hi_inclusive) {
  require(hi_inclusive >= lo, ErrorCode::kInvalidArgument, "uniform_int: empty range");
  return lo + static_cast<int>(uniform_index(static_cast<std::size_t>(hi_inclusive - lo) + 1));
}

double Rng::normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  // Box-Muller; 1 - uniform() lies in (0, 1] so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_normal_ = true;
  return radius * std::cos(angle);
}

Rng Rng::child(std::uint64_t index) const {
  // splitmix64 is a bijection and kGolden is odd, so distinct indices map to
  // distinct stream ids.
  return Rng(seed_, splitmix64(stream_ ^ (kGolden * (index + 1))));
}

std::vector<Rng> Rng::split(std::size_t k) const {
  std::vector<Rng> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(child(i));
  return out;
}

}  // namespace patchlab
