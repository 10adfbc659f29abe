#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace patchlab {

// Seeded random stream. A stream is identified by (seed, stream id); the
// same pair always yields the same draws. Streams are values: copy or split
// them, never share one mutably across work items.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  std::uint64_t next_u64();
  // Uniform on [0, 1).
  double uniform();
  // Uniform integer in [0, n); n must be positive.
  std::size_t uniform_index(std::size_t n);
  int uniform_int(int lo, int hi_inclusive);
  double normal();

  // Child stream `index` of this stream; distinct indices give distinct ids.
  Rng child(std::uint64_t index) const;
  std::vector<Rng> split(std::size_t k) const;

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[uniform_index(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace patchlab
