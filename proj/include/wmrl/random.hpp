#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace wmrl {

// Every consumer of randomness owns a stream derived from
// (master seed, tag, indices). Components can then be re-run in isolation
// (e.g. resuming training at step k) without replaying global RNG state.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t a = 0, std::uint64_t b = 0,
                          std::uint64_t c = 0);

// mt19937_64 with fixed uniform/normal transforms. std::normal_distribution
// is implementation-defined, so the Gaussian is generated here (Box-Muller)
// to keep checkpoint-resume and replay contracts exact.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : gen_(seed) {}

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();

  // uniform integer in [0, n)
  std::uint64_t integer(std::uint64_t n);

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace wmrl
