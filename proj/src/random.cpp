#include "wmrl/random.hpp"

#include <cmath>

namespace wmrl {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t state = master;
  splitmix64(state);
  for (char ch : tag) {
    state ^= static_cast<std::uint64_t>(static_cast<unsigned char>(ch));
    splitmix64(state);
  }
  state ^= a;
  splitmix64(state);
  state ^= b;
  splitmix64(state);
  state ^= c;
  return splitmix64(state);
}

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t RandomStream::integer(std::uint64_t n) {
  // rejection sampling to avoid modulo bias
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = 0;
  do {
    x = gen_();
  } while (x >= limit);
  return x % n;
}

}  // namespace wmrl
