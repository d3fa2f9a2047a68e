#ifndef LAB_RNG_HPP
#define LAB_RNG_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace lab {

using Bits = std::vector<std::uint8_t>;

std::uint64_t splitmix64(std::uint64_t x);
// Child seed for an independent stream; used to give every trial/round its own seed.
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}
  std::uint64_t next() { return engine_(); }
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  std::uint64_t below(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_); }
  int bit() { return static_cast<int>(engine_() >> 63); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

class BitsExhausted : public std::runtime_error {
 public:
  BitsExhausted() : std::runtime_error("random bit string exhausted") {}
};

// Stream of random bits; either a seeded generator or a fixed string R.
class BitSource {
 public:
  explicit BitSource(std::uint64_t seed) : rng_(seed), fixed_(false) {}
  explicit BitSource(Bits fixed) : rng_(0), fixed_(true), bits_(std::move(fixed)) {}

  int next_bit();
  // Integer in [0, 2^width) from `width` bits, most significant first.
  std::uint64_t next_bits(int width);
  long consumed() const { return consumed_; }
  bool is_fixed() const { return fixed_; }
  long remaining() const { return fixed_ ? static_cast<long>(bits_.size()) - consumed_ : -1; }

 private:
  Rng rng_;
  bool fixed_;
  Bits bits_;
  long consumed_ = 0;
};

Bits random_bits(std::uint64_t seed, long count);

// Smallest c with 2^c >= b.
int ceil_log2(long b);

}  // namespace lab

#endif
