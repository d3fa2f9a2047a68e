#include "lab/rng.hpp"

namespace lab {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

int BitSource::next_bit() {
  if (fixed_) {
    if (consumed_ >= static_cast<long>(bits_.size())) throw BitsExhausted();
    return bits_[consumed_++] ? 1 : 0;
  }
  ++consumed_;
  return rng_.bit();
}

std::uint64_t BitSource::next_bits(int width) {
  std::uint64_t u = 0;
  for (int i = 0; i < width; ++i) u = (u << 1) | static_cast<std::uint64_t>(next_bit());
  return u;
}

Bits random_bits(std::uint64_t seed, long count) {
  Rng rng(seed);
  Bits out(static_cast<std::size_t>(count));
  for (auto& b : out) b = static_cast<std::uint8_t>(rng.bit());
  return out;
}

int ceil_log2(long b) {
  int c = 0;
  while ((1L << c) < b) ++c;
  return c;
}

}  // namespace lab
