#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace fscp {

// Counter-based generator built on the splitmix64 finalizer. Independent
// streams are derived by hashing a master seed together with up to three
// stream tags (task id, episode index, trial id), so parallel generation is
// order-independent and every draw is reproducible from the tags alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed)) {}

  static Rng stream(std::uint64_t master, std::uint64_t tag0 = 0,
                    std::uint64_t tag1 = 0, std::uint64_t tag2 = 0) {
    std::uint64_t s = mix(master ^ 0x9e3779b97f4a7c15ull);
    s = mix(s ^ mix(tag0 + 0xa0761d6478bd642full));
    s = mix(s ^ mix(tag1 + 0xe7037ed1a0b428dbull));
    s = mix(s ^ mix(tag2 + 0x8ebc6af09c88c6e3ull));
    return Rng(s);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1); safe as a log() argument.
  double uniform_open() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double r = std::sqrt(-2.0 * std::log(uniform_open()));
    double a = 6.283185307179586476925287 * uniform();
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace fscp
