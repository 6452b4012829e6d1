#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "glass/error.hpp"

namespace glass {

// Length-L real vector; all loss math runs on these in 64-bit precision.
using Embedding = std::vector<double>;

inline constexpr double kZeroNormEps = 1e-12;

inline bool all_finite(const Embedding& x) {
  for (double v : x) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline double dot(const Embedding& x, const Embedding& y) {
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) acc += x[k] * y[k];
  return acc;
}

inline double norm(const Embedding& x) { return std::sqrt(dot(x, x)); }

inline double cosine_similarity(const Embedding& x, const Embedding& y) {
  require(x.size() == y.size(), errc::dim_mismatch,
          "cosine_similarity: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  const double nx = norm(x);
  const double ny = norm(y);
  require(nx >= kZeroNormEps && ny >= kZeroNormEps, errc::zero_norm_vector,
          "cosine_similarity on a (near-)zero vector");
  return dot(x, y) / (nx * ny);
}

inline Embedding elementwise_product(const Embedding& x, const Embedding& y) {
  require(x.size() == y.size(), errc::dim_mismatch, "elementwise_product: size mismatch");
  Embedding out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] * y[k];
  return out;
}

// log sum_i exp(x_i), max-shifted. Exact for a single element.
inline double logsumexp(const std::vector<double>& xs) {
  require(!xs.empty(), errc::empty_input, "logsumexp of empty sequence");
  const double m = *std::max_element(xs.begin(), xs.end());
  if (xs.size() == 1) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

inline Embedding l2_normalize(const Embedding& x) {
  const double n = norm(x);
  require(n >= kZeroNormEps, errc::zero_norm_vector, "l2_normalize on a (near-)zero vector");
  Embedding out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] / n;
  return out;
}

inline Embedding mean_of(const std::vector<Embedding>& xs) {
  require(!xs.empty(), errc::empty_group, "mean of empty embedding set");
  Embedding out(xs[0].size(), 0.0);
  for (const Embedding& x : xs) {
    require(x.size() == out.size(), errc::dim_mismatch, "mean over mixed dims");
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += x[k];
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (double& v : out) v *= inv;
  return out;
}

inline void axpy(double a, const Embedding& x, Embedding& y) {
  for (std::size_t k = 0; k < x.size(); ++k) y[k] += a * x[k];
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Counter-based seeded generator. The stream is a pure function of
// (seed, counter), so state can be captured and restored exactly and the
// sequence is identical across platforms (integer mixing only; the normal
// sampler is a 12-term uniform sum, no libm in the hot path).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ull * ++counter_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Irwin-Hall sum of 12 uniforms, centered: mean 0, variance exactly 1.
  double next_normal() {
    double acc = 0.0;
    for (int i = 0; i < 12; ++i) acc += next_double();
    return acc - 6.0;
  }

  // Uniform in [0, n) via 128-bit multiply-shift.
  std::uint64_t next_below(std::uint64_t n) {
    require(n > 0, errc::invalid_argument, "next_below(0)");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(xs[i - 1], xs[j]);
    }
  }

  Embedding unit_vector(std::size_t dim) {
    Embedding v(dim);
    double n = 0.0;
    do {
      for (std::size_t k = 0; k < dim; ++k) v[k] = next_normal();
      n = norm(v);
    } while (n < kZeroNormEps);
    for (double& x : v) x /= n;
    return v;
  }

  // Independent sub-stream for a labeled purpose; one Rng per logical task.
  Rng derive(std::string_view label) const {
    std::uint64_t h = fnv1a64(label);
    std::uint64_t z = seed_ ^ (h + 0x9E3779B97F4A7C15ull + (seed_ << 6) + (seed_ >> 2));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return Rng(z ^ (z >> 31));
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  return Rng(master).derive(label).seed();
}

}  // namespace glass
