#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace voi {

// Raised for malformed run configuration (maps to CLI exit code 2).
// Everything else (contract violations, numerical failures) uses the
// standard exception types and maps to exit code 3.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

// Stream tags for deriving independent substreams from one master seed.
// Each (tag, index) pair maps to its own generator state, so loops over
// q-points, chains or outer oracle draws can be reordered or parallelised
// without changing results.
enum class Stream : std::uint64_t {
  kPsa = 1,
  kDesign,
  kDataGen,
  kPosteriorDraws,
  kNlregChain,
  kNlregElement,
  kOracleOuter,
  kOracleInner,
  kFitSubsample,
};

inline std::uint64_t substream(std::uint64_t master, Stream tag, std::uint64_t index = 0) {
  std::uint64_t z = detail::splitmix64(master ^ (0x51ed2701a3c5e9d7ULL * (static_cast<std::uint64_t>(tag) + 1)));
  return detail::splitmix64(z ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
}

// Seeded random stream. Normal variates use the Marsaglia polar method on
// top of mt19937_64 so sequences do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Sample quantile with linear interpolation between order statistics
// (the "type 7" convention). `sorted` must be ascending.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  if (p <= 0.0) return sorted.front();
  if (p >= 1.0) return sorted.back();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  const double w = h - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + w * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, p);
}

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x) * 0.3989422804014326779; }
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

}  // namespace voi
