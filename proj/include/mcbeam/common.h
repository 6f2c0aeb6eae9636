// include/mcbeam/common.h

// Copyright 2026  mcbeam authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLENESS OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef MCBEAM_COMMON_H_
#define MCBEAM_COMMON_H_

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mcbeam {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

// Error taxonomy; the CLI maps these onto process exit codes
// (config/dimension -> 2, numeric -> 3, io -> 4).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string &msg) : std::runtime_error(msg) {}
};
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string &msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string &msg) : std::runtime_error(msg) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string &msg) : std::runtime_error(msg) {}
};

// Deterministic RNG. Normal deviates use an explicit Box-Muller transform
// rather than std::normal_distribution so that streams are reproducible
// across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  // Unbiased 64-bit state advance (splitmix64).
  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal, Box-Muller with a cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Circularly symmetric complex normal with unit variance (0.5 per part).
  cplx cnormal() {
    const double s = 0.70710678118654752440;
    return cplx(s * normal(), s * normal());
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Independent child stream, e.g. one per scene index.
  Rng derive(uint64_t index) const {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= 0x100000001b3ull;
      }
    };
    mix(state_);
    mix(index + 1);
    return Rng(h);
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// FNV-1a over raw bytes; used for config hashes and weight-file checksums.
inline uint64_t fnv1a64(const void *data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char *p = static_cast<const unsigned char *>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline double db10(double x) { return 10.0 * std::log10(x); }
inline double db20(double x) { return 20.0 * std::log10(x); }

constexpr double kPi = 3.14159265358979323846;
constexpr double kSoundSpeed = 343.0;  // m/s

}  // namespace mcbeam

#endif  // MCBEAM_COMMON_H_
