#pragma once

#include <bit>
#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Core>

namespace ovd::rng {

constexpr uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Order-sensitive fold of 64-bit words into a stream seed.
constexpr uint64_t mix(uint64_t h, uint64_t v) {
  return splitmix64(h ^ (v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2)));
}

template <class... Rest>
constexpr uint64_t mix(uint64_t h, uint64_t v, Rest... rest) {
  return mix(mix(h, v), rest...);
}

constexpr uint64_t tag(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t bits(double d) { return std::bit_cast<uint64_t>(d); }

inline std::mt19937_64 engine(uint64_t seed) { return std::mt19937_64{seed}; }

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(g);
}

inline int uniform_int(std::mt19937_64& g, int lo, int hi) {
  std::uniform_int_distribution<int> d(lo, hi);
  return d(g);
}

inline double gauss(std::mt19937_64& g) {
  std::normal_distribution<double> d;
  return d(g);
}

inline Eigen::VectorXd gaussian_vector(std::mt19937_64& g, Eigen::Index n) {
  std::normal_distribution<double> d;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = d(g);
  return v;
}

// Row-major fill so the draw order is shape-stable.
inline Eigen::MatrixXd gaussian_matrix(std::mt19937_64& g, Eigen::Index rows,
                                       Eigen::Index cols) {
  std::normal_distribution<double> d;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = d(g);
  return m;
}

// Uniform(-a, a) with a = 1/sqrt(fan_in), the usual linear-layer init.
inline Eigen::MatrixXd fanin_uniform_matrix(std::mt19937_64& g,
                                            Eigen::Index rows,
                                            Eigen::Index cols,
                                            Eigen::Index fan_in) {
  const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> d(-a, a);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = d(g);
  return m;
}

}  // namespace ovd::rng
