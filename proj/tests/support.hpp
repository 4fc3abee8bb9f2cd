#pragma once

// Small fixtures shared by the unit tests.

#include <cstdint>
#include <string>
#include <vector>

#include "stealth/data.hpp"
#include "stealth/random.hpp"

namespace stealth::fixtures {

// n rows of f uniform features in [0,1], no labels.
inline Dataset uniform_rows(std::size_t n, std::size_t f, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n * f);
  for (auto& x : v) x = uniform01(rng);
  std::vector<std::string> names;
  for (std::size_t j = 0; j < f; ++j) names.push_back("f" + std::to_string(j));
  return Dataset(names, std::move(v));
}

// Column 0 is a protected flag "g"; column 1 decides the label.
inline Dataset grouped_rows(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v;
  std::vector<int> y;
  GroupTags g{"g", 0, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const bool priv = uniform01(rng) < 0.5;
    const double a = uniform01(rng), b = uniform01(rng);
    v.insert(v.end(), {priv ? 1.0 : 0.0, a, b});
    y.push_back((a > 0.5) != (uniform01(rng) < 0.1) ? 1 : 0);
    g.privileged.push_back(priv ? 1 : 0);
  }
  return Dataset({"g", "a", "b"}, std::move(v), std::move(y), {g});
}

}  // namespace stealth::fixtures
