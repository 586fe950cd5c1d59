#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "ddfl/dataset.hpp"
#include "ddfl/error.hpp"
#include "ddfl/rng.hpp"

namespace testutil {

// True when `fn` throws a ddfl::Error carrying `code`.
template <typename Fn>
bool throws_code(Fn&& fn, ddfl::ErrorCode code) {
  try {
    fn();
  } catch (const ddfl::Error& e) {
    return e.code() == code;
  }
  return false;
}

// `per_class` rows for each class; feature j of a class-c row is drawn
// around c-dependent centres so the classes are easy to tell apart.
inline ddfl::data::SampleTable blobs(std::size_t classes, std::size_t per_class, std::size_t dim,
                                     double spread, std::uint64_t seed) {
  ddfl::data::SampleTable t(dim, classes);
  ddfl::Rng rng(seed);
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double centre = (j % classes == c) ? 0.8 : 0.2;
        x[j] = centre + spread * rng.normal();
      }
      t.add(x, static_cast<int>(c));
    }
  }
  return t;
}

// Table whose labels follow `labels`, features from a fixed pattern.
inline ddfl::data::SampleTable labelled(const std::vector<int>& labels, std::size_t classes,
                                        std::size_t dim = 2) {
  ddfl::data::SampleTable t(dim, classes);
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) x[j] = 0.1 * static_cast<double>((i + j) % 7);
    t.add(x, labels[i]);
  }
  return t;
}

inline double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ddfl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
