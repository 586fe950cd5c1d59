#include "ddfl/entropy.hpp"

#include <algorithm>
#include <cmath>

#include "ddfl/error.hpp"

namespace ddfl::fed {

double normalized_entropy(std::span<const std::size_t> counts) {
  std::size_t total = 0;
  std::size_t nonzero = 0;
  for (auto c : counts) {
    total += c;
    if (c > 0) ++nonzero;
  }
  if (total == 0) throw Error(ErrorCode::kEmptyHistogram, "histogram has no samples");
  if (nonzero == 1 || counts.size() < 2) return 0.0;

  const auto first = *std::find_if(counts.begin(), counts.end(), [](auto c) { return c > 0; });
  const bool uniform = nonzero == counts.size() &&
                       std::all_of(counts.begin(), counts.end(),
                                   [first](auto c) { return c == first; });
  if (uniform) return 1.0;

  const double n = static_cast<double>(total);
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  h /= std::log2(static_cast<double>(counts.size()));
  // Rounding must not push a non-uniform, multi-class histogram onto either
  // endpoint: 0 and 1 are reserved for the exact cases above.
  return std::clamp(h, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
}

}  // namespace ddfl::fed
