#pragma once

#include <cstddef>
#include <span>

namespace ddfl::fed {

// Shannon entropy of a class histogram in bits, divided by log2(C) so a
// uniform histogram scores exactly 1 and a single-class one exactly 0.
// 0·log 0 is taken as 0. Throws EmptyHistogram when the counts sum to 0.
double normalized_entropy(std::span<const std::size_t> counts);

}  // namespace ddfl::fed
