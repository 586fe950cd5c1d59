#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ddfl/dataset.hpp"
#include "ddfl/model.hpp"

namespace ddfl::dist {

enum class PartitionMode { kIid, kOneClass };

PartitionMode parse_partition_mode(std::string_view name);
std::string_view to_string(PartitionMode mode);

struct PartitionPlan {
  PartitionMode mode = PartitionMode::kIid;
  std::size_t devices = 1;
  double gamma = 0.0;
  std::uint64_t seed = 0;
};

// Server-held pool of training rows, handed out in a seeded permutation order.
// When a request cannot be served from what is left, the whole pool is
// reshuffled with a fresh derived seed and dispensing restarts from the top.
class GlobalQueue {
 public:
  GlobalQueue() = default;
  GlobalQueue(std::vector<std::size_t> pool, std::uint64_t seed);

  std::span<const std::size_t> pool() const { return pool_; }
  std::span<const std::size_t> order() const { return order_; }
  std::size_t cursor() const { return cursor_; }
  std::size_t remaining() const { return order_.size() - cursor_; }
  std::size_t size() const { return pool_.size(); }
  std::size_t reshuffles() const { return reshuffles_; }

  // Dataset row ids not yet handed out in the current permutation.
  std::vector<std::size_t> undispensed() const;

  // Next `n` dataset rows. Reshuffles first if fewer than `n` remain.
  std::vector<std::size_t> take(std::size_t n);

  // Reshuffles if fewer than `n` remain. Used so a round's segments come from
  // one permutation and are therefore disjoint.
  void reserve(std::size_t n);

 private:
  void reshuffle();

  std::vector<std::size_t> pool_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t seed_ = 0;
  std::size_t reshuffles_ = 0;
};

struct DeviceState {
  std::size_t id = 0;
  std::vector<std::size_t> local_data;
  std::vector<std::size_t> histogram;
  double entropy = 0.0;
  nn::ParamVector model;
};

struct QueueSplit {
  GlobalQueue queue;
  std::vector<std::size_t> residual;
};

// Holds back round(gamma * |rows|) rows as the server queue, drawn
// round-robin across classes so the pool is as class-uniform as the counts
// allow. Throws InvalidGamma unless 0 <= gamma < 1.
QueueSplit split_global_queue(const data::SampleTable& table, std::span<const std::size_t> rows,
                              double gamma, std::uint64_t seed);

// Splits `residual` across plan.devices devices.
//   iid:       class-stratified deal, sizes within +-1.
//   one_class: device k holds only class floor(k*C'/K) where C' is the number
//              of classes present; each class is split evenly over its devices.
// Throws TooFewSamples when |residual| < K and InfeasibleOneClass when K < C'.
std::vector<DeviceState> partition(const data::SampleTable& table,
                                   std::span<const std::size_t> residual,
                                   const PartitionPlan& plan);

// K disjoint segments of `segment_size` rows each, taken in queue order.
// An empty pool yields empty segments.
std::vector<std::vector<std::size_t>> dispense(GlobalQueue& queue, std::size_t devices,
                                               std::size_t segment_size);

// Appends `segment` to the device and recomputes histogram and entropy.
DeviceState accumulate(DeviceState device, std::span<const std::size_t> segment,
                       const data::SampleTable& table);

// Entropy of a histogram, 0 for an empty device.
double device_entropy(std::span<const std::size_t> histogram);

// floor(|pool| / (K * N)), at least 1 when the pool is non-empty.
std::size_t default_segment_size(std::size_t pool_size, std::size_t devices, std::size_t rounds);

}  // namespace ddfl::dist
