#include "ddfl/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ddfl/entropy.hpp"
#include "ddfl/error.hpp"
#include "ddfl/rng.hpp"

namespace ddfl::dist {

PartitionMode parse_partition_mode(std::string_view name) {
  if (name == "iid") return PartitionMode::kIid;
  if (name == "one_class") return PartitionMode::kOneClass;
  throw Error(ErrorCode::kInvalidParam, "unknown partition mode '" + std::string(name) + "'");
}

std::string_view to_string(PartitionMode mode) {
  return mode == PartitionMode::kIid ? "iid" : "one_class";
}

GlobalQueue::GlobalQueue(std::vector<std::size_t> pool, std::uint64_t seed)
    : pool_(std::move(pool)), order_(pool_), seed_(seed) {
  Rng rng(derive_seed(seed_, SeedDomain::kQueueReshuffle, 0));
  rng.shuffle(std::span<std::size_t>(order_));
}

void GlobalQueue::reshuffle() {
  ++reshuffles_;
  order_ = pool_;
  Rng rng(derive_seed(seed_, SeedDomain::kQueueReshuffle, reshuffles_));
  rng.shuffle(std::span<std::size_t>(order_));
  cursor_ = 0;
}

std::vector<std::size_t> GlobalQueue::undispensed() const {
  return {order_.begin() + static_cast<std::ptrdiff_t>(cursor_), order_.end()};
}

void GlobalQueue::reserve(std::size_t n) {
  if (n > remaining() && !pool_.empty()) reshuffle();
}

std::vector<std::size_t> GlobalQueue::take(std::size_t n) {
  std::vector<std::size_t> out;
  if (pool_.empty() || n == 0) return out;
  out.reserve(n);
  if (n <= pool_.size()) reserve(n);
  while (out.size() < n) {
    if (remaining() == 0) reshuffle();
    const std::size_t chunk = std::min(n - out.size(), remaining());
    out.insert(out.end(), order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + chunk));
    cursor_ += chunk;
  }
  return out;
}

namespace {

std::vector<std::vector<std::size_t>> rows_by_class(const data::SampleTable& table,
                                                    std::span<const std::size_t> rows) {
  std::vector<std::vector<std::size_t>> by_class(table.num_classes());
  for (auto r : rows) by_class[static_cast<std::size_t>(table.label(r))].push_back(r);
  return by_class;
}

}  // namespace

QueueSplit split_global_queue(const data::SampleTable& table, std::span<const std::size_t> rows,
                              double gamma, std::uint64_t seed) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw Error(ErrorCode::kInvalidGamma, "gamma must lie in [0, 1), got " + std::to_string(gamma));
  }
  const auto target = static_cast<std::size_t>(std::llround(gamma * static_cast<double>(rows.size())));

  auto by_class = rows_by_class(table, rows);
  Rng rng(derive_seed(seed, SeedDomain::kQueue, 0));
  for (auto& cls : by_class) rng.shuffle(std::span<std::size_t>(cls));

  std::vector<std::size_t> pool;
  pool.reserve(target);
  std::vector<std::size_t> next(by_class.size(), 0);
  while (pool.size() < target) {
    for (std::size_t c = 0; c < by_class.size() && pool.size() < target; ++c) {
      if (next[c] < by_class[c].size()) pool.push_back(by_class[c][next[c]++]);
    }
  }

  std::vector<bool> taken(table.size(), false);
  for (auto r : pool) taken[r] = true;
  QueueSplit split;
  split.residual.reserve(rows.size() - pool.size());
  for (auto r : rows) {
    if (!taken[r]) split.residual.push_back(r);
  }
  split.queue = GlobalQueue(std::move(pool), derive_seed(seed, SeedDomain::kQueue, 1));
  return split;
}

double device_entropy(std::span<const std::size_t> histogram) {
  for (auto c : histogram) {
    if (c > 0) return fed::normalized_entropy(histogram);
  }
  return 0.0;
}

std::vector<DeviceState> partition(const data::SampleTable& table,
                                   std::span<const std::size_t> residual,
                                   const PartitionPlan& plan) {
  const std::size_t k = plan.devices;
  if (k == 0) throw Error(ErrorCode::kInvalidParam, "need at least one device");
  if (residual.size() < k) {
    throw Error(ErrorCode::kTooFewSamples, std::to_string(residual.size()) +
                                               " samples for " + std::to_string(k) + " devices");
  }

  auto by_class = rows_by_class(table, residual);
  Rng rng(derive_seed(plan.seed, SeedDomain::kPartition));
  for (auto& cls : by_class) rng.shuffle(std::span<std::size_t>(cls));

  std::vector<DeviceState> devices(k);
  for (std::size_t d = 0; d < k; ++d) devices[d].id = d;

  if (plan.mode == PartitionMode::kIid) {
    // Deal the class-ordered sequence round-robin: every device sees every
    // class in proportion and sizes differ by at most one.
    std::size_t next = 0;
    for (const auto& cls : by_class) {
      for (auto r : cls) devices[next++ % k].local_data.push_back(r);
    }
  } else {
    std::vector<std::size_t> present;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      if (!by_class[c].empty()) present.push_back(c);
    }
    if (k < present.size()) {
      throw Error(ErrorCode::kInfeasibleOneClass,
                  std::to_string(k) + " devices cannot each hold one of " +
                      std::to_string(present.size()) + " classes");
    }
    // Device d takes class present[floor(d * C' / K)]: contiguous device
    // blocks per class, sizes differing by at most one device.
    std::vector<std::vector<std::size_t>> owners(present.size());
    for (std::size_t d = 0; d < k; ++d) owners[d * present.size() / k].push_back(d);
    for (std::size_t i = 0; i < present.size(); ++i) {
      const auto& cls = by_class[present[i]];
      const auto& own = owners[i];
      const std::size_t base = cls.size() / own.size();
      const std::size_t extra = cls.size() % own.size();
      std::size_t pos = 0;
      for (std::size_t j = 0; j < own.size(); ++j) {
        const std::size_t len = base + (j < extra ? 1 : 0);
        auto& dst = devices[own[j]].local_data;
        dst.insert(dst.end(), cls.begin() + static_cast<std::ptrdiff_t>(pos),
                   cls.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
      }
    }
  }

  for (auto& dev : devices) {
    dev.histogram = data::class_histogram(table, dev.local_data, table.num_classes());
    dev.entropy = device_entropy(dev.histogram);
  }
  return devices;
}

std::vector<std::vector<std::size_t>> dispense(GlobalQueue& queue, std::size_t devices,
                                               std::size_t segment_size) {
  std::vector<std::vector<std::size_t>> segments(devices);
  if (segment_size == 0 || queue.size() == 0) return segments;
  queue.reserve(devices * segment_size);
  for (auto& seg : segments) seg = queue.take(segment_size);
  return segments;
}

DeviceState accumulate(DeviceState device, std::span<const std::size_t> segment,
                       const data::SampleTable& table) {
  if (segment.empty()) return device;
  if (device.histogram.size() != table.num_classes()) {
    throw Error(ErrorCode::kDimensionMismatch, "device histogram has wrong class count");
  }
  for (auto r : segment) {
    const int y = table.label(r);
    if (y < 0 || static_cast<std::size_t>(y) >= device.histogram.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "segment label outside histogram range");
    }
    ++device.histogram[static_cast<std::size_t>(y)];
  }
  device.local_data.insert(device.local_data.end(), segment.begin(), segment.end());
  device.entropy = device_entropy(device.histogram);
  return device;
}

std::size_t default_segment_size(std::size_t pool_size, std::size_t devices, std::size_t rounds) {
  if (pool_size == 0) return 0;
  if (devices == 0 || rounds == 0) throw Error(ErrorCode::kInvalidParam, "K and N must be >= 1");
  return std::max<std::size_t>(1, pool_size / (devices * rounds));
}

}  // namespace ddfl::dist
