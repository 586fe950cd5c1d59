#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "ddfl/dataset.hpp"
#include "ddfl/distribution.hpp"
#include "ddfl/entropy.hpp"
#include "ddfl/model.hpp"

namespace ddfl::fed {

struct EntropyReport {
  std::size_t device_id = 0;
  double entropy = 0.0;
  std::size_t sample_count = 0;
};

enum class AggregatorKind { kFedAvgCount, kDdflEntropy };

AggregatorKind parse_aggregator(std::string_view name);
std::string_view to_string(AggregatorKind kind);

struct AggregationPolicy {
  AggregatorKind kind = AggregatorKind::kDdflEntropy;
  double lambda = 0.9;
};

// m = max(1, floor(lambda * K)) ids with the highest entropy, ties to the
// lower id, returned in ascending id order.
std::vector<std::size_t> select_devices(std::span<const EntropyReport> reports, double lambda);

// Number of devices select_devices keeps for K reports.
std::size_t selection_size(std::size_t k, double lambda);

// sum_k (w_k / sum w) * model_k. When all weights are equal the coefficient
// is exactly 1/n, so uniform weighting from any route gives identical bits.
nn::ParamVector aggregate_fedavg(std::span<const nn::ParamVector> models,
                                 std::span<const double> weights);

struct DdflAggregate {
  nn::ParamVector model;
  std::vector<std::size_t> selected_ids;
  std::vector<double> weights;  // normalized, aligned with selected_ids
  bool uniform_fallback = false;
};

// Selects by entropy, then averages the selected models weighted by entropy
// renormalized over the selection. If every selected entropy is 0 the
// selection is averaged uniformly and `uniform_fallback` is set.
// models[i] belongs to reports[i]; the result does not depend on list order.
DdflAggregate aggregate_ddfl(std::span<const nn::ParamVector> models,
                             std::span<const EntropyReport> reports, double lambda);

// Runs `fn(i)` for i in [0, n) on up to `workers` threads. Results must be
// written to per-index slots; nothing here orders side effects.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

struct FederationState {
  std::vector<dist::DeviceState> devices;
  dist::GlobalQueue queue;
  nn::ParamVector global_model;
  std::size_t round = 0;  // rounds completed so far
};

struct RoundConfig {
  AggregationPolicy policy;
  double learning_rate = 0.01;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 32;
  nn::Activation activation = nn::Activation::kRelu;
  // Rows each device receives from the queue per round; 0 disables dispensing.
  std::size_t segment_size = 0;
  // Round index (0-based) from which dispensing starts.
  std::size_t dispense_from_round = 1;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool record_timing = true;
};

struct DeviceRoundInfo {
  std::size_t id = 0;
  double entropy = 0.0;
  std::size_t sample_count = 0;
  double local_accuracy = 0.0;
};

struct RoundReport {
  std::size_t round = 0;  // 1-based
  std::vector<std::size_t> selected_ids;
  nn::ParamVector global_model;
  std::vector<DeviceRoundInfo> per_device;
  std::vector<std::vector<std::size_t>> segments;  // per device, this round
  std::chrono::nanoseconds agg_time{0};
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  bool uniform_fallback = false;
};

// Training seed for (device, round), independent of scheduling.
std::uint64_t device_train_seed(std::uint64_t master, std::size_t round, std::size_t device);

// One communication round: dispense, accumulate, broadcast, local training,
// entropy reports, aggregation, test evaluation. After the call each device's
// `model` holds its locally trained parameters and the state's global model
// is the aggregate.
RoundReport run_round(FederationState& state, const RoundConfig& cfg,
                      const data::SampleTable& train, const data::SampleTable& test);

}  // namespace ddfl::fed
