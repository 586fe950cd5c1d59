#include "ddfl/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>

#include "ddfl/error.hpp"
#include "ddfl/rng.hpp"

namespace ddfl::fed {

AggregatorKind parse_aggregator(std::string_view name) {
  if (name == "ddfl" || name == "ddfl_entropy") return AggregatorKind::kDdflEntropy;
  if (name == "fedavg" || name == "fedavg_count") return AggregatorKind::kFedAvgCount;
  throw Error(ErrorCode::kInvalidParam, "unknown aggregator '" + std::string(name) + "'");
}

std::string_view to_string(AggregatorKind kind) {
  return kind == AggregatorKind::kDdflEntropy ? "ddfl" : "fedavg";
}

std::size_t selection_size(std::size_t k, double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::kInvalidParam, "lambda must lie in (0, 1]");
  }
  // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
  const auto m = static_cast<std::size_t>(std::floor(lambda * static_cast<double>(k) + 1e-9));
  return std::clamp<std::size_t>(m, 1, k);
}

std::vector<std::size_t> select_devices(std::span<const EntropyReport> reports, double lambda) {
  if (reports.empty()) throw Error(ErrorCode::kNoReports, "no entropy reports");
  const std::size_t m = selection_size(reports.size(), lambda);
  std::vector<EntropyReport> ranked(reports.begin(), reports.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.entropy != b.entropy) return a.entropy > b.entropy;
    return a.device_id < b.device_id;
  });
  std::vector<std::size_t> ids;
  ids.reserve(m);
  for (std::size_t i = 0; i < m; ++i) ids.push_back(ranked[i].device_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

nn::ParamVector aggregate_fedavg(std::span<const nn::ParamVector> models,
                                 std::span<const double> weights) {
  if (models.empty()) throw Error(ErrorCode::kNoReports, "no models to aggregate");
  if (models.size() != weights.size()) {
    throw Error(ErrorCode::kLengthMismatch, "models and weights differ in length");
  }
  for (const auto& m : models) nn::require_same_layout(models.front(), m);

  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::kInvalidParam, "weights must be finite and non-negative");
    }
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::kZeroTotalWeight, "weights sum to zero");

  const std::size_t n = models.size();
  std::vector<double> coeff(n);
  const bool equal = std::all_of(weights.begin(), weights.end(),
                                 [&](double w) { return w == weights.front(); });
  for (std::size_t k = 0; k < n; ++k) {
    coeff[k] = equal ? 1.0 / static_cast<double>(n) : weights[k] / total;
  }

  nn::ParamVector out(models.front().layout());
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    double acc = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t k = 0; k < n; ++k) {
      if (coeff[k] == 0.0) continue;
      const double v = models[k][i];
      acc += coeff[k] * v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    // Keep the result inside the convex hull despite rounding.
    dst[i] = std::clamp(acc, lo, hi);
  }
  return out;
}

DdflAggregate aggregate_ddfl(std::span<const nn::ParamVector> models,
                             std::span<const EntropyReport> reports, double lambda) {
  if (reports.empty()) throw Error(ErrorCode::kNoReports, "no entropy reports");
  if (models.size() != reports.size()) {
    throw Error(ErrorCode::kLengthMismatch, "models and reports differ in length");
  }
  for (const auto& m : models) nn::require_same_layout(models.front(), m);

  DdflAggregate result;
  result.selected_ids = select_devices(reports, lambda);

  std::vector<const nn::ParamVector*> chosen;
  std::vector<double> entropies;
  for (auto id : result.selected_ids) {
    const auto it = std::find_if(reports.begin(), reports.end(),
                                 [id](const auto& r) { return r.device_id == id; });
    const auto pos = static_cast<std::size_t>(it - reports.begin());
    chosen.push_back(&models[pos]);
    entropies.push_back(it->entropy);
  }

  const double total = std::accumulate(entropies.begin(), entropies.end(), 0.0);
  if (!(total > 0.0)) {
    result.uniform_fallback = true;
    std::fill(entropies.begin(), entropies.end(), 1.0);
  }

  std::vector<nn::ParamVector> selected;
  selected.reserve(chosen.size());
  for (const auto* m : chosen) selected.push_back(*m);
  result.model = aggregate_fedavg(selected, entropies);

  const double sum = std::accumulate(entropies.begin(), entropies.end(), 0.0);
  const bool equal = std::all_of(entropies.begin(), entropies.end(),
                                 [&](double h) { return h == entropies.front(); });
  for (double h : entropies) {
    result.weights.push_back(equal ? 1.0 / static_cast<double>(entropies.size()) : h / sum);
  }
  return result;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::uint64_t device_train_seed(std::uint64_t master, std::size_t round, std::size_t device) {
  return derive_seed(master, SeedDomain::kTrain, round, device);
}

RoundReport run_round(FederationState& state, const RoundConfig& cfg,
                      const data::SampleTable& train, const data::SampleTable& test) {
  const std::size_t k = state.devices.size();
  if (k == 0) throw Error(ErrorCode::kNoReports, "federation has no devices");
  for (std::size_t i = 0; i < k; ++i) {
    if (state.devices[i].id != i) {
      throw Error(ErrorCode::kInvalidParam, "devices must be stored in id order");
    }
  }

  RoundReport report;
  report.round = state.round + 1;

  if (cfg.segment_size > 0 && state.round >= cfg.dispense_from_round) {
    report.segments = dist::dispense(state.queue, k, cfg.segment_size);
    for (std::size_t i = 0; i < k; ++i) {
      state.devices[i] = dist::accumulate(std::move(state.devices[i]), report.segments[i], train);
    }
  } else {
    report.segments.assign(k, {});
  }

  // Broadcast to every device, selected last round or not.
  const nn::ParamVector global = state.global_model;
  std::vector<nn::ParamVector> locals(k);
  report.per_device.resize(k);
  parallel_for(k, cfg.workers, [&](std::size_t i) {
    const auto& dev = state.devices[i];
    auto& info = report.per_device[i];
    info.id = dev.id;
    info.entropy = dev.entropy;
    info.sample_count = dev.local_data.size();
    if (dev.local_data.empty()) {
      locals[i] = global;
      return;
    }
    nn::TrainConfig tc;
    tc.learning_rate = cfg.learning_rate;
    tc.local_epochs = cfg.local_epochs;
    tc.batch_size = cfg.batch_size;
    tc.seed = device_train_seed(cfg.seed, state.round, dev.id);
    const data::SampleView view{train, dev.local_data};
    locals[i] = nn::local_train(global, view, tc, cfg.activation);
    info.local_accuracy = nn::evaluate(locals[i], view, cfg.activation).accuracy;
  });

  std::vector<EntropyReport> reports(k);
  for (std::size_t i = 0; i < k; ++i) {
    reports[i] = {state.devices[i].id, state.devices[i].entropy,
                  state.devices[i].local_data.size()};
  }

  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.policy.kind == AggregatorKind::kFedAvgCount) {
    std::vector<double> counts(k);
    for (std::size_t i = 0; i < k; ++i) counts[i] = static_cast<double>(reports[i].sample_count);
    state.global_model = aggregate_fedavg(locals, counts);
    report.selected_ids.resize(k);
    std::iota(report.selected_ids.begin(), report.selected_ids.end(), std::size_t{0});
  } else {
    auto agg = aggregate_ddfl(locals, reports, cfg.policy.lambda);
    state.global_model = std::move(agg.model);
    report.selected_ids = std::move(agg.selected_ids);
    report.uniform_fallback = agg.uniform_fallback;
  }
  if (cfg.record_timing) {
    report.agg_time = std::chrono::duration_cast<std::chrono::nanoseconds>(
        std::chrono::steady_clock::now() - t0);
  }

  for (std::size_t i = 0; i < k; ++i) state.devices[i].model = std::move(locals[i]);

  const auto test_rows = test.all_indices();
  const auto m = nn::evaluate(state.global_model, {test, test_rows}, cfg.activation);
  report.test_accuracy = m.accuracy;
  report.test_loss = m.mean_loss;
  report.global_model = state.global_model;
  ++state.round;
  return report;
}

}  // namespace ddfl::fed
