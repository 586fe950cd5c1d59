#include "ddfl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ddfl/error.hpp"

namespace ddfl::analysis {

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

DivergenceRecord weight_divergence(const nn::ParamVector& global, const nn::ParamVector& local) {
  nn::require_same_layout(global, local);
  DivergenceRecord rec;
  double total_sq = 0.0;
  for (std::size_t l = 0; l < global.layout().num_layers(); ++l) {
    const auto a = global.layer(l);
    const auto b = local.layer(l);
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      sq += d * d;
    }
    rec.per_layer.push_back(std::sqrt(sq));
    total_sq += sq;
  }
  rec.total = std::sqrt(total_sq);
  return rec;
}

nn::ParamVector bias_term(const nn::ParamVector& local, const nn::ParamVector& global) {
  nn::require_same_layout(local, global);
  nn::ParamVector delta(local.layout());
  auto out = delta.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = local[i] - global[i];
  return delta;
}

ReliabilityRecord reliability_index(std::span<const double> acc, std::size_t batch_size) {
  if (acc.empty()) throw Error(ErrorCode::kEmptyInput, "no per-batch accuracies");
  const double n = static_cast<double>(acc.size());
  // Identical entries are handled exactly: a summed mean can miss the common
  // value by an ulp and leave a spurious nonzero deviation.
  const bool constant =
      std::all_of(acc.begin(), acc.end(), [&](double a) { return a == acc.front(); });
  const double mean = constant ? acc.front() : std::accumulate(acc.begin(), acc.end(), 0.0) / n;
  if (!(mean > 0.0)) throw Error(ErrorCode::kZeroMean, "mean accuracy is zero");
  double var = 0.0;
  if (!constant) {
    for (double a : acc) var += (a - mean) * (a - mean);
  }
  var /= n;
  ReliabilityRecord rec;
  rec.batch_size = batch_size;
  rec.mean = mean;
  rec.stddev = std::sqrt(var);
  rec.zeta = (1.0 - rec.stddev / rec.mean) * 100.0;
  return rec;
}

double system_reliability(std::span<const ReliabilityRecord> records) {
  if (records.empty()) throw Error(ErrorCode::kEmptyInput, "no reliability records");
  double s = 0.0;
  for (const auto& r : records) s += r.zeta;
  return s / static_cast<double>(records.size());
}

namespace {

void check_weights(std::span<const double> weights) {
  double s = 0.0;
  for (double p : weights) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw Error(ErrorCode::kInvalidInputs, "weights must be finite and non-negative");
    }
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-9) throw Error(ErrorCode::kInvalidInputs, "weights must sum to 1");
}

}  // namespace

double estimate_phi(double global_opt_loss, std::span<const double> local_opt_losses,
                    std::span<const double> weights) {
  if (local_opt_losses.size() != weights.size()) {
    throw Error(ErrorCode::kLengthMismatch, "losses and weights differ in length");
  }
  check_weights(weights);
  double weighted = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) weighted += weights[k] * local_opt_losses[k];
  return global_opt_loss - weighted;
}

void BoundInputs::validate() const {
  const auto bad = [](const char* what) { throw Error(ErrorCode::kInvalidInputs, what); };
  if (!(smoothness > 0.0)) bad("L must be positive");
  if (!(strong_convexity > 0.0)) bad("mu must be positive");
  if (strong_convexity > smoothness) bad("mu must not exceed L");
  if (!(grad_bound >= 0.0)) bad("G must be non-negative");
  if (local_steps == 0) bad("E must be >= 1");
  if (devices == 0) bad("K must be >= 1");
  if (!(phi >= 0.0)) bad("Phi must be non-negative");
  if (!(init_distance >= 0.0)) bad("||w0 - w*|| must be non-negative");
  if (rounds == 0) bad("N must be >= 1");
  if (sigma.size() != weights.size()) bad("sigma and p differ in length");
  for (double s : sigma) {
    if (!(s >= 0.0)) bad("sigma_k must be non-negative");
  }
  check_weights(weights);
}

BoundResult theorem1_bound(const BoundInputs& in) {
  in.validate();
  BoundResult r;
  for (std::size_t k = 0; k < in.weights.size(); ++k) {
    r.terms.variance += in.weights[k] * in.weights[k] * in.sigma[k] * in.sigma[k];
  }
  const double e = static_cast<double>(in.local_steps);
  const double g2 = in.grad_bound * in.grad_bound;
  r.terms.heterogeneity = 6.0 * in.smoothness * in.phi;
  r.terms.drift = 8.0 * (e - 1.0) * (e - 1.0) * g2;
  r.terms.sampling = 4.0 / static_cast<double>(in.devices) * e * e * g2;
  r.b = r.terms.variance + r.terms.heterogeneity + r.terms.drift + r.terms.sampling;

  const double mu = in.strong_convexity;
  r.kappa = in.smoothness / mu;
  r.varrho = std::max(8.0 * r.kappa, e);
  r.bound_at_n = r.kappa / (r.varrho + static_cast<double>(in.rounds) - 1.0) *
                 (2.0 * r.b / mu + mu * r.varrho / 2.0 * in.init_distance * in.init_distance);
  return r;
}

}  // namespace ddfl::analysis
