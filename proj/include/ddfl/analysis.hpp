#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ddfl/model.hpp"

namespace ddfl::analysis {

struct DivergenceRecord {
  std::size_t round = 0;
  std::size_t device_id = 0;
  std::vector<double> per_layer;
  double total = 0.0;
};

// Euclidean distance between two parameter vectors, per layer and overall.
// Throws LayoutMismatch.
DivergenceRecord weight_divergence(const nn::ParamVector& global, const nn::ParamVector& local);

// Elementwise local - global.
nn::ParamVector bias_term(const nn::ParamVector& local, const nn::ParamVector& global);

double l2_norm(std::span<const double> v);

struct ReliabilityRecord {
  std::size_t batch_size = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
  double zeta = 0.0;    // percent
};

// zeta = (1 - sigma/mu) * 100 over per-batch accuracies.
// Throws EmptyInput, ZeroMean.
ReliabilityRecord reliability_index(std::span<const double> accuracies_per_batch,
                                    std::size_t batch_size = 0);

// Mean of per-setting zeta values.
double system_reliability(std::span<const ReliabilityRecord> records);

// Phi = L* - sum_k p_k L_k*. Throws LengthMismatch, InvalidInputs when p does
// not sum to 1.
double estimate_phi(double global_opt_loss, std::span<const double> local_opt_losses,
                    std::span<const double> weights);

struct BoundInputs {
  double smoothness = 0.0;          // L
  double strong_convexity = 0.0;    // mu
  std::vector<double> sigma;        // per-device gradient-noise bound
  double grad_bound = 0.0;          // G
  std::size_t local_steps = 1;      // E
  std::size_t devices = 1;          // K
  double phi = 0.0;
  std::vector<double> weights;      // p_k, sums to 1
  double init_distance = 0.0;       // ||w0 - w*||
  std::size_t rounds = 1;           // N

  // Throws InvalidInputs.
  void validate() const;
};

struct BoundTerms {
  double variance = 0.0;       // sum p_k^2 sigma_k^2
  double heterogeneity = 0.0;  // 6 L Phi
  double drift = 0.0;          // 8 (E-1)^2 G^2
  double sampling = 0.0;       // (4/K) E^2 G^2
};

struct BoundResult {
  BoundTerms terms;
  double b = 0.0;
  double kappa = 0.0;
  double varrho = 0.0;
  double bound_at_n = 0.0;
};

// Optimality-gap bound for FedAvg with partial participation after N rounds:
//   B = sum p_k^2 s_k^2 + 6 L Phi + 8 (E-1)^2 G^2 + (4/K) E^2 G^2
//   kappa = L/mu, rho = max(8 kappa, E)
//   bound = kappa / (rho + N - 1) * (2B/mu + mu rho / 2 * ||w0 - w*||^2)
BoundResult theorem1_bound(const BoundInputs& in);

}  // namespace ddfl::analysis
