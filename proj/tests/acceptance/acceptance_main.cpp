// Acceptance gate. One PASS / FAIL / SKIP line per criterion; exit status is
// non-zero when anything fails.
//
//   ddfl_acceptance [--only N] [--work DIR]
//
// The MNIST check runs only when DDFL_MNIST_DIR points at the four IDX files.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ddfl/analysis.hpp"
#include "ddfl/entropy.hpp"
#include "ddfl/federation.hpp"
#include "ddfl/harness.hpp"
#include "ddfl/model.hpp"
#include "ddfl/rng.hpp"

namespace fs = std::filesystem;
using namespace ddfl;

namespace {

// Tolerances and thresholds, fixed up front.
constexpr double kEntropyOracleTol = 1e-12;
constexpr double kGradRelTol = 1e-4;
constexpr double kBiasNormTol = 1e-12;
constexpr double kReliabilityTol = 1e-9;
constexpr double kBoundTol = 1e-12;
constexpr double kMinBoostPoints = 3.0;
constexpr double kMinEntropyRise = 0.2;
constexpr int kRandomCases = 1000;

enum class Verdict { kPass, kFail, kSkip };

struct Outcome {
  Verdict verdict = Verdict::kPass;
  std::string detail;
};

struct Check {
  Verdict verdict = Verdict::kPass;
  std::ostringstream why;

  void require(bool ok, const std::string& what) {
    if (!ok && verdict == Verdict::kPass) {
      verdict = Verdict::kFail;
      why << what;
    }
  }
  Outcome done(const std::string& summary) {
    return {verdict, verdict == Verdict::kPass ? summary : why.str()};
  }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

fs::path g_work;

// ---------------------------------------------------------------------------

double entropy_oracle(const std::vector<std::size_t>& h) {
  double total = 0.0;
  for (auto c : h) total += static_cast<double>(c);
  double s = 0.0;
  for (auto c : h) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    s += p * std::log2(p);
  }
  return -s / std::log2(static_cast<double>(h.size()));
}

Outcome entropy_correctness() {
  Check ck;
  Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < kRandomCases; ++t) {
    const std::size_t c = 2 + rng.below(30);
    std::vector<std::size_t> h(c, 0);
    const int shape = t % 4;
    if (shape == 0) {
      std::fill(h.begin(), h.end(), 1 + rng.below(50));  // uniform
    } else if (shape == 1) {
      h[rng.below(c)] = 1 + rng.below(500);  // single class
    } else {
      for (auto& v : h) v = rng.below(shape == 2 ? 5 : 1000);
      if (std::accumulate(h.begin(), h.end(), std::size_t{0}) == 0) h[0] = 3;
    }
    const double e = fed::normalized_entropy(h);
    const bool uniform = std::all_of(h.begin(), h.end(), [&](auto v) { return v == h[0]; });
    const auto nonzero = std::count_if(h.begin(), h.end(), [](auto v) { return v > 0; });
    ck.require(e >= 0.0 && e <= 1.0, "entropy outside [0,1]");
    ck.require((e == 1.0) == uniform, "entropy == 1 does not match uniformity");
    ck.require((e == 0.0) == (nonzero == 1), "entropy == 0 does not match single class");
    auto perm = h;
    rng.shuffle(std::span<std::size_t>(perm));
    ck.require(std::abs(fed::normalized_entropy(perm) - e) <= kEntropyOracleTol,
               "not permutation invariant");
    worst = std::max(worst, std::abs(e - entropy_oracle(h)));
  }
  ck.require(worst <= kEntropyOracleTol, fmt("oracle error %.3g > 1e-12", worst));
  return ck.done(fmt("%.0f histograms, max oracle error %.2g", kRandomCases, worst));
}

nn::ParamVector random_params(Rng& rng, const nn::ParamLayout& layout, double scale) {
  nn::ParamVector v(layout);
  for (auto& x : v.values()) x = rng.uniform(-scale, scale);
  return v;
}

Outcome aggregation_identities() {
  Check ck;
  Rng rng(202);
  for (int t = 0; t < kRandomCases; ++t) {
    const std::size_t k = 1 + rng.below(10);
    const nn::ParamLayout layout({{1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(3)}});
    std::vector<nn::ParamVector> models;
    for (std::size_t i = 0; i < k; ++i) models.push_back(random_params(rng, layout, 10.0));

    // equal entropies with lambda = 1 against equal counts
    const double h = rng.uniform();
    std::vector<fed::EntropyReport> reports;
    const std::size_t count = 1 + rng.below(100);
    for (std::size_t i = 0; i < k; ++i) reports.push_back({i, h, count});
    const std::vector<double> counts(k, static_cast<double>(count));
    const auto ddfl = fed::aggregate_ddfl(models, reports, 1.0);
    const auto avg = fed::aggregate_fedavg(models, counts);
    ck.require(ddfl.model == avg, "equal-entropy ddfl differs from equal-count fedavg");

    // convex bound for both aggregators with arbitrary weights
    for (auto& r : reports) r.entropy = rng.uniform();
    std::vector<double> w(k);
    for (auto& x : w) x = rng.uniform(0.0, 5.0);
    w[0] += 0.1;
    const auto a = fed::aggregate_ddfl(models, reports, rng.uniform(0.05, 1.0)).model;
    const auto b = fed::aggregate_fedavg(models, w);
    for (std::size_t j = 0; j < layout.total_size(); ++j) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto& m : models) lo = std::min(lo, m[j]), hi = std::max(hi, m[j]);
      ck.require(a[j] >= lo && a[j] <= hi, "ddfl aggregate outside convex hull");
      ck.require(b[j] >= lo && b[j] <= hi, "fedavg aggregate outside convex hull");
    }
  }
  return ck.done(fmt("%.0f random model sets, bit-exact identity and convex bound", kRandomCases));
}

Outcome training_correctness() {
  Check ck;
  Rng rng(303);
  double worst = 0.0;
  int models = 0;
  while (models < 200) {
    nn::ModelSpec spec;
    spec.input_dim = 1 + rng.below(6);
    spec.num_classes = 2 + rng.below(4);
    for (std::size_t h = rng.below(3); h > 0; --h) spec.hidden_dims.push_back(1 + rng.below(6));
    spec.activation = rng.below(2) ? nn::Activation::kTanh : nn::Activation::kRelu;
    const auto layout = nn::ParamLayout::from_spec(spec);
    if (layout.total_size() > 100) continue;
    ++models;

    auto m = nn::init_model(spec, rng.next());
    for (auto& v : m.values()) v += rng.uniform(-0.1, 0.1);
    data::SampleTable t(spec.input_dim, spec.num_classes);
    std::vector<double> x(spec.input_dim);
    for (std::size_t i = 0; i < 6; ++i) {
      for (auto& v : x) v = rng.uniform(-1.0, 1.0);
      t.add(x, static_cast<int>(rng.below(spec.num_classes)));
    }
    const auto idx = t.all_indices();
    const data::SampleView view{t, idx};
    const auto g = nn::gradient(m, view, spec.activation);

    double diff = 0.0, na = 0.0, nb = 0.0;
    auto probe = m;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double v = probe[i], step = 1e-6;
      probe[i] = v + step;
      const double up = nn::loss(probe, view, spec.activation);
      probe[i] = v - step;
      const double down = nn::loss(probe, view, spec.activation);
      probe[i] = v;
      const double fd = (up - down) / (2 * step);
      diff += (g[i] - fd) * (g[i] - fd);
      na += g[i] * g[i];
      nb += fd * fd;
    }
    const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
    worst = std::max(worst, rel);

    nn::TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.local_epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = rng.next();
    ck.require(nn::local_train(m, view, cfg, spec.activation) == m, "eta = 0 moved the model");
  }
  ck.require(worst <= kGradRelTol, fmt("gradient relative error %.3g > 1e-4", worst));
  return ck.done(fmt("%.0f models (<= 100 params), max relative error %.2g, eta=0 fixpoint exact",
                     models, worst));
}

Outcome divergence_axioms() {
  Check ck;
  Rng rng(404);
  double worst = 0.0;
  for (int t = 0; t < kRandomCases; ++t) {
    const nn::ParamLayout layout({{1 + rng.below(3), 1 + rng.below(3), 1}, {2, 1 + rng.below(3), 2}});
    const auto a = random_params(rng, layout, 5.0);
    const auto b = random_params(rng, layout, 5.0);
    const auto c = random_params(rng, layout, 5.0);
    const double ab = analysis::weight_divergence(a, b).total;
    const double ba = analysis::weight_divergence(b, a).total;
    const double ac = analysis::weight_divergence(a, c).total;
    const double bc = analysis::weight_divergence(b, c).total;
    ck.require(ab >= 0.0 && ac >= 0.0 && bc >= 0.0, "negative divergence");
    ck.require(ab == ba, "divergence not symmetric");
    ck.require(analysis::weight_divergence(a, a).total == 0.0, "d(a, a) != 0");
    ck.require(!(a == b) == (ab > 0.0), "identity of indiscernibles violated");
    ck.require(ac <= ab + bc + 1e-12 * (ab + bc), "triangle inequality violated");
    const double bias = analysis::l2_norm(analysis::bias_term(b, a).values());
    worst = std::max(worst, std::abs(bias - ab));
  }
  ck.require(worst <= kBiasNormTol, fmt("|norm(delta) - divergence| = %.3g", worst));
  return ck.done(fmt("%.0f triples, max |norm(delta) - divergence| %.2g", kRandomCases, worst));
}

Outcome reliability_cases() {
  Check ck;
  const std::vector<double> constant(8, 0.73);
  ck.require(analysis::reliability_index(constant).zeta == 100.0, "constant accuracies != 100");

  struct Case {
    std::vector<double> acc;
    double zeta;
  };
  // population std by hand
  const std::vector<Case> cases{
      {{0.81, 0.99}, 90.0},                                     // mu .9, sigma .09
      {{0.5, 1.0}, (1.0 - 0.25 / 0.75) * 100.0},                // mu .75, sigma .25
      {{0.2, 0.4, 0.6}, (1.0 - std::sqrt(0.08 / 3.0) / 0.4) * 100.0},
      {{1.0, 1.0, 0.0, 0.0}, 0.0},                              // mu .5, sigma .5
  };
  double worst = 0.0;
  for (const auto& c : cases) {
    worst = std::max(worst, std::abs(analysis::reliability_index(c.acc).zeta - c.zeta));
  }
  ck.require(worst <= kReliabilityTol, fmt("hand case error %.3g", worst));
  const std::vector<analysis::ReliabilityRecord> recs{{0, 0, 0, 90.0}, {0, 0, 0, 86.22}};
  ck.require(std::abs(analysis::system_reliability(recs) - 88.11) <= kReliabilityTol,
             "system index is not the mean of settings");
  return ck.done(fmt("constant -> 100 exact, %.0f hand cases within %.1g", cases.size(), worst));
}

Outcome bound_calculator() {
  Check ck;
  Rng rng(606);
  double worst = 0.0;
  for (int t = 0; t < kRandomCases; ++t) {
    analysis::BoundInputs in;
    in.strong_convexity = rng.uniform(0.05, 2.0);
    in.smoothness = in.strong_convexity * rng.uniform(1.0, 20.0);
    in.devices = 1 + rng.below(20);
    in.weights.assign(in.devices, 1.0 / static_cast<double>(in.devices));
    const double sigma = rng.uniform(0.0, 3.0);
    in.sigma.assign(in.devices, sigma);
    in.grad_bound = rng.uniform(0.0, 5.0);
    in.phi = rng.uniform(0.0, 2.0);
    in.init_distance = rng.uniform(0.0, 10.0);
    in.local_steps = 1;
    in.rounds = 1 + rng.below(50);
    const auto r = analysis::theorem1_bound(in);
    ck.require(r.terms.drift == 0.0, "E = 1 leaves a drift term");
    const double closed = sigma * sigma / static_cast<double>(in.devices);
    worst = std::max(worst, std::abs(r.terms.variance - closed) / std::max(closed, 1e-300));

    in.local_steps = 1 + rng.below(10);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t n : {1ul, 2ul, 5ul, 10ul, 100ul, 1000ul, 1000000ul}) {
      in.rounds = n;
      const double b = analysis::theorem1_bound(in).bound_at_n;
      ck.require(b < prev, "bound not decreasing in N");
      prev = b;
    }
  }
  ck.require(worst <= kBoundTol, fmt("uniform-p variance term off by %.3g (relative)", worst));
  return ck.done(fmt("%.0f random inputs, variance closed form within %.2g", kRandomCases, worst));
}

// ---------------------------------------------------------------------------
// Experiment-level criteria share one synthetic configuration: 10 classes,
// 16 dims, 1,000 training samples, K=10, one_class, gamma 0.1, lambda 0.9,
// e=1, b=20, 50 rounds.

harness::ExperimentConfig trend_config(std::uint64_t seed, fed::AggregatorKind agg) {
  harness::ExperimentConfig c;
  c.dataset.kind = harness::DatasetKind::kSynthetic;
  c.dataset.classes = 10;
  c.dataset.input_dim = 16;
  c.dataset.per_class = 125;  // 100 train + 25 test per class
  c.devices = 10;
  c.partition = dist::PartitionMode::kOneClass;
  c.gamma = 0.1;
  c.lambda = 0.9;
  c.local_epochs = 1;
  c.batch_size = 20;
  c.rounds = 50;
  c.aggregator = agg;
  c.seed = seed;
  c.record_timing = false;
  return c;
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3};

struct TrendRuns {
  std::vector<harness::ExperimentResult> ddfl, base;
};

TrendRuns& trend_runs() {
  static TrendRuns runs = [] {
    TrendRuns r;
    for (auto s : kSeeds) {
      r.ddfl.push_back(harness::run_experiment(trend_config(s, fed::AggregatorKind::kDdflEntropy)));
      r.base.push_back(harness::run_experiment(trend_config(s, fed::AggregatorKind::kFedAvgCount)));
    }
    return r;
  }();
  return runs;
}

Outcome accuracy_boost() {
  Check ck;
  const auto& r = trend_runs();
  std::ostringstream line;
  for (std::size_t i = 0; i < r.ddfl.size(); ++i) {
    ck.require(r.ddfl[i].rows.size() == 50 && r.base[i].rows.size() == 50,
               "run did not complete 50 rounds");
    const double d = 100.0 * r.ddfl[i].summary.final_accuracy;
    const double b = 100.0 * r.base[i].summary.final_accuracy;
    line << "seed " << kSeeds[i] << ": " << fmt("%.1f vs %.1f (%+.1f)", d, b, d - b) << "; ";
    ck.require(d - b >= kMinBoostPoints,
               "seed " + std::to_string(kSeeds[i]) + fmt(": ddfl %.1f vs baseline %.1f", d, b));
  }
  return ck.done(line.str());
}

Outcome mnist_trend() {
  const char* dir = std::getenv("DDFL_MNIST_DIR");
  if (dir == nullptr || !fs::exists(fs::path(dir) / "train-images-idx3-ubyte")) {
    return {Verdict::kSkip, "set DDFL_MNIST_DIR to the directory holding the MNIST IDX files"};
  }
  Check ck;
  const auto ds = data::load_mnist(dir);
  auto cfg = [&](fed::AggregatorKind agg, dist::PartitionMode mode) {
    harness::ExperimentConfig c;
    c.dataset.kind = harness::DatasetKind::kMnist;
    c.dataset.path = dir;
    c.hidden_dims = {64};
    c.devices = 10;
    c.rounds = 30;
    c.batch_size = 100;
    c.learning_rate = 0.1;
    c.partition = mode;
    c.aggregator = agg;
    c.seed = 1;
    c.workers = 4;
    c.record_timing = false;
    return harness::run_experiment(c, ds).summary.final_accuracy;
  };
  using fed::AggregatorKind;
  using dist::PartitionMode;
  const double base_gap = cfg(AggregatorKind::kFedAvgCount, PartitionMode::kIid) -
                          cfg(AggregatorKind::kFedAvgCount, PartitionMode::kOneClass);
  const double ddfl_gap = cfg(AggregatorKind::kDdflEntropy, PartitionMode::kIid) -
                          cfg(AggregatorKind::kDdflEntropy, PartitionMode::kOneClass);
  ck.require(base_gap > ddfl_gap, fmt("baseline gap %.4f <= ddfl gap %.4f", base_gap, ddfl_gap));
  return ck.done(fmt("baseline gap %.4f > ddfl gap %.4f", base_gap, ddfl_gap));
}

Outcome entropy_dynamics() {
  Check ck;
  const auto& r = trend_runs();
  std::ostringstream line;
  for (std::size_t i = 0; i < r.ddfl.size(); ++i) {
    const auto& traj = r.ddfl[i].summary.mean_entropy_trajectory;
    ck.require(r.ddfl[i].summary.segment_size > 0, "dispensing is off");
    for (std::size_t n = 1; n < traj.size(); ++n) {
      ck.require(traj[n] >= traj[n - 1],
                 "seed " + std::to_string(kSeeds[i]) + ": mean entropy fell at round " +
                     std::to_string(n + 1));
    }
    const double rise = traj.back() - traj.front();
    ck.require(rise >= kMinEntropyRise,
               "seed " + std::to_string(kSeeds[i]) + fmt(": rise %.3f < 0.2", rise));
    line << "seed " << kSeeds[i] << fmt(": %.3f -> %.3f; ", traj.front(), traj.back());
  }
  return ck.done(line.str() + "nondecreasing every round");
}

Outcome divergence_trend() {
  Check ck;
  const auto& r = trend_runs();
  std::ostringstream line;
  for (std::size_t i = 0; i < r.base.size(); ++i) {
    for (auto agg : {fed::AggregatorKind::kFedAvgCount, fed::AggregatorKind::kDdflEntropy}) {
      auto c = trend_config(kSeeds[i], agg);
      c.partition = dist::PartitionMode::kIid;
      const double iid = harness::run_experiment(c).summary.final_mean_divergence;
      const auto& non_iid = agg == fed::AggregatorKind::kFedAvgCount ? r.base[i] : r.ddfl[i];
      const double one = non_iid.summary.final_mean_divergence;
      ck.require(one > iid, std::string(fed::to_string(agg)) + " seed " +
                                std::to_string(kSeeds[i]) +
                                fmt(": one_class divergence %.4f <= iid %.4f", one, iid));
    }
  }
  int lower = 0;
  for (std::size_t i = 0; i < r.base.size(); ++i) {
    const double d = r.ddfl[i].summary.final_mean_bias_norm;
    const double b = r.base[i].summary.final_mean_bias_norm;
    lower += d < b;
    line << "seed " << kSeeds[i] << fmt(": |delta| %.3f vs %.3f; ", d, b);
  }
  ck.require(lower >= 2, "ddfl bias norm lower on only " + std::to_string(lower) + " of 3 seeds");
  return ck.done("one_class divergence > iid on all seeds, both aggregators; " + line.str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  Check ck;
  auto a = trend_config(1, fed::AggregatorKind::kDdflEntropy);
  auto b = a;
  a.workers = 1;
  b.workers = 4;
  a.output_dir = g_work / "determinism_w1";
  b.output_dir = g_work / "determinism_w4";
  harness::run_experiment(a);
  harness::run_experiment(b);
  for (const char* f : {"metrics.csv", "device_rounds.csv", "layer_divergence.csv"}) {
    const auto x = slurp(a.output_dir / f);
    ck.require(!x.empty() && x == slurp(b.output_dir / f), std::string(f) + " differs");
  }
  return ck.done("metrics, device and layer files byte-identical for 1 and 4 workers");
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  g_work = fs::temp_directory_path() / "ddfl_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
    else if (a == "--work" && i + 1 < argc) g_work = argv[++i];
    else {
      std::fprintf(stderr, "usage: %s [--only N] [--work DIR]\n", argv[0]);
      return 2;
    }
  }
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"entropy correctness", entropy_correctness},
      {"aggregation identities", aggregation_identities},
      {"gradient and training correctness", training_correctness},
      {"divergence metric axioms", divergence_axioms},
      {"reliability index", reliability_cases},
      {"convergence bound calculator", bound_calculator},
      {"accuracy boost over fedavg (synthetic, 3 seeds)", accuracy_boost},
      {"mnist gap trend", mnist_trend},
      {"entropy dynamics", entropy_dynamics},
      {"divergence trend", divergence_trend},
      {"determinism across worker counts", determinism},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (only != 0 && only != id) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {Verdict::kFail, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = out.verdict == Verdict::kPass ? "PASS"
                      : out.verdict == Verdict::kSkip ? "SKIP"
                                                       : "FAIL";
    if (out.verdict == Verdict::kFail) ++failed;
    std::printf("[%s] %2d %s (%.1fs): %s\n", tag, id, criteria[i].first, secs, out.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d failed\n", failed);
  return failed == 0 ? 0 : 1;
}
