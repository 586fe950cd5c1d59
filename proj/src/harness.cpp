#include "ddfl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "ddfl/analysis.hpp"
#include "ddfl/error.hpp"
#include "ddfl/rng.hpp"

namespace ddfl::harness {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& what) {
  throw Error(ErrorCode::kConfigInvalid, what);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::kMnist: return "mnist";
    case DatasetKind::kCifar10: return "cifar10";
    case DatasetKind::kCifar100: return "cifar100";
    case DatasetKind::kSynthetic: return "synthetic";
  }
  return "synthetic";
}

DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "mnist") return DatasetKind::kMnist;
  if (s == "cifar10") return DatasetKind::kCifar10;
  if (s == "cifar100") return DatasetKind::kCifar100;
  if (s == "synthetic") return DatasetKind::kSynthetic;
  config_error("unknown dataset kind '" + s + "'");
}

void reject_unknown(const json& j, std::initializer_list<std::string_view> known,
                    const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      config_error("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (devices == 0) config_error("devices (K) must be >= 1");
  if (rounds == 0) config_error("rounds (N) must be >= 1");
  if (local_epochs == 0) config_error("local_epochs (e) must be >= 1");
  if (batch_size == 0) config_error("batch_size (b) must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    config_error("learning_rate must be positive");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) config_error("gamma must lie in [0, 1)");
  if (!(lambda > 0.0 && lambda <= 1.0)) config_error("lambda must lie in (0, 1]");
  if (workers == 0) config_error("workers must be >= 1");
  for (auto h : hidden_dims) {
    if (h == 0) config_error("hidden layer widths must be positive");
  }
  if (dataset.kind == DatasetKind::kSynthetic) {
    if (dataset.classes < 2 || dataset.per_class < 2 || dataset.input_dim < 2) {
      config_error("synthetic dataset needs classes, per_class, input_dim >= 2");
    }
    if (!(dataset.spread >= 0.0)) config_error("synthetic spread must be >= 0");
    if (!(dataset.shear >= 0.0)) config_error("synthetic shear must be >= 0");
  } else if (dataset.path.empty()) {
    config_error("dataset.path is required for " + std::string(to_string(dataset.kind)));
  }
}

bool ExperimentConfig::dynamic_enabled() const {
  return dynamic.value_or(aggregator == fed::AggregatorKind::kDdflEntropy);
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) config_error("config must be a JSON object");
  ExperimentConfig cfg;
  try {
    reject_unknown(j,
                   {"dataset", "model", "devices", "rounds", "local_epochs", "batch_size",
                    "learning_rate", "gamma", "lambda", "partition", "aggregator",
                    "segment_size", "dynamic", "seed", "workers", "record_timing",
                    "write_trace", "output_dir"},
                   "config");
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      reject_unknown(d, {"kind", "path", "classes", "per_class", "input_dim", "spread", "shear", "seed"},
                     "dataset");
      if (d.contains("kind")) cfg.dataset.kind = parse_dataset_kind(d.at("kind").get<std::string>());
      if (d.contains("path")) cfg.dataset.path = d.at("path").get<std::string>();
      read_if(d, "classes", cfg.dataset.classes);
      read_if(d, "per_class", cfg.dataset.per_class);
      read_if(d, "input_dim", cfg.dataset.input_dim);
      read_if(d, "spread", cfg.dataset.spread);
      read_if(d, "shear", cfg.dataset.shear);
      if (d.contains("seed") && !d.at("seed").is_null()) {
        cfg.dataset.seed = d.at("seed").get<std::uint64_t>();
      }
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      reject_unknown(m, {"hidden", "activation"}, "model");
      read_if(m, "hidden", cfg.hidden_dims);
      if (m.contains("activation")) {
        cfg.activation = nn::parse_activation(m.at("activation").get<std::string>());
      }
    }
    read_if(j, "devices", cfg.devices);
    read_if(j, "rounds", cfg.rounds);
    read_if(j, "local_epochs", cfg.local_epochs);
    read_if(j, "batch_size", cfg.batch_size);
    read_if(j, "learning_rate", cfg.learning_rate);
    read_if(j, "gamma", cfg.gamma);
    read_if(j, "lambda", cfg.lambda);
    if (j.contains("partition")) {
      cfg.partition = dist::parse_partition_mode(j.at("partition").get<std::string>());
    }
    if (j.contains("aggregator")) {
      cfg.aggregator = fed::parse_aggregator(j.at("aggregator").get<std::string>());
    }
    if (j.contains("segment_size") && !j.at("segment_size").is_null()) {
      cfg.segment_size = j.at("segment_size").get<std::size_t>();
    }
    if (j.contains("dynamic") && !j.at("dynamic").is_null()) {
      cfg.dynamic = j.at("dynamic").get<bool>();
    }
    read_if(j, "seed", cfg.seed);
    read_if(j, "workers", cfg.workers);
    read_if(j, "record_timing", cfg.record_timing);
    read_if(j, "write_trace", cfg.write_trace);
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  } catch (const json::exception& e) {
    config_error(e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfigInvalid) throw;
    config_error(e.what());
  }
  cfg.validate();
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json d = {{"kind", to_string(cfg.dataset.kind)}};
  if (cfg.dataset.kind == DatasetKind::kSynthetic) {
    d["classes"] = cfg.dataset.classes;
    d["per_class"] = cfg.dataset.per_class;
    d["input_dim"] = cfg.dataset.input_dim;
    d["spread"] = cfg.dataset.spread;
    d["shear"] = cfg.dataset.shear;
    d["seed"] = cfg.dataset.seed ? json(*cfg.dataset.seed) : json(nullptr);
  } else {
    d["path"] = cfg.dataset.path.string();
  }
  return {
      {"dataset", d},
      {"model", {{"hidden", cfg.hidden_dims}, {"activation", nn::to_string(cfg.activation)}}},
      {"devices", cfg.devices},
      {"rounds", cfg.rounds},
      {"local_epochs", cfg.local_epochs},
      {"batch_size", cfg.batch_size},
      {"learning_rate", cfg.learning_rate},
      {"gamma", cfg.gamma},
      {"lambda", cfg.lambda},
      {"partition", dist::to_string(cfg.partition)},
      {"aggregator", fed::to_string(cfg.aggregator)},
      {"segment_size", cfg.segment_size ? json(*cfg.segment_size) : json(nullptr)},
      {"dynamic", cfg.dynamic ? json(*cfg.dynamic) : json(nullptr)},
      {"seed", cfg.seed},
      {"workers", cfg.workers},
      {"record_timing", cfg.record_timing},
      {"write_trace", cfg.write_trace},
      {"output_dir", cfg.output_dir.string()},
  };
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) config_error("cannot open config " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    config_error(file.string() + ": " + e.what());
  }
  return config_from_json(j);
}

json summary_to_json(const Summary& s) {
  return {
      {"final_accuracy", s.final_accuracy},
      {"best_accuracy", s.best_accuracy},
      {"best_round", s.best_round},
      {"mean_agg_time_ms", s.mean_agg_time_ms},
      {"final_mean_weight_divergence", s.final_mean_divergence},
      {"final_mean_bias_norm", s.final_mean_bias_norm},
      {"reliability_zeta", s.reliability_zeta},
      {"segment_size", s.segment_size},
      {"fallback_rounds", s.fallback_rounds},
      {"mean_entropy_trajectory", s.mean_entropy_trajectory},
  };
}

data::Dataset load_dataset(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  switch (d.kind) {
    case DatasetKind::kMnist: return data::load_mnist(d.path);
    case DatasetKind::kCifar10: return data::load_cifar(d.path, data::CifarVariant::kCifar10);
    case DatasetKind::kCifar100: return data::load_cifar(d.path, data::CifarVariant::kCifar100);
    case DatasetKind::kSynthetic: {
      const auto seed = d.seed.value_or(derive_seed(cfg.seed, SeedDomain::kSynthetic));
      return data::make_synthetic(d.classes, d.per_class, d.input_dim, d.spread, seed,
                                 d.shear);
    }
  }
  throw Error(ErrorCode::kDatasetMissing, "unknown dataset kind");
}

namespace {

std::size_t queue_size(double gamma, std::size_t n) {
  return static_cast<std::size_t>(std::llround(gamma * static_cast<double>(n)));
}

}  // namespace

ExperimentConfig resolve(const ExperimentConfig& cfg, const data::Dataset& ds) {
  ExperimentConfig r = cfg;
  if (r.dataset.kind == DatasetKind::kSynthetic && !r.dataset.seed) {
    r.dataset.seed = derive_seed(cfg.seed, SeedDomain::kSynthetic);
  }
  r.dynamic = cfg.dynamic_enabled();
  if (!r.segment_size) {
    r.segment_size = *r.dynamic ? dist::default_segment_size(queue_size(r.gamma, ds.train.size()),
                                                             r.devices, r.rounds)
                                : 0;
  }
  return r;
}

std::string metrics_header() {
  return "round,test_accuracy,mean_loss,mean_entropy,min_entropy,max_entropy,"
         "mean_weight_divergence,mean_bias_norm,agg_time_ms,selected_ids";
}

std::string format_metrics_row(const MetricsRow& r) {
  std::string ids;
  for (std::size_t i = 0; i < r.selected_ids.size(); ++i) {
    if (i) ids += ' ';
    ids += std::to_string(r.selected_ids[i]);
  }
  return std::to_string(r.round) + ',' + fmt(r.test_accuracy) + ',' + fmt(r.mean_loss) + ',' +
         fmt(r.mean_entropy) + ',' + fmt(r.min_entropy) + ',' + fmt(r.max_entropy) + ',' +
         fmt(r.mean_weight_divergence) + ',' + fmt(r.mean_bias_norm) + ',' + fmt(r.agg_time_ms) +
         ',' + ids;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + p.string());
  return out;
}

constexpr const char* kDeviceHeader =
    "round,device,entropy,sample_count,local_accuracy,weight_divergence,bias_norm";
constexpr const char* kLayerHeader = "round,device,layer,divergence";

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto ds = load_dataset(cfg);
  return run_experiment(cfg, ds);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg_in, const data::Dataset& ds) {
  cfg_in.validate();
  ExperimentResult result;
  const ExperimentConfig cfg = resolve(cfg_in, ds);
  result.resolved = cfg;

  const bool write = !cfg.output_dir.empty();
  std::ofstream metrics_out, device_out, layer_out, trace_out;
  if (write) {
    std::filesystem::create_directories(cfg.output_dir);
    auto conf = open_out(cfg.output_dir / "config.json");
    conf << config_to_json(cfg).dump(2) << '\n';
    metrics_out = open_out(cfg.output_dir / "metrics.csv");
    metrics_out << metrics_header() << '\n' << std::flush;
    device_out = open_out(cfg.output_dir / "device_rounds.csv");
    device_out << kDeviceHeader << '\n';
    layer_out = open_out(cfg.output_dir / "layer_divergence.csv");
    layer_out << kLayerHeader << '\n';
    if (cfg.write_trace) trace_out = open_out(cfg.output_dir / "trace.jsonl");
  }

  nn::ModelSpec spec{ds.train.input_dim(), cfg.hidden_dims, ds.train.num_classes(),
                     cfg.activation};
  const auto rows = ds.train.all_indices();
  auto split = dist::split_global_queue(ds.train, rows, cfg.gamma,
                                        derive_seed(cfg.seed, SeedDomain::kQueue));
  dist::PartitionPlan plan{cfg.partition, cfg.devices, cfg.gamma,
                           derive_seed(cfg.seed, SeedDomain::kPartition)};

  fed::FederationState state;
  state.devices = dist::partition(ds.train, split.residual, plan);
  state.queue = std::move(split.queue);
  state.global_model = nn::init_model(spec, cfg.seed);

  if (trace_out.is_open()) {
    for (const auto& dev : state.devices) {
      trace_out << json{{"round", 0}, {"device", dev.id}, {"sample_indices", dev.local_data}}.dump()
                << '\n';
    }
  }

  fed::RoundConfig rc;
  rc.policy = {cfg.aggregator, cfg.lambda};
  rc.learning_rate = cfg.learning_rate;
  rc.local_epochs = cfg.local_epochs;
  rc.batch_size = cfg.batch_size;
  rc.activation = cfg.activation;
  rc.segment_size = *cfg.dynamic ? *cfg.segment_size : 0;
  rc.seed = cfg.seed;
  rc.workers = cfg.workers;
  rc.record_timing = cfg.record_timing;

  Summary& summary = result.summary;
  summary.segment_size = rc.segment_size;
  double agg_ms_total = 0.0;

  for (std::size_t n = 0; n < cfg.rounds; ++n) {
    auto rep = fed::run_round(state, rc, ds.train, ds.test);
    const std::size_t k = state.devices.size();

    // Bias is measured against the sample-count average of this round's local
    // models; divergence against the model the server actually produced.
    std::vector<nn::ParamVector> locals;
    std::vector<double> counts;
    for (const auto& dev : state.devices) {
      locals.push_back(dev.model);
      counts.push_back(static_cast<double>(dev.local_data.size()));
    }
    const auto count_avg = fed::aggregate_fedavg(locals, counts);

    MetricsRow row;
    row.round = rep.round;
    row.test_accuracy = rep.test_accuracy;
    row.mean_loss = rep.test_loss;
    row.min_entropy = 1.0;
    row.max_entropy = 0.0;
    row.agg_time_ms = std::chrono::duration<double, std::milli>(rep.agg_time).count();
    row.selected_ids = rep.selected_ids;
    for (std::size_t i = 0; i < k; ++i) {
      const auto& dev = state.devices[i];
      const auto div = analysis::weight_divergence(rep.global_model, dev.model);
      const double bias = analysis::l2_norm(analysis::bias_term(dev.model, count_avg).values());
      row.mean_entropy += dev.entropy;
      row.min_entropy = std::min(row.min_entropy, dev.entropy);
      row.max_entropy = std::max(row.max_entropy, dev.entropy);
      row.mean_weight_divergence += div.total;
      row.mean_bias_norm += bias;
      result.device_rows.push_back({rep.round, dev.id, dev.entropy, dev.local_data.size(),
                                    rep.per_device[i].local_accuracy, div.total, bias});
      for (std::size_t l = 0; l < div.per_layer.size(); ++l) {
        result.layer_rows.push_back({rep.round, dev.id, l, div.per_layer[l]});
      }
    }
    const double kd = static_cast<double>(k);
    row.mean_entropy /= kd;
    row.mean_weight_divergence /= kd;
    row.mean_bias_norm /= kd;
    agg_ms_total += row.agg_time_ms;
    if (rep.uniform_fallback) ++summary.fallback_rounds;
    summary.mean_entropy_trajectory.push_back(row.mean_entropy);

    if (write) {
      metrics_out << format_metrics_row(row) << '\n' << std::flush;
      for (std::size_t i = result.device_rows.size() - k; i < result.device_rows.size(); ++i) {
        const auto& d = result.device_rows[i];
        device_out << d.round << ',' << d.device << ',' << fmt(d.entropy) << ','
                   << d.sample_count << ',' << fmt(d.local_accuracy) << ','
                   << fmt(d.weight_divergence) << ',' << fmt(d.bias_norm) << '\n';
      }
      const std::size_t per_round = k * state.global_model.layout().num_layers();
      for (std::size_t i = result.layer_rows.size() - per_round; i < result.layer_rows.size(); ++i) {
        const auto& l = result.layer_rows[i];
        layer_out << l.round << ',' << l.device << ',' << l.layer << ',' << fmt(l.divergence)
                  << '\n';
      }
      device_out.flush();
      layer_out.flush();
      if (trace_out.is_open()) {
        for (std::size_t i = 0; i < k; ++i) {
          if (rep.segments[i].empty()) continue;
          trace_out << json{{"round", rep.round}, {"device", i},
                            {"sample_indices", rep.segments[i]}}.dump()
                    << '\n';
        }
        trace_out.flush();
      }
    }
    if (row.test_accuracy > summary.best_accuracy || summary.best_round == 0) {
      summary.best_accuracy = row.test_accuracy;
      summary.best_round = row.round;
    }
    result.rows.push_back(std::move(row));
  }

  result.final_model = state.global_model;
  const auto& last = result.rows.back();
  summary.final_accuracy = last.test_accuracy;
  summary.final_mean_divergence = last.mean_weight_divergence;
  summary.final_mean_bias_norm = last.mean_bias_norm;
  summary.mean_agg_time_ms = agg_ms_total / static_cast<double>(result.rows.size());

  const auto test_rows = ds.test.all_indices();
  const auto batches = nn::per_batch_accuracy(result.final_model, {ds.test, test_rows},
                                              cfg.batch_size, cfg.activation);
  try {
    summary.reliability_zeta = analysis::reliability_index(batches, cfg.batch_size).zeta;
  } catch (const Error&) {
    summary.reliability_zeta = 0.0;  // every batch scored 0
  }

  if (write) {
    auto out = open_out(cfg.output_dir / "summary.json");
    out << summary_to_json(summary).dump(2) << '\n';
  }
  return result;
}

std::vector<GridCell> grid_from_json(const json& j, const ExperimentConfig& base) {
  std::vector<GridCell> cells;
  try {
    if (!j.is_object()) config_error("grid must be a JSON object");
    if (j.contains("cells")) {
      reject_unknown(j, {"cells"}, "grid");
      for (const auto& c : j.at("cells")) {
        reject_unknown(c, {"e", "gamma", "lambda"}, "grid cell");
        GridCell cell{base.local_epochs, base.gamma, base.lambda};
        read_if(c, "e", cell.local_epochs);
        read_if(c, "gamma", cell.gamma);
        read_if(c, "lambda", cell.lambda);
        cells.push_back(cell);
      }
    } else {
      reject_unknown(j, {"e", "gamma", "lambda"}, "grid");
      if (!j.contains("e") && !j.contains("gamma") && !j.contains("lambda")) {
        config_error("grid has no axes");
      }
      std::vector<std::size_t> es{base.local_epochs};
      std::vector<double> gs{base.gamma};
      std::vector<double> ls{base.lambda};
      read_if(j, "e", es);
      read_if(j, "gamma", gs);
      read_if(j, "lambda", ls);
      for (auto e : es) {
        for (auto g : gs) {
          for (auto l : ls) cells.push_back({e, g, l});
        }
      }
    }
  } catch (const json::exception& e) {
    config_error(std::string("grid: ") + e.what());
  }
  if (cells.empty()) config_error("grid is empty");
  return cells;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::vector<GridCell>& grid) {
  if (grid.empty()) config_error("grid is empty");
  base.validate();
  const auto ds = load_dataset(base);

  std::vector<SweepRow> table;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    SweepRow row;
    row.approach = i + 1;
    row.cell = grid[i];
    for (auto kind : {fed::AggregatorKind::kDdflEntropy, fed::AggregatorKind::kFedAvgCount}) {
      ExperimentConfig cfg = base;
      cfg.local_epochs = grid[i].local_epochs;
      cfg.gamma = grid[i].gamma;
      cfg.lambda = grid[i].lambda;
      cfg.aggregator = kind;
      if (!base.output_dir.empty()) {
        char name[64];
        std::snprintf(name, sizeof name, "approach_%02zu_%s", row.approach,
                      std::string(fed::to_string(kind)).c_str());
        cfg.output_dir = base.output_dir / name;
      }
      cfg.validate();
      const auto res = run_experiment(cfg, ds);
      if (kind == fed::AggregatorKind::kDdflEntropy) {
        row.ddfl_accuracy = res.summary.final_accuracy * 100.0;
        row.ddfl_aat_ms = res.summary.mean_agg_time_ms;
      } else {
        row.baseline_accuracy = res.summary.final_accuracy * 100.0;
        row.baseline_aat_ms = res.summary.mean_agg_time_ms;
      }
    }
    row.accuracy_boost = row.ddfl_accuracy - row.baseline_accuracy;
    row.aat_boost_pct = row.baseline_aat_ms > 0.0
                            ? (row.baseline_aat_ms - row.ddfl_aat_ms) / row.baseline_aat_ms * 100.0
                            : 0.0;
    table.push_back(row);
  }

  if (!base.output_dir.empty()) {
    std::filesystem::create_directories(base.output_dir);
    auto out = open_out(base.output_dir / "sweep.csv");
    out << "approach,e,gamma,lambda,ddfl_accuracy,baseline_accuracy,accuracy_boost,"
           "ddfl_aat_ms,baseline_aat_ms,aat_boost_pct\n";
    for (const auto& r : table) {
      out << r.approach << ',' << r.cell.local_epochs << ',' << fmt(r.cell.gamma) << ','
          << fmt(r.cell.lambda) << ',' << fmt(r.ddfl_accuracy) << ',' << fmt(r.baseline_accuracy)
          << ',' << fmt(r.accuracy_boost) << ',' << fmt(r.ddfl_aat_ms) << ','
          << fmt(r.baseline_aat_ms) << ',' << fmt(r.aat_boost_pct) << '\n';
    }
  }
  return table;
}

PlotKind parse_plot_kind(std::string_view name) {
  if (name == "accuracy_curve") return PlotKind::kAccuracyCurve;
  if (name == "entropy_heatmap") return PlotKind::kEntropyHeatmap;
  if (name == "divergence_bars") return PlotKind::kDivergenceBars;
  config_error("unknown plot kind '" + std::string(name) + "'");
}

std::filesystem::path emit_plot_data(const PlotInput& in, PlotKind kind,
                                     const std::filesystem::path& out_path) {
  if (in.rows.empty()) throw Error(ErrorCode::kEmptyInput, "no metric rows");
  if (out_path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(out_path.parent_path(), ec);
  }
  auto out = open_out(out_path);
  switch (kind) {
    case PlotKind::kAccuracyCurve:
      out << "round,test_accuracy,mean_loss\n";
      for (const auto& r : in.rows) {
        out << r.round << ',' << fmt(r.test_accuracy) << ',' << fmt(r.mean_loss) << '\n';
      }
      break;
    case PlotKind::kEntropyHeatmap:
      if (in.device_rows.empty()) throw Error(ErrorCode::kEmptyInput, "no per-device rows");
      out << "round,device,entropy\n";
      for (const auto& d : in.device_rows) {
        out << d.round << ',' << d.device << ',' << fmt(d.entropy) << '\n';
      }
      break;
    case PlotKind::kDivergenceBars: {
      if (in.layer_rows.empty()) throw Error(ErrorCode::kEmptyInput, "no per-layer rows");
      const std::size_t last = in.layer_rows.back().round;
      std::vector<double> sum;
      std::vector<std::size_t> cnt;
      for (const auto& l : in.layer_rows) {
        if (l.round != last) continue;
        if (l.layer >= sum.size()) {
          sum.resize(l.layer + 1, 0.0);
          cnt.resize(l.layer + 1, 0);
        }
        sum[l.layer] += l.divergence;
        ++cnt[l.layer];
      }
      out << "setting,layer,mean_divergence\n";
      for (std::size_t l = 0; l < sum.size(); ++l) {
        out << in.setting << ',' << l << ',' << fmt(cnt[l] ? sum[l] / cnt[l] : 0.0) << '\n';
      }
      break;
    }
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + out_path.string());
  return out_path;
}

namespace {

std::vector<std::vector<std::string>> read_csv_cells(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + file.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

void need_cols(const std::vector<std::string>& cells, std::size_t n,
               const std::filesystem::path& file) {
  if (cells.size() != n) {
    throw Error(ErrorCode::kIoError, file.string() + ": expected " + std::to_string(n) +
                                         " columns, got " + std::to_string(cells.size()));
  }
}

}  // namespace

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& file) {
  std::vector<MetricsRow> out;
  for (const auto& c : read_csv_cells(file)) {
    need_cols(c, 10, file);
    MetricsRow r;
    r.round = std::stoul(c[0]);
    r.test_accuracy = std::stod(c[1]);
    r.mean_loss = std::stod(c[2]);
    r.mean_entropy = std::stod(c[3]);
    r.min_entropy = std::stod(c[4]);
    r.max_entropy = std::stod(c[5]);
    r.mean_weight_divergence = std::stod(c[6]);
    r.mean_bias_norm = std::stod(c[7]);
    r.agg_time_ms = std::stod(c[8]);
    std::stringstream ids(c[9]);
    std::size_t id;
    while (ids >> id) r.selected_ids.push_back(id);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<DeviceRow> read_device_csv(const std::filesystem::path& file) {
  std::vector<DeviceRow> out;
  for (const auto& c : read_csv_cells(file)) {
    need_cols(c, 7, file);
    out.push_back({std::stoul(c[0]), std::stoul(c[1]), std::stod(c[2]), std::stoul(c[3]),
                   std::stod(c[4]), std::stod(c[5]), std::stod(c[6])});
  }
  return out;
}

std::vector<LayerRow> read_layer_csv(const std::filesystem::path& file) {
  std::vector<LayerRow> out;
  for (const auto& c : read_csv_cells(file)) {
    need_cols(c, 4, file);
    out.push_back({std::stoul(c[0]), std::stoul(c[1]), std::stoul(c[2]), std::stod(c[3])});
  }
  return out;
}

}  // namespace ddfl::harness
