#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddfl/dataset.hpp"
#include "ddfl/distribution.hpp"
#include "ddfl/federation.hpp"
#include "ddfl/model.hpp"

namespace ddfl::harness {

enum class DatasetKind { kMnist, kCifar10, kCifar100, kSynthetic };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::kSynthetic;
  std::filesystem::path path;  // mnist / cifar only
  std::size_t classes = 10;
  std::size_t per_class = 125;
  std::size_t input_dim = 16;
  double spread = 0.2;
  double shear = 4.0;
  std::optional<std::uint64_t> seed;  // defaults to a derivation of the master seed
};

struct ExperimentConfig {
  DatasetConfig dataset;
  std::vector<std::size_t> hidden_dims{32};
  nn::Activation activation = nn::Activation::kRelu;
  std::size_t devices = 10;       // K
  std::size_t rounds = 50;        // N
  std::size_t local_epochs = 1;   // e
  std::size_t batch_size = 20;    // b
  double learning_rate = 0.2;     // eta
  double gamma = 0.1;
  double lambda = 0.9;
  dist::PartitionMode partition = dist::PartitionMode::kOneClass;
  fed::AggregatorKind aggregator = fed::AggregatorKind::kDdflEntropy;
  std::optional<std::size_t> segment_size;
  // Dispensing from the server queue. Defaults to on for ddfl, off for the
  // fedavg baseline, which keeps its static partition.
  std::optional<bool> dynamic;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  bool record_timing = true;
  bool write_trace = false;
  std::filesystem::path output_dir;

  // Throws ConfigInvalid.
  void validate() const;
  bool dynamic_enabled() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& file);

struct MetricsRow {
  std::size_t round = 0;
  double test_accuracy = 0.0;
  double mean_loss = 0.0;
  double mean_entropy = 0.0;
  double min_entropy = 0.0;
  double max_entropy = 0.0;
  double mean_weight_divergence = 0.0;
  double mean_bias_norm = 0.0;
  double agg_time_ms = 0.0;
  std::vector<std::size_t> selected_ids;
};

// Per (round, device) diagnostics behind the entropy heatmap.
struct DeviceRow {
  std::size_t round = 0;
  std::size_t device = 0;
  double entropy = 0.0;
  std::size_t sample_count = 0;
  double local_accuracy = 0.0;
  double weight_divergence = 0.0;
  double bias_norm = 0.0;
};

// Per (round, device, layer) weight divergence.
struct LayerRow {
  std::size_t round = 0;
  std::size_t device = 0;
  std::size_t layer = 0;
  double divergence = 0.0;
};

struct Summary {
  double final_accuracy = 0.0;
  double best_accuracy = 0.0;
  std::size_t best_round = 0;
  double mean_agg_time_ms = 0.0;
  double final_mean_divergence = 0.0;
  double final_mean_bias_norm = 0.0;
  double reliability_zeta = 0.0;
  std::size_t segment_size = 0;
  std::size_t fallback_rounds = 0;
  std::vector<double> mean_entropy_trajectory;
};

nlohmann::json summary_to_json(const Summary& s);

struct ExperimentResult {
  ExperimentConfig resolved;
  std::vector<MetricsRow> rows;
  std::vector<DeviceRow> device_rows;
  std::vector<LayerRow> layer_rows;
  nn::ParamVector final_model;
  Summary summary;
};

// Loads the dataset named by the config. Throws DatasetMissing and the loader
// errors.
data::Dataset load_dataset(const ExperimentConfig& cfg);

// Fills derived defaults: dataset seed, dynamic flag, segment size.
ExperimentConfig resolve(const ExperimentConfig& cfg, const data::Dataset& ds);

// Runs N rounds. When cfg.output_dir is set, writes config.json, metrics.csv
// (flushed per round), device_rounds.csv, layer_divergence.csv, summary.json
// and, with write_trace, trace.jsonl.
ExperimentResult run_experiment(const ExperimentConfig& cfg);
ExperimentResult run_experiment(const ExperimentConfig& cfg, const data::Dataset& ds);

struct GridCell {
  std::size_t local_epochs = 1;
  double gamma = 0.1;
  double lambda = 0.9;
};

// Either {"e": [...], "gamma": [...], "lambda": [...]} (cartesian product,
// missing keys take the base value) or {"cells": [{"e","gamma","lambda"}, ...]}.
std::vector<GridCell> grid_from_json(const nlohmann::json& j, const ExperimentConfig& base);

struct SweepRow {
  std::size_t approach = 0;
  GridCell cell;
  double ddfl_accuracy = 0.0;      // percent
  double baseline_accuracy = 0.0;  // percent
  double accuracy_boost = 0.0;     // points, ddfl - baseline
  double ddfl_aat_ms = 0.0;
  double baseline_aat_ms = 0.0;
  double aat_boost_pct = 0.0;      // (baseline - ddfl) / baseline * 100
};

// Two runs (ddfl, fedavg) per cell. Writes sweep.csv into base.output_dir when
// set, with each run under approach_XX_<aggregator>/.
std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::vector<GridCell>& grid);

enum class PlotKind { kAccuracyCurve, kEntropyHeatmap, kDivergenceBars };

PlotKind parse_plot_kind(std::string_view name);

struct PlotInput {
  std::string setting;
  std::vector<MetricsRow> rows;
  std::vector<LayerRow> layer_rows;
  std::vector<DeviceRow> device_rows;
};

//   accuracy_curve   round,test_accuracy,mean_loss
//   entropy_heatmap  round,device,entropy
//   divergence_bars  setting,layer,mean_divergence   (final round)
// Throws EmptyInput, IoError.
std::filesystem::path emit_plot_data(const PlotInput& in, PlotKind kind,
                                     const std::filesystem::path& out);

// metrics.csv header, in MetricsRow field order.
std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& file);
std::vector<DeviceRow> read_device_csv(const std::filesystem::path& file);
std::vector<LayerRow> read_layer_csv(const std::filesystem::path& file);

}  // namespace ddfl::harness
