#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ddfl/dataset.hpp"

namespace ddfl::nn {

enum class Activation { kRelu, kTanh };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

struct ModelSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 0;
  Activation activation = Activation::kRelu;

  // Throws InvalidParam unless every dimension is positive and C >= 2.
  void validate() const;
};

// One dense layer: `rows` outputs, `cols` inputs, `bias` == rows.
struct LayerShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t bias = 0;

  std::size_t size() const { return rows * cols + bias; }
  bool operator==(const LayerShape&) const = default;
};

class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(std::vector<LayerShape> layers);

  static ParamLayout from_spec(const ModelSpec& spec);

  std::span<const LayerShape> layers() const { return layers_; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t total_size() const { return total_; }
  std::size_t offset(std::size_t layer) const { return offsets_[layer]; }

  bool operator==(const ParamLayout& other) const { return layers_ == other.layers_; }

 private:
  std::vector<LayerShape> layers_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

// Flat parameter vector. Each layer is stored as its row-major weight matrix
// followed by its bias vector.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(ParamLayout layout);
  ParamVector(ParamLayout layout, std::vector<double> values);

  const ParamLayout& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> layer(std::size_t l) const;
  std::span<double> layer(std::size_t l);

  bool all_finite() const;
  bool same_layout(const ParamVector& other) const { return layout_ == other.layout_; }

  bool operator==(const ParamVector&) const = default;

 private:
  ParamLayout layout_;
  std::vector<double> values_;
};

// Throws LayoutMismatch when the layouts differ.
void require_same_layout(const ParamVector& a, const ParamVector& b);

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  // Index of the first epoch in the seed stream. Training e epochs from offset
  // j is the same as e calls of one epoch at offsets j, j+1, ...
  std::size_t epoch_offset = 0;

  void validate() const;
};

struct Metrics {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
ParamVector init_model(const ModelSpec& spec, std::uint64_t seed);

// Mean softmax cross-entropy gradient over `batch`.
ParamVector gradient(const ParamVector& model, data::SampleView batch,
                     Activation activation);

// Mean softmax cross-entropy over `data`.
double loss(const ParamVector& model, data::SampleView data, Activation activation);

// Mini-batch SGD. The data order of each epoch is a shuffle seeded from
// (cfg.seed, epoch index); the last partial batch is kept.
ParamVector local_train(const ParamVector& model, data::SampleView data,
                        const TrainConfig& cfg, Activation activation);

// Argmax prediction; ties go to the lowest class id.
Metrics evaluate(const ParamVector& model, data::SampleView data, Activation activation);

// Class probabilities for one input.
std::vector<double> predict_proba(const ParamVector& model, std::span<const double> x,
                                  Activation activation);

// Accuracy of consecutive batches of `batch_size` samples, in data order.
std::vector<double> per_batch_accuracy(const ParamVector& model, data::SampleView data,
                                       std::size_t batch_size, Activation activation);

}  // namespace ddfl::nn
