#include "ddfl/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ddfl/error.hpp"
#include "ddfl/rng.hpp"

namespace ddfl::nn {

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw Error(ErrorCode::kInvalidParam, "unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

void ModelSpec::validate() const {
  if (input_dim == 0) throw Error(ErrorCode::kInvalidParam, "input_dim must be positive");
  if (num_classes < 2) throw Error(ErrorCode::kInvalidParam, "num_classes must be >= 2");
  for (auto h : hidden_dims) {
    if (h == 0) throw Error(ErrorCode::kInvalidParam, "hidden dims must be positive");
  }
}

ParamLayout::ParamLayout(std::vector<LayerShape> layers) : layers_(std::move(layers)) {
  offsets_.reserve(layers_.size());
  for (const auto& l : layers_) {
    offsets_.push_back(total_);
    total_ += l.size();
  }
}

ParamLayout ParamLayout::from_spec(const ModelSpec& spec) {
  spec.validate();
  std::vector<LayerShape> layers;
  std::size_t fan_in = spec.input_dim;
  for (auto h : spec.hidden_dims) {
    layers.push_back({h, fan_in, h});
    fan_in = h;
  }
  layers.push_back({spec.num_classes, fan_in, spec.num_classes});
  return ParamLayout(std::move(layers));
}

ParamVector::ParamVector(ParamLayout layout)
    : layout_(std::move(layout)), values_(layout_.total_size(), 0.0) {}

ParamVector::ParamVector(ParamLayout layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_.total_size()) {
    throw Error(ErrorCode::kDimensionMismatch, "value count does not match layout");
  }
}

std::span<const double> ParamVector::layer(std::size_t l) const {
  return std::span<const double>(values_).subspan(layout_.offset(l),
                                                  layout_.layers()[l].size());
}

std::span<double> ParamVector::layer(std::size_t l) {
  return std::span<double>(values_).subspan(layout_.offset(l), layout_.layers()[l].size());
}

bool ParamVector::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_layout(const ParamVector& a, const ParamVector& b) {
  if (!a.same_layout(b)) throw Error(ErrorCode::kLayoutMismatch, "parameter layouts differ");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::kInvalidParam, "learning rate must be finite and >= 0");
  }
  if (local_epochs == 0) throw Error(ErrorCode::kInvalidParam, "local_epochs must be >= 1");
  if (batch_size == 0) throw Error(ErrorCode::kInvalidParam, "batch_size must be >= 1");
}

ParamVector init_model(const ModelSpec& spec, std::uint64_t seed) {
  ParamVector params(ParamLayout::from_spec(spec));
  Rng rng(derive_seed(seed, SeedDomain::kInit));
  const auto& layout = params.layout();
  for (std::size_t l = 0; l < layout.num_layers(); ++l) {
    const auto& shape = layout.layers()[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(shape.cols));
    auto w = params.layer(l).first(shape.rows * shape.cols);
    for (auto& v : w) v = rng.uniform(-bound, bound);
  }
  return params;
}

namespace {

// Scratch buffers for one forward/backward pass. act[0] is the input, act[l+1]
// the output of layer l; the last entry holds class probabilities.
struct Workspace {
  std::vector<std::vector<double>> act;
  std::vector<double> delta;
  std::vector<double> delta_prev;

  explicit Workspace(const ParamLayout& layout) {
    act.resize(layout.num_layers() + 1);
    act[0].resize(layout.layers()[0].cols);
    for (std::size_t l = 0; l < layout.num_layers(); ++l) {
      act[l + 1].resize(layout.layers()[l].rows);
    }
  }
};

void check_input(const ParamVector& model, const data::SampleView& data) {
  if (data.empty()) throw Error(ErrorCode::kEmptyDataset, "no samples");
  const auto& layers = model.layout().layers();
  if (layers.empty()) throw Error(ErrorCode::kDimensionMismatch, "model has no layers");
  if (layers.front().cols != data.table.input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "model input dim " +
                                                   std::to_string(layers.front().cols) +
                                                   " vs data dim " +
                                                   std::to_string(data.table.input_dim()));
  }
  if (layers.back().rows < data.table.num_classes()) {
    throw Error(ErrorCode::kDimensionMismatch, "model has fewer outputs than classes");
  }
}

// Returns -log p(label). Leaves probabilities in ws.act.back().
double forward(const ParamVector& model, std::span<const double> x, int label,
               Activation activation, Workspace& ws) {
  const auto& layout = model.layout();
  std::copy(x.begin(), x.end(), ws.act[0].begin());
  const std::size_t n_layers = layout.num_layers();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& shape = layout.layers()[l];
    const auto p = model.layer(l);
    const double* w = p.data();
    const double* b = p.data() + shape.rows * shape.cols;
    const auto& in = ws.act[l];
    auto& out = ws.act[l + 1];
    for (std::size_t r = 0; r < shape.rows; ++r) {
      const double* row = w + r * shape.cols;
      double z = b[r];
      for (std::size_t c = 0; c < shape.cols; ++c) z += row[c] * in[c];
      out[r] = z;
    }
    if (l + 1 < n_layers) {
      if (activation == Activation::kRelu) {
        for (auto& v : out) v = v > 0.0 ? v : 0.0;
      } else {
        for (auto& v : out) v = std::tanh(v);
      }
    }
  }
  auto& logits = ws.act[n_layers];
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  const double label_shifted = logits[static_cast<std::size_t>(label)] - max_logit;
  double sum = 0.0;
  for (auto& v : logits) {
    v = std::exp(v - max_logit);
    sum += v;
  }
  for (auto& v : logits) v /= sum;
  return std::log(sum) - label_shifted;
}

void backward(const ParamVector& model, int label, Activation activation, Workspace& ws,
              std::span<double> grad) {
  const auto& layout = model.layout();
  const std::size_t n_layers = layout.num_layers();
  ws.delta.assign(ws.act[n_layers].begin(), ws.act[n_layers].end());
  ws.delta[static_cast<std::size_t>(label)] -= 1.0;

  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& shape = layout.layers()[l];
    double* gw = grad.data() + layout.offset(l);
    double* gb = gw + shape.rows * shape.cols;
    const auto& in = ws.act[l];
    for (std::size_t r = 0; r < shape.rows; ++r) {
      const double d = ws.delta[r];
      if (d == 0.0) continue;
      double* grow = gw + r * shape.cols;
      for (std::size_t c = 0; c < shape.cols; ++c) grow[c] += d * in[c];
      gb[r] += d;
    }
    if (l == 0) break;
    const double* w = model.layer(l).data();
    ws.delta_prev.assign(shape.cols, 0.0);
    for (std::size_t r = 0; r < shape.rows; ++r) {
      const double d = ws.delta[r];
      if (d == 0.0) continue;
      const double* row = w + r * shape.cols;
      for (std::size_t c = 0; c < shape.cols; ++c) ws.delta_prev[c] += row[c] * d;
    }
    for (std::size_t c = 0; c < shape.cols; ++c) {
      const double a = in[c];
      ws.delta_prev[c] *= activation == Activation::kRelu ? (a > 0.0 ? 1.0 : 0.0) : 1.0 - a * a;
    }
    std::swap(ws.delta, ws.delta_prev);
  }
}

void check_label(const data::SampleTable& table, std::size_t idx, std::size_t classes) {
  const int y = table.label(idx);
  if (y < 0 || static_cast<std::size_t>(y) >= classes) {
    throw Error(ErrorCode::kDimensionMismatch, "label out of range for model");
  }
}

// Accumulates the summed (not averaged) gradient of `indices` into `grad`.
void accumulate_gradient(const ParamVector& model, const data::SampleTable& table,
                         std::span<const std::size_t> indices, Activation activation,
                         Workspace& ws, std::span<double> grad) {
  const std::size_t classes = model.layout().layers().back().rows;
  for (auto idx : indices) {
    check_label(table, idx, classes);
    const int y = table.label(idx);
    forward(model, table.features(idx), y, activation, ws);
    backward(model, y, activation, ws, grad);
  }
}

}  // namespace

ParamVector gradient(const ParamVector& model, data::SampleView batch, Activation activation) {
  check_input(model, batch);
  Workspace ws(model.layout());
  ParamVector grad(model.layout());
  accumulate_gradient(model, batch.table, batch.indices, activation, ws, grad.values());
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (auto& g : grad.values()) g *= scale;
  return grad;
}

double loss(const ParamVector& model, data::SampleView data, Activation activation) {
  check_input(model, data);
  Workspace ws(model.layout());
  const std::size_t classes = model.layout().layers().back().rows;
  double total = 0.0;
  for (auto idx : data.indices) {
    check_label(data.table, idx, classes);
    total += forward(model, data.table.features(idx), data.table.label(idx), activation, ws);
  }
  return total / static_cast<double>(data.size());
}

ParamVector local_train(const ParamVector& model, data::SampleView data,
                        const TrainConfig& cfg, Activation activation) {
  cfg.validate();
  check_input(model, data);
  ParamVector params = model;
  ParamVector grad(model.layout());
  Workspace ws(model.layout());
  std::vector<std::size_t> order(data.indices.begin(), data.indices.end());

  for (std::size_t e = 0; e < cfg.local_epochs; ++e) {
    const std::uint64_t epoch = cfg.epoch_offset + e;
    std::copy(data.indices.begin(), data.indices.end(), order.begin());
    Rng rng(derive_seed(cfg.seed, SeedDomain::kEpoch, epoch));
    rng.shuffle(std::span<std::size_t>(order));

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      std::fill(grad.values().begin(), grad.values().end(), 0.0);
      accumulate_gradient(params, data.table,
                          std::span<const std::size_t>(order).subspan(start, len), activation,
                          ws, grad.values());
      const double step = cfg.learning_rate / static_cast<double>(len);
      auto w = params.values();
      const auto g = grad.values();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * g[i];
    }
  }
  if (!params.all_finite()) {
    throw Error(ErrorCode::kNonFinite, "training diverged; lower the learning rate");
  }
  return params;
}

std::vector<double> predict_proba(const ParamVector& model, std::span<const double> x,
                                  Activation activation) {
  if (model.layout().num_layers() == 0 || model.layout().layers().front().cols != x.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "input length does not match model");
  }
  Workspace ws(model.layout());
  forward(model, x, 0, activation, ws);
  return ws.act.back();
}

namespace {

std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

Metrics evaluate(const ParamVector& model, data::SampleView data, Activation activation) {
  check_input(model, data);
  Workspace ws(model.layout());
  const std::size_t classes = model.layout().layers().back().rows;
  std::size_t correct = 0;
  double total_loss = 0.0;
  for (auto idx : data.indices) {
    check_label(data.table, idx, classes);
    const int y = data.table.label(idx);
    total_loss += forward(model, data.table.features(idx), y, activation, ws);
    if (argmax(ws.act.back()) == static_cast<std::size_t>(y)) ++correct;
  }
  const double n = static_cast<double>(data.size());
  return {static_cast<double>(correct) / n, total_loss / n};
}

std::vector<double> per_batch_accuracy(const ParamVector& model, data::SampleView data,
                                       std::size_t batch_size, Activation activation) {
  if (batch_size == 0) throw Error(ErrorCode::kInvalidParam, "batch_size must be >= 1");
  check_input(model, data);
  std::vector<double> out;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, data.size() - start);
    out.push_back(evaluate(model, {data.table, data.indices.subspan(start, len)}, activation)
                      .accuracy);
  }
  return out;
}

}  // namespace ddfl::nn
