#include "ddfl/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ddfl/error.hpp"
#include "ddfl/rng.hpp"

namespace ddfl::data {

void SampleTable::add(std::span<const double> features, int label) {
  if (features.size() != input_dim_) {
    throw Error(ErrorCode::kDimensionMismatch, "feature length " +
                                                   std::to_string(features.size()) +
                                                   " != input_dim " + std::to_string(input_dim_));
  }
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes_) {
    throw Error(ErrorCode::kDimensionMismatch, "label " + std::to_string(label) +
                                                   " outside [0, " +
                                                   std::to_string(num_classes_) + ")");
  }
  features_.insert(features_.end(), features.begin(), features.end());
  labels_.push_back(label);
}

void SampleTable::reserve(std::size_t n) {
  features_.reserve(n * input_dim_);
  labels_.reserve(n);
}

std::vector<std::size_t> SampleTable::all_indices() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

CifarVariant parse_cifar_variant(std::string_view name) {
  if (name == "cifar10") return CifarVariant::kCifar10;
  if (name == "cifar100") return CifarVariant::kCifar100;
  throw Error(ErrorCode::kUnknownVariant, "unknown CIFAR variant '" + std::string(name) + "'");
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kDatasetMissing, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr std::size_t kCifarPixels = 3072;

}  // namespace

SampleTable load_idx_pair(const std::filesystem::path& images,
                          const std::filesystem::path& labels, std::size_t num_classes) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);

  if (img.size() < 16) throw Error(ErrorCode::kTruncatedFile, images.string() + ": short header");
  if (lab.size() < 8) throw Error(ErrorCode::kTruncatedFile, labels.string() + ": short header");
  if (read_be32(img, 0) != kIdxImageMagic) {
    throw Error(ErrorCode::kBadMagic, images.string() + ": expected 0x00000803");
  }
  if (read_be32(lab, 0) != kIdxLabelMagic) {
    throw Error(ErrorCode::kBadMagic, labels.string() + ": expected 0x00000801");
  }

  const std::size_t count = read_be32(img, 4);
  const std::size_t rows = read_be32(img, 8);
  const std::size_t cols = read_be32(img, 12);
  const std::size_t label_count = read_be32(lab, 4);
  if (count != label_count) {
    throw Error(ErrorCode::kCountMismatch, std::to_string(count) + " images vs " +
                                               std::to_string(label_count) + " labels");
  }
  const std::size_t dim = rows * cols;
  if (img.size() < 16 + count * dim) throw Error(ErrorCode::kTruncatedFile, images.string());
  if (lab.size() < 8 + count) throw Error(ErrorCode::kTruncatedFile, labels.string());

  SampleTable table(dim, num_classes);
  table.reserve(count);
  std::vector<double> px(dim);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* src = img.data() + 16 + i * dim;
    for (std::size_t j = 0; j < dim; ++j) px[j] = src[j] / 255.0;
    table.add(px, lab[8 + i]);
  }
  return table;
}

Dataset load_mnist(const std::filesystem::path& dir) {
  Dataset ds;
  ds.train = load_idx_pair(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", 10);
  ds.test = load_idx_pair(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", 10);
  ds.meta = {"mnist", 10, ds.train.input_dim(), ds.train.size(), ds.test.size()};
  return ds;
}

void load_cifar_file(const std::filesystem::path& file, CifarVariant variant, SampleTable& out) {
  const auto bytes = read_file(file);
  const std::size_t label_bytes = variant == CifarVariant::kCifar10 ? 1 : 2;
  const std::size_t record = label_bytes + kCifarPixels;
  if (bytes.size() < record || bytes.size() % record != 0) {
    throw Error(ErrorCode::kTruncatedFile, file.string() + ": size " +
                                               std::to_string(bytes.size()) +
                                               " is not a multiple of record size " +
                                               std::to_string(record));
  }
  const std::size_t n = bytes.size() / record;
  out.reserve(out.size() + n);
  std::vector<double> px(kCifarPixels);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * record;
    // CIFAR-100 records carry (coarse, fine); the fine label is the class.
    const int label = rec[label_bytes - 1];
    for (std::size_t j = 0; j < kCifarPixels; ++j) px[j] = rec[label_bytes + j] / 255.0;
    out.add(px, label);
  }
}

Dataset load_cifar(const std::filesystem::path& dir, CifarVariant variant) {
  Dataset ds;
  const std::size_t classes = variant == CifarVariant::kCifar10 ? 10 : 100;
  ds.train = SampleTable(kCifarPixels, classes);
  ds.test = SampleTable(kCifarPixels, classes);
  if (variant == CifarVariant::kCifar10) {
    for (int b = 1; b <= 5; ++b) {
      load_cifar_file(dir / ("data_batch_" + std::to_string(b) + ".bin"), variant, ds.train);
    }
    load_cifar_file(dir / "test_batch.bin", variant, ds.test);
  } else {
    load_cifar_file(dir / "train.bin", variant, ds.train);
    load_cifar_file(dir / "test.bin", variant, ds.test);
  }
  ds.meta = {variant == CifarVariant::kCifar10 ? "cifar10" : "cifar100", classes, kCifarPixels,
             ds.train.size(), ds.test.size()};
  return ds;
}

std::vector<double> synthetic_class_mean(std::size_t c, std::size_t input_dim) {
  // One-hot vertices while c < d; later classes add a second, weaker axis so
  // every class mean stays distinct for any C.
  std::vector<double> mean(input_dim, 0.2);
  mean[c % input_dim] += 0.6;
  if (c >= input_dim) mean[(c + c / input_dim) % input_dim] += 0.3;
  return mean;
}

std::vector<double> synthetic_shear_axis(std::size_t input_dim) {
  std::vector<double> axis(input_dim);
  const double norm = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (std::size_t j = 0; j < input_dim; ++j) axis[j] = j % 2 == 0 ? norm : -norm;
  return axis;
}

Dataset make_synthetic(std::size_t num_classes, std::size_t per_class, std::size_t input_dim,
                       double spread, std::uint64_t seed, double shear) {
  if (num_classes < 2 || per_class < 2 || input_dim < 2) {
    throw Error(ErrorCode::kInvalidParam, "synthetic data needs C >= 2, n >= 2, d >= 2");
  }
  if (!(spread >= 0.0) || !std::isfinite(spread)) {
    throw Error(ErrorCode::kInvalidParam, "spread must be finite and >= 0");
  }
  if (!(shear >= 0.0) || !std::isfinite(shear)) {
    throw Error(ErrorCode::kInvalidParam, "shear must be finite and >= 0");
  }
  const std::size_t n_test =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.2 * per_class)));
  const std::size_t n_train = per_class - n_test;

  struct Row {
    std::vector<double> x;
    int y;
  };
  std::vector<Row> train_rows;
  std::vector<Row> test_rows;
  Rng rng(derive_seed(seed, SeedDomain::kSynthetic));
  // Covariance is spread^2 (I + shear^2 a a^T), shared by all classes. With
  // shear > 0 the nearest-mean rule is no longer optimal, so a model has to see
  // several classes at once to learn to discount the axis.
  const auto axis = synthetic_shear_axis(input_dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto mean = synthetic_class_mean(c, input_dim);
    for (std::size_t i = 0; i < per_class; ++i) {
      Row row{std::vector<double>(input_dim), static_cast<int>(c)};
      const double g = shear > 0.0 ? spread * shear * rng.normal() : 0.0;
      for (std::size_t j = 0; j < input_dim; ++j) {
        row.x[j] = std::clamp(mean[j] + spread * rng.normal() + g * axis[j], 0.0, 1.0);
      }
      (i < n_train ? train_rows : test_rows).push_back(std::move(row));
    }
  }
  rng.shuffle(std::span<Row>(train_rows));
  rng.shuffle(std::span<Row>(test_rows));

  Dataset ds;
  ds.train = SampleTable(input_dim, num_classes);
  ds.test = SampleTable(input_dim, num_classes);
  for (const auto& r : train_rows) ds.train.add(r.x, r.y);
  for (const auto& r : test_rows) ds.test.add(r.x, r.y);
  ds.meta = {"synthetic", num_classes, input_dim, ds.train.size(), ds.test.size()};
  return ds;
}

std::vector<std::size_t> class_histogram(const SampleTable& table,
                                         std::span<const std::size_t> indices,
                                         std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (auto i : indices) {
    const int y = table.label(i);
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw Error(ErrorCode::kDimensionMismatch, "label outside histogram range");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

std::vector<std::size_t> class_histogram(std::span<const int> labels, std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw Error(ErrorCode::kDimensionMismatch, "label outside histogram range");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

void write_csv(const SampleTable& table, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + file.string());
  char buf[32];
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.label(i);
    for (double v : table.features(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + file.string());
}

SampleTable read_csv(const std::filesystem::path& file, std::size_t num_classes) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kDatasetMissing, "cannot open " + file.string());
  SampleTable table;
  bool first = true;
  std::string line;
  std::vector<double> x;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    const int label = std::stoi(cell);
    x.clear();
    while (std::getline(ss, cell, ',')) x.push_back(std::stod(cell));
    if (first) {
      table = SampleTable(x.size(), num_classes);
      first = false;
    }
    table.add(x, label);
  }
  return table;
}

}  // namespace ddfl::data
