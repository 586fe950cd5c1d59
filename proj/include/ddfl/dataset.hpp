#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ddfl::data {

// Immutable-after-load table of labeled samples, row-major features.
// Devices and the server queue refer to rows by index, so dispensing a sample
// moves an integer rather than copying its feature vector.
class SampleTable {
 public:
  SampleTable() = default;
  SampleTable(std::size_t input_dim, std::size_t num_classes)
      : input_dim_(input_dim), num_classes_(num_classes) {}

  // Throws DimensionMismatch on wrong feature length or out-of-range label.
  void add(std::span<const double> features, int label);
  void reserve(std::size_t n);

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t num_classes() const { return num_classes_; }

  std::span<const double> features(std::size_t i) const {
    return {features_.data() + i * input_dim_, input_dim_};
  }
  int label(std::size_t i) const { return labels_[i]; }
  std::span<const int> labels() const { return labels_; }

  std::vector<std::size_t> all_indices() const;

  bool operator==(const SampleTable&) const = default;

 private:
  std::size_t input_dim_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<double> features_;
  std::vector<int> labels_;
};

// A subset of a table, addressed by row indices. Non-owning.
struct SampleView {
  const SampleTable& table;
  std::span<const std::size_t> indices;

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
};

struct DatasetMeta {
  std::string name;
  std::size_t num_classes = 0;
  std::size_t input_dim = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

struct Dataset {
  SampleTable train;
  SampleTable test;
  DatasetMeta meta;
};

enum class CifarVariant { kCifar10, kCifar100 };

// Accepts "cifar10" / "cifar100"; anything else is UnknownVariant.
CifarVariant parse_cifar_variant(std::string_view name);

// Reads train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-images-idx3-ubyte
// and t10k-labels-idx1-ubyte from `dir`. Pixels are scaled by 1/255.
Dataset load_mnist(const std::filesystem::path& dir);

// One IDX image/label pair. Exposed for the loader tests.
SampleTable load_idx_pair(const std::filesystem::path& images,
                          const std::filesystem::path& labels,
                          std::size_t num_classes);

// CIFAR-10: data_batch_{1..5}.bin + test_batch.bin.
// CIFAR-100: train.bin + test.bin, fine label byte.
Dataset load_cifar(const std::filesystem::path& dir, CifarVariant variant);

// Reads one CIFAR binary file and appends its records to `out`.
void load_cifar_file(const std::filesystem::path& file, CifarVariant variant,
                     SampleTable& out);

// Gaussian class blobs clipped to [0,1]. `per_class` samples are generated for
// every class and split 80/20 (train/test) within the class.
Dataset make_synthetic(std::size_t num_classes, std::size_t per_class,
                       std::size_t input_dim, double spread, std::uint64_t seed,
                       double shear = 0.0);

// Unit vector of alternating sign: the extra noise axis used when shear > 0.
std::vector<double> synthetic_shear_axis(std::size_t input_dim);

// Mean vector used for class `c` by make_synthetic.
std::vector<double> synthetic_class_mean(std::size_t c, std::size_t input_dim);

std::vector<std::size_t> class_histogram(const SampleTable& table,
                                         std::span<const std::size_t> indices,
                                         std::size_t num_classes);
std::vector<std::size_t> class_histogram(std::span<const int> labels,
                                         std::size_t num_classes);

// Plain-text rows `label,f1,...,fd`.
void write_csv(const SampleTable& table, const std::filesystem::path& file);
SampleTable read_csv(const std::filesystem::path& file, std::size_t num_classes);

}  // namespace ddfl::data
