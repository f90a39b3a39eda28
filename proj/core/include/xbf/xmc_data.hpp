#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "xbf/types.hpp"

namespace xbf {

struct Feature {
  FeatureId index = 0;
  double value = 0.0;

  friend bool operator==(const Feature&, const Feature&) = default;
};

/// One example: sparse features and the ground-truth label set.
struct SparseInstance {
  std::size_t id = 0;                ///< 0-based line order in the source file
  std::vector<Feature> features;     ///< strictly increasing indices
  std::vector<LabelId> labels;       ///< sorted, unique

  [[nodiscard]] bool has_label(LabelId y) const;
  friend bool operator==(const SparseInstance&, const SparseInstance&) = default;
};

/// Immutable collection of instances over a fixed feature and label space.
class Dataset {
 public:
  Dataset() = default;
  /// Validates every instance against `num_features` / `num_labels`.
  Dataset(std::vector<SparseInstance> instances, std::size_t num_features, std::size_t num_labels);

  [[nodiscard]] std::size_t n() const { return instances_.size(); }
  [[nodiscard]] std::size_t d() const { return num_features_; }
  [[nodiscard]] std::size_t l_total() const { return num_labels_; }
  [[nodiscard]] bool empty() const { return instances_.empty(); }

  [[nodiscard]] const SparseInstance& operator[](std::size_t i) const { return instances_[i]; }
  [[nodiscard]] std::span<const SparseInstance> instances() const { return instances_; }

  /// Instances whose label set is empty. They are kept; metrics score them as zero.
  [[nodiscard]] std::size_t num_empty_label_sets() const { return empty_label_sets_; }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::vector<SparseInstance> instances_;
  std::size_t num_features_ = 0;
  std::size_t num_labels_ = 0;
  std::size_t empty_label_sets_ = 0;
};

/// Reads the Extreme Classification Repository text format:
///   N D L
///   l1,l2,...,lk f1:v1 f2:v2 ...
/// Labels and features are 0-based. A line starting with a space has no labels.
/// Throws ParseError with the offending line number, ConfigError if the file cannot be opened.
Dataset parse_dataset(const std::filesystem::path& path);
Dataset parse_dataset(std::istream& in);

/// Writes `ds` in the same format; values use the shortest round-trip representation.
void write_dataset(const Dataset& ds, std::ostream& out);
void write_dataset(const Dataset& ds, const std::filesystem::path& path);

/// Seeded uniform split: the first part holds ceil(alpha * n) instances.
/// Instances keep their original `id`.
std::pair<Dataset, Dataset> split_fraction(const Dataset& ds, double alpha, std::uint64_t seed);

/// N_y for every label y in [0, L).
std::vector<std::size_t> label_frequencies(const Dataset& ds);

struct DatasetSummary {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t l_total = 0;
  std::size_t empty_label_sets = 0;
  std::size_t used_labels = 0;
  double mean_labels_per_instance = 0.0;  ///< the L-bar column of XMC dataset tables
  double mean_instances_per_label = 0.0;  ///< the L-hat column, over labels with N_y > 0
  double mean_nnz = 0.0;
};

DatasetSummary summarize(const Dataset& ds);

}  // namespace xbf
