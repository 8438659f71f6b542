#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tabdistill/netgrad.hpp"

namespace tabdistill {

enum class SplitTag { full, train, test };

std::string_view to_string(SplitTag tag);
SplitTag parse_split_tag(std::string_view text);

/// Per-feature affine map x -> (x - mean) / scale fitted on a training part.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;
};

struct Provenance {
  std::string generator = "two_moons";
  int n_total = 0;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> train_fraction;
  std::optional<std::uint64_t> split_seed;
  std::optional<Standardization> standardization;
};

/// Tabular objects with class labels. row_ids identify rows of the full set
/// the part was cut from.
struct Dataset {
  Matrix features;
  std::vector<int> labels;
  SplitTag split = SplitTag::full;
  std::vector<std::size_t> row_ids;
  Provenance provenance;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_count() const { return static_cast<std::size_t>(features.cols()); }
  void validate() const;

  LabeledBatch as_batch() const { return {features, labels}; }
  LabeledBatch rows(std::span<const std::size_t> indices) const;
};

/// Wraps an externally loaded table as a full dataset.
Dataset make_dataset(Matrix features, std::vector<int> labels, std::string generator);

/// Two interleaved unit half-circles: class 0 on (cos t, sin t), class 1 on
/// (1 - cos t, 0.5 - sin t), t evenly spaced over [0, pi], then isotropic
/// Gaussian noise and a seeded row shuffle.
Dataset generate_moons(int n_total, double noise_std, std::uint64_t seed);

/// Stratified split; each class contributes round(fraction * count) rows to
/// the training part. Rows keep their relative order within each part.
std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed);

/// Fits mean / population std on train and applies the map to both parts.
std::pair<Dataset, Dataset> standardize(const Dataset& train, const Dataset& test);

/// Applies given constants (e.g. to a table loaded from disk).
Dataset apply_standardization(const Dataset& data, const Standardization& s);

}  // namespace tabdistill
