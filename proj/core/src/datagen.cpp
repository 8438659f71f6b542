#include "tabdistill/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "tabdistill/error.hpp"
#include "tabdistill/rng.hpp"

namespace tabdistill {

std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::full: return "full";
    case SplitTag::train: return "train";
    case SplitTag::test: return "test";
  }
  return "full";
}

SplitTag parse_split_tag(std::string_view text) {
  if (text == "full") return SplitTag::full;
  if (text == "train") return SplitTag::train;
  if (text == "test") return SplitTag::test;
  throw ValidationError("unknown split tag '" + std::string(text) + "'");
}

void Dataset::validate() const {
  if (labels.empty()) throw ValidationError("dataset is empty");
  as_batch().validate();
  if (row_ids.size() != labels.size()) throw ValidationError("row id count differs from row count");
}

LabeledBatch Dataset::rows(std::span<const std::size_t> indices) const {
  LabeledBatch batch;
  batch.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  batch.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    batch.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(indices[i]));
    batch.labels.push_back(labels[indices[i]]);
  }
  return batch;
}

Dataset make_dataset(Matrix features, std::vector<int> labels, std::string generator) {
  Dataset d;
  d.features = std::move(features);
  d.labels = std::move(labels);
  d.row_ids.resize(d.labels.size());
  std::iota(d.row_ids.begin(), d.row_ids.end(), std::size_t{0});
  d.provenance.generator = std::move(generator);
  d.provenance.n_total = static_cast<int>(d.labels.size());
  d.validate();
  return d;
}

Dataset generate_moons(int n_total, double noise_std, std::uint64_t seed) {
  if (n_total < 2 || n_total % 2 != 0) throw ValidationError("n_total must be even and at least 2");
  if (!(noise_std >= 0.0)) throw ValidationError("noise_std must be non-negative");

  const int per_class = n_total / 2;
  Matrix points(n_total, 2);
  std::vector<int> labels(static_cast<std::size_t>(n_total));
  for (int i = 0; i < per_class; ++i) {
    const double t = per_class == 1 ? 0.0 : std::numbers::pi * i / (per_class - 1);
    points(i, 0) = std::cos(t);
    points(i, 1) = std::sin(t);
    labels[static_cast<std::size_t>(i)] = 0;
    points(per_class + i, 0) = 1.0 - std::cos(t);
    points(per_class + i, 1) = 0.5 - std::sin(t);
    labels[static_cast<std::size_t>(per_class + i)] = 1;
  }

  Rng rng(seed);
  if (noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_std);
    for (int i = 0; i < n_total; ++i) {
      points(i, 0) += noise(rng);
      points(i, 1) += noise(rng);
    }
  }

  std::vector<std::size_t> order(static_cast<std::size_t>(n_total));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  Dataset d;
  d.features.resize(n_total, 2);
  d.labels.resize(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    d.features.row(static_cast<Eigen::Index>(i)) = points.row(static_cast<Eigen::Index>(order[i]));
    d.labels[i] = labels[order[i]];
  }
  d.row_ids.resize(order.size());
  std::iota(d.row_ids.begin(), d.row_ids.end(), std::size_t{0});
  d.provenance.generator = "two_moons";
  d.provenance.n_total = n_total;
  d.provenance.noise_std = noise_std;
  d.provenance.seed = seed;
  return d;
}

namespace {

Dataset take_rows(const Dataset& data, const std::vector<std::size_t>& idx, SplitTag tag) {
  Dataset part;
  LabeledBatch b = data.rows(idx);
  part.features = std::move(b.features);
  part.labels = std::move(b.labels);
  part.split = tag;
  part.row_ids.reserve(idx.size());
  for (std::size_t i : idx) part.row_ids.push_back(data.row_ids[i]);
  part.provenance = data.provenance;
  return part;
}

}  // namespace

std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train fraction must lie in (0, 1)");
  data.validate();

  const int classes = *std::max_element(data.labels.begin(), data.labels.end()) + 1;
  std::vector<char> in_train(data.size(), 0);
  Rng rng(seed);
  for (int c = 0; c < classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.labels[i] == c) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);
    const auto take = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    for (std::size_t k = 0; k < take; ++k) in_train[members[k]] = 1;
  }

  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < data.size(); ++i) (in_train[i] ? train_idx : test_idx).push_back(i);

  auto train = take_rows(data, train_idx, SplitTag::train);
  auto test = take_rows(data, test_idx, SplitTag::test);
  for (Dataset* part : {&train, &test}) {
    part->provenance.train_fraction = train_fraction;
    part->provenance.split_seed = seed;
  }
  return {std::move(train), std::move(test)};
}

Dataset apply_standardization(const Dataset& data, const Standardization& s) {
  if (s.mean.size() != data.feature_count() || s.scale.size() != data.feature_count()) {
    throw ValidationError("standardization constants do not match feature count");
  }
  Dataset out = data;
  for (Eigen::Index j = 0; j < out.features.cols(); ++j) {
    const auto ju = static_cast<std::size_t>(j);
    out.features.col(j) = ((out.features.col(j).array() - s.mean[ju]) / s.scale[ju]).matrix();
  }
  out.provenance.standardization = s;
  return out;
}

std::pair<Dataset, Dataset> standardize(const Dataset& train, const Dataset& test) {
  train.validate();
  test.validate();
  if (train.feature_count() != test.feature_count()) throw ValidationError("train and test feature counts differ");

  Standardization s;
  const auto n = static_cast<double>(train.size());
  for (Eigen::Index j = 0; j < train.features.cols(); ++j) {
    const double mean = train.features.col(j).sum() / n;
    const double var = (train.features.col(j).array() - mean).square().sum() / n;
    const double scale = std::sqrt(var);
    if (!(scale > 0.0)) throw ValidationError("feature " + std::to_string(j) + " has zero variance");
    s.mean.push_back(mean);
    s.scale.push_back(scale);
  }
  return {apply_standardization(train, s), apply_standardization(test, s)};
}

}  // namespace tabdistill
