#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"
#include "tabdistill/datagen.hpp"
#include "tabdistill/error.hpp"
#include "tabdistill/evalharness.hpp"

using namespace tabdistill;

namespace {

int count_label(const Dataset& d, int label) { return static_cast<int>(std::count(d.labels.begin(), d.labels.end(), label)); }

Dataset table(std::initializer_list<std::pair<double, double>> rows, std::vector<int> labels) {
  Matrix x(static_cast<Eigen::Index>(rows.size()), 2);
  Eigen::Index i = 0;
  for (auto [a, b] : rows) x(i, 0) = a, x(i, 1) = b, ++i;
  return make_dataset(std::move(x), std::move(labels), "table");
}

}  // namespace

TEST_CASE("generate_moons counts and validation") {
  const Dataset d = generate_moons(1500, 0.15, 42);
  CHECK(d.size() == 1500);
  CHECK(d.feature_count() == 2);
  CHECK(count_label(d, 0) == 750);
  CHECK(count_label(d, 1) == 750);
  CHECK(d.split == SplitTag::full);
  CHECK(d.provenance.seed == 42);
  CHECK(d.provenance.noise_std == 0.15);
  CHECK_NOTHROW(d.validate());

  CHECK(generate_moons(2, 0.0, 1).size() == 2);
  CHECK_THROWS_AS(generate_moons(1501, 0.15, 42), ValidationError);
  CHECK_THROWS_AS(generate_moons(0, 0.15, 42), ValidationError);
  CHECK_THROWS_AS(generate_moons(10, -0.1, 42), ValidationError);
}

TEST_CASE("noiseless moons lie on the arcs") {
  const Dataset d = generate_moons(1500, 0.0, 3);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double x = d.features(static_cast<Eigen::Index>(i), 0);
    const double y = d.features(static_cast<Eigen::Index>(i), 1);
    if (d.labels[i] == 0) {
      CHECK(std::abs(std::hypot(x, y) - 1.0) < 1e-12);
      CHECK(y >= -1e-15);
    } else {
      // reflected and shifted frame: centre (1, 0.5), lower half
      CHECK(std::abs(std::hypot(x - 1.0, y - 0.5) - 1.0) < 1e-12);
      CHECK(y <= 0.5 + 1e-15);
    }
  }
}

TEST_CASE("generation is deterministic") {
  const Dataset a = generate_moons(300, 0.15, 9);
  const Dataset b = generate_moons(300, 0.15, 9);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK_FALSE(generate_moons(300, 0.15, 10).features == a.features);
}

TEST_CASE("split partitions and stratifies") {
  const Dataset d = generate_moons(1500, 0.15, 42);
  const auto [train, test] = split(d, 2.0 / 3.0, 43);
  CHECK(train.size() == 1000);
  CHECK(test.size() == 500);
  CHECK(train.split == SplitTag::train);
  CHECK(test.split == SplitTag::test);
  CHECK(count_label(train, 0) == 500);

  std::set<std::size_t> ids(train.row_ids.begin(), train.row_ids.end());
  for (auto id : test.row_ids) CHECK(ids.insert(id).second);
  CHECK(ids.size() == 1500);
  CHECK(*ids.rbegin() == 1499);

  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto id = static_cast<Eigen::Index>(train.row_ids[i]);
    CHECK(train.features.row(static_cast<Eigen::Index>(i)) == d.features.row(id));
    CHECK(train.labels[i] == d.labels[static_cast<std::size_t>(id)]);
  }
  // relative order kept
  CHECK(std::is_sorted(train.row_ids.begin(), train.row_ids.end()));
  CHECK(std::is_sorted(test.row_ids.begin(), test.row_ids.end()));

  const auto [train2, test2] = split(d, 2.0 / 3.0, 43);
  CHECK(train2.row_ids == train.row_ids);
  CHECK(train2.features == train.features);
}

TEST_CASE("split rounding stays within one of the exact proportion") {
  const Dataset d = generate_moons(14, 0.1, 5);  // 7 per class
  for (double f : {0.1, 0.3, 0.5, 2.0 / 3.0, 0.9}) {
    const auto [train, test] = split(d, f, 1);
    for (int c : {0, 1}) {
      CHECK(std::abs(count_label(train, c) - f * 7.0) <= 1.0);
      CHECK(count_label(train, c) + count_label(test, c) == 7);
    }
  }
  CHECK_THROWS_AS(split(d, 0.0, 1), ValidationError);
  CHECK_THROWS_AS(split(d, 1.0, 1), ValidationError);
  CHECK_THROWS_AS(split(d, -0.5, 1), ValidationError);
}

TEST_CASE("standardize hand case") {
  // feature 1: 1,2,3,4 -> mean 2.5, std sqrt(1.25); feature 2: 0,0,2,2 -> mean 1, std 1
  const Dataset train = table({{1, 0}, {2, 0}, {3, 2}, {4, 2}}, {0, 1, 0, 1});
  const Dataset test = table({{2.5, 3}}, {1});
  const auto [st, se] = standardize(train, test);
  const double s1 = std::sqrt(1.25);
  const double expected[4][2] = {{-1.5 / s1, -1}, {-0.5 / s1, -1}, {0.5 / s1, 1}, {1.5 / s1, 1}};
  for (int i = 0; i < 4; ++i) {
    for (int c = 0; c < 2; ++c) CHECK(std::abs(st.features(i, c) - expected[i][c]) < 1e-12);
  }
  CHECK(std::abs(se.features(0, 0)) < 1e-12);
  CHECK(std::abs(se.features(0, 1) - 2.0) < 1e-12);
  REQUIRE(st.provenance.standardization.has_value());
  CHECK(st.provenance.standardization->mean[0] == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(std::abs(st.provenance.standardization->scale[0] - s1) < 1e-12);
  REQUIRE(se.provenance.standardization.has_value());
  CHECK(se.provenance.standardization->scale == st.provenance.standardization->scale);

  const Dataset again = apply_standardization(test, *st.provenance.standardization);
  CHECK(again.features == se.features);
}

TEST_CASE("standardized train has zero mean and unit std; second fit is identity") {
  const Dataset d = generate_moons(1500, 0.15, 42);
  const auto [train, test] = split(d, 2.0 / 3.0, 43);
  const auto [st, se] = standardize(train, test);
  for (Eigen::Index c = 0; c < 2; ++c) {
    const double mean = st.features.col(c).mean();
    const double var = (st.features.col(c).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
  }
  const auto [st2, se2] = standardize(st, se);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(std::abs(st2.provenance.standardization->mean[c]) < 1e-9);
    CHECK(std::abs(st2.provenance.standardization->scale[c] - 1.0) < 1e-9);
  }
  CHECK((st2.features - st.features).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("constant feature is rejected") {
  const Dataset train = table({{1, 5}, {2, 5}, {3, 5}}, {0, 1, 0});
  CHECK_THROWS_AS(standardize(train, train), ValidationError);
}

TEST_CASE("noiseless moons are not linearly separable") {
  // linear model trained long past convergence on the full noiseless set
  const Dataset d = generate_moons(1500, 0.0, 42);
  RealTrainingSettings settings;
  settings.epochs = 1000;
  settings.lr = 0.5;
  const TrainedModel m = train_on_real(ArchSpec::preset("1layer"), d, d, settings, 1);
  const double acc = accuracy(ArchSpec::preset("1layer"), m.theta, d.as_batch());
  CHECK(acc < 0.95);
  CHECK(acc > 0.7);
}
