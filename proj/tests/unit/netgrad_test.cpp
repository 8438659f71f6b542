#include <cmath>
#include <numbers>

#include "doctest.h"
#include "support/oracles.hpp"
#include "tabdistill/error.hpp"
#include "tabdistill/netgrad.hpp"

using namespace tabdistill;
using namespace tabdistill::testing;

namespace {

std::vector<ArchSpec> all_archs() {
  std::vector<ArchSpec> out;
  for (auto act : {Activation::relu, Activation::tanh}) {
    for (auto name : {"1layer", "2layer", "4layer"}) out.push_back(ArchSpec::preset(name, 16, act));
  }
  return out;
}

// ParamVector with every coordinate set; layout from arch.
ParamVector params_of(const ArchSpec& arch, std::initializer_list<double> values) {
  ParamVector p(arch);
  REQUIRE(p.size() == values.size());
  std::copy(values.begin(), values.end(), p.values().data());
  return p;
}

}  // namespace

TEST_CASE("ArchSpec serialization") {
  const auto a = ArchSpec::parse("2-16-16-16-2:relu");
  CHECK(a.widths == std::vector<int>{2, 16, 16, 16, 2});
  CHECK(a.activation == Activation::relu);
  CHECK(a.to_string() == "2-16-16-16-2:relu");
  CHECK(ArchSpec::parse(a.to_string()) == a);
  CHECK(ArchSpec::parse("2-8-2:tanh").activation == Activation::tanh);
  CHECK(ArchSpec::parse("1layer").widths == std::vector<int>{2, 2});
  CHECK(ArchSpec::parse("4layer:tanh") == ArchSpec::preset("4layer", 16, Activation::tanh));
  CHECK(ArchSpec::parse("2-3").param_count() == 9);

  CHECK_THROWS_AS(ArchSpec::parse("2"), ValidationError);
  CHECK_THROWS_AS(ArchSpec::parse("2--2"), ValidationError);
  CHECK_THROWS_AS(ArchSpec::parse("2-0-2"), ValidationError);
  CHECK_THROWS_AS(ArchSpec::parse("2-2:sigmoid"), ValidationError);
  CHECK_THROWS_AS(ArchSpec::parse("3layer"), ValidationError);
}

TEST_CASE("xavier_init bounds, zero biases and determinism") {
  const auto arch = ArchSpec::preset("1layer");
  const ParamVector p = xavier_init(arch, 123);
  REQUIRE(p.size() == 6);
  const double a = std::sqrt(6.0 / 4.0);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(p.values()(i)) <= a);
  CHECK(p.bias(0).isZero(0.0));
  CHECK(xavier_init(arch, 123) == p);
  CHECK_FALSE(xavier_init(arch, 124) == p);
}

TEST_CASE("xavier_init first-layer variance matches 2/(fan_in+fan_out)") {
  // Monte-Carlo over 1e5 seeds; a^2/3 = 2/(2+16).
  const auto arch = ArchSpec::preset("2layer");
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 100000; ++seed) {
    const ParamVector p = xavier_init(arch, seed);
    const auto w = p.weight(0);
    sum += w.sum();
    sq += w.squaredNorm();
    count += static_cast<std::size_t>(w.size());
  }
  const double mean = sum / count;
  const double var = sq / count - mean * mean;
  const double expected = 2.0 / 18.0;
  CHECK(std::abs(var - expected) / expected < 0.05);
}

TEST_CASE("forward") {
  SUBCASE("zero parameters give zero logits") {
    for (const auto& arch : all_archs()) {
      Rng rng(1);
      const Matrix logits = forward(arch, ParamVector(arch), random_batch(rng, 5).features);
      CHECK(logits.rows() == 5);
      CHECK(logits.cols() == 2);
      CHECK(logits.isZero(0.0));
    }
  }
  SUBCASE("1-layer hand matmul") {
    const auto arch = ArchSpec::preset("1layer");
    // W = [[0.5, -1], [2, 0.25]] column-major, then b = [0.1, -0.2]
    const ParamVector theta = params_of(arch, {0.5, 2.0, -1.0, 0.25, 0.1, -0.2});
    Matrix x(2, 2);
    x << 1, 2, 3, 4;
    Matrix expected(2, 2);
    expected << 4.6, -0.7, 9.6, -2.2;
    CHECK((forward(arch, theta, x) - expected).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("zero input propagates biases only") {
    const auto arch = ArchSpec::parse("2-3-2:relu");
    Rng rng(5);
    const ParamVector theta = random_params(arch, rng, 1.0);
    const Vector hidden = theta.bias(0).cwiseMax(0.0);
    const Vector expected = theta.weight(1).transpose() * hidden + theta.bias(1);
    const Matrix logits = forward(arch, theta, Matrix::Zero(3, 2));
    for (int i = 0; i < 3; ++i) CHECK((logits.row(i).transpose() - expected).norm() < 1e-15);
  }
  SUBCASE("dimension mismatch") {
    const auto arch = ArchSpec::preset("2layer");
    CHECK_THROWS_AS(forward(arch, ParamVector(arch), Matrix::Zero(2, 3)), ValidationError);
    CHECK_THROWS_AS(forward(arch, ParamVector(ArchSpec::preset("1layer")), Matrix::Zero(2, 2)), ValidationError);
  }
}

TEST_CASE("loss") {
  const auto arch = ArchSpec::preset("2layer");
  Rng rng(7);
  const LabeledBatch balanced = random_batch(rng, 6);
  CHECK(loss(arch, ParamVector(arch), balanced) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));

  const auto lin = ArchSpec::preset("1layer");
  LabeledBatch easy;
  easy.features.resize(2, 2);
  easy.features << 5, 0, -5, 0;
  easy.labels = {0, 1};
  const ParamVector strong = params_of(lin, {10.0, 0.0, -10.0, 0.0, 0.0, 0.0});
  CHECK(loss(lin, strong, easy) < 0.01);
  CHECK(loss(lin, strong, easy) >= 0.0);

  LabeledBatch empty;
  empty.features.resize(0, 2);
  CHECK_THROWS_AS(loss(arch, ParamVector(arch), empty), ValidationError);
}

TEST_CASE("loss matches the reference evaluation") {
  for (const auto& arch : all_archs()) {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
      const ParamVector theta = random_params(arch, rng);
      const LabeledBatch b = random_batch(rng, 7);
      const double ref = ref_loss(ref_of(arch), ref_of(theta), ref_of(b));
      CHECK(rel_err(loss(arch, theta, b), ref, 1e-300) < 1e-12);
    }
  }
}

TEST_CASE("accuracy") {
  const auto lin = ArchSpec::preset("1layer");
  LabeledBatch easy;
  easy.features.resize(2, 2);
  easy.features << 5, 0, -5, 0;
  easy.labels = {0, 1};
  CHECK(accuracy(lin, params_of(lin, {10.0, 0.0, -10.0, 0.0, 0.0, 0.0}), easy) == 1.0);

  // zero parameters tie every row and the tie goes to class 0
  LabeledBatch mixed;
  mixed.features = Matrix::Ones(5, 2);
  mixed.labels = {0, 1, 1, 0, 1};
  CHECK(accuracy(lin, ParamVector(lin), mixed) == doctest::Approx(0.4));

  // identity weights: logits equal features
  LabeledBatch three;
  three.features.resize(3, 2);
  three.features << 1, 0, 0, 1, 2, 1;
  three.labels = {0, 1, 1};
  CHECK(accuracy(lin, params_of(lin, {1.0, 0.0, 0.0, 1.0, 0.0, 0.0}), three) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("grad at a stationary point") {
  // Class means coincide at the origin, so theta = 0 is stationary for the
  // linear model although the classes are separable by |x1| vs |x2|.
  const auto lin = ArchSpec::preset("1layer");
  LabeledBatch b;
  b.features.resize(4, 2);
  b.features << 1, 0, -1, 0, 0, 1, 0, -1;
  b.labels = {0, 0, 1, 1};
  CHECK(grad(lin, ParamVector(lin), b).norm() < 1e-8);
}

TEST_CASE("grad matches central finite differences of the reference loss") {
  // 100 instances per architecture/activation; instances whose stencil
  // crosses a relu kink are redrawn.
  for (const auto& arch : all_archs()) {
    CAPTURE(arch.to_string());
    Rng rng(fnv1a(arch.to_string()));
    int accepted = 0, worst_coord = -1;
    double worst = 0.0;
    while (accepted < 100) {
      const ParamVector theta = random_params(arch, rng);
      const LabeledBatch b = random_batch(rng, 6);
      const RefNet net = ref_of(arch);
      const RefBatch rb = ref_of(b);
      const ParamVector g = grad(arch, theta, b);
      std::vector<double> fd(theta.size());
      bool smooth = true;
      for (std::size_t i = 0; i < theta.size() && smooth; ++i) {
        auto d = smooth_central_difference(
            [&](double h, SignPattern* s) {
              auto p = ref_of(theta);
              p[i] += h;
              return ref_loss(net, p, rb, s);
            },
            1e-5);
        if (!d) smooth = false;
        else fd[i] = *d;
      }
      if (!smooth) continue;
      ++accepted;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double e = rel_err(g.values()(static_cast<Eigen::Index>(i)), fd[i]);
        if (e > worst) worst = e, worst_coord = static_cast<int>(i);
      }
      // and against the hand backprop of the oracle
      const auto rg = ref_grad(net, ref_of(theta), rb);
      CHECK(rel_norm_err(g.values(), Eigen::Map<const Vector>(rg.data(), static_cast<Eigen::Index>(rg.size()))) < 1e-12);
    }
    CAPTURE(worst_coord);
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("grad is invariant to duplicating the batch") {
  const auto arch = ArchSpec::preset("4layer");
  Rng rng(3);
  const ParamVector theta = random_params(arch, rng);
  const LabeledBatch b = random_batch(rng, 5);
  LabeledBatch twice;
  twice.features.resize(10, 2);
  twice.features << b.features, b.features;
  twice.labels = b.labels;
  twice.labels.insert(twice.labels.end(), b.labels.begin(), b.labels.end());
  CHECK(rel_norm_err(grad(arch, theta, b).values(), grad(arch, theta, twice).values()) < 1e-14);
}

TEST_CASE("hvp") {
  for (const auto& arch : all_archs()) {
    CAPTURE(arch.to_string());
    Rng rng(fnv1a("hvp" + arch.to_string()));
    const ParamVector theta = random_params(arch, rng);
    const LabeledBatch b = random_batch(rng, 6);

    CHECK(hvp(arch, theta, b, ParamVector(arch)).values().isZero(0.0));

    const ParamVector v1 = random_direction(arch, rng);
    const ParamVector v2 = random_direction(arch, rng);
    const Vector lhs = hvp(arch, theta, b, v1 + v2).values();
    const Vector rhs = hvp(arch, theta, b, v1).values() + hvp(arch, theta, b, v2).values();
    CHECK(rel_norm_err(lhs, rhs) < 1e-10);
    CHECK(rel_norm_err(hvp(arch, theta, b, 2.5 * v1).values(), 2.5 * hvp(arch, theta, b, v1).values()) < 1e-12);
  }
  CHECK_THROWS_AS(hvp(ArchSpec::preset("2layer"), ParamVector(ArchSpec::preset("2layer")), LabeledBatch{Matrix::Zero(2, 2), {0, 1}},
                      ParamVector(ArchSpec::preset("1layer"))),
                  ValidationError);
}

TEST_CASE("hvp and mixed_vjp match finite differences of grad") {
  for (const auto& arch : all_archs()) {
    CAPTURE(arch.to_string());
    Rng rng(fnv1a("so-fd" + arch.to_string()));
    const RefNet net = ref_of(arch);
    int accepted = 0;
    double worst_h = 0.0, worst_m = 0.0;
    while (accepted < 100) {
      const ParamVector theta = random_params(arch, rng);
      const LabeledBatch b = random_batch(rng, 6);
      const ParamVector v = random_direction(arch, rng);
      const double eps = 1e-4;

      // hvp: (grad(theta + eps v) - grad(theta - eps v)) / 2 eps
      SignPattern s0, sp, sm;
      const RefBatch rb = ref_of(b);
      ref_loss(net, ref_of(theta), rb, &s0);
      ref_loss(net, ref_of(theta + eps * v), rb, &sp);
      ref_loss(net, ref_of(theta - eps * v), rb, &sm);
      if (sp != s0 || sm != s0) continue;

      // mixed: d/dfeature <v, grad(theta, features)>
      Matrix fd_mixed(b.features.rows(), b.features.cols());
      bool smooth = true;
      for (Eigen::Index i = 0; i < b.features.rows() && smooth; ++i) {
        for (Eigen::Index c = 0; c < b.features.cols() && smooth; ++c) {
          auto d = smooth_central_difference(
              [&](double h, SignPattern* s) {
                LabeledBatch moved = b;
                moved.features(i, c) += h;
                ref_loss(net, ref_of(theta), ref_of(moved), s);
                return v.dot(grad(arch, theta, moved));
              },
              eps);
          if (!d) smooth = false;
          else fd_mixed(i, c) = *d;
        }
      }
      if (!smooth) continue;
      ++accepted;

      const Vector fd_h = (grad(arch, theta + eps * v, b).values() - grad(arch, theta - eps * v, b).values()) / (2 * eps);
      const SecondOrder so = second_order(arch, theta, b, v);
      worst_h = std::max(worst_h, rel_norm_err(so.hvp.values(), fd_h));
      worst_m = std::max(worst_m, rel_norm_err(Eigen::Map<const Vector>(so.mixed.data(), so.mixed.size()),
                                               Eigen::Map<const Vector>(fd_mixed.data(), fd_mixed.size())));
      for (Eigen::Index i = 0; i < fd_mixed.size(); ++i) CHECK(rel_err(so.mixed(i), fd_mixed(i)) < 1e-5);
      CHECK(so.hvp == hvp(arch, theta, b, v));
      CHECK(so.mixed == mixed_vjp(arch, theta, b, v));
    }
    CHECK(worst_h < 1e-5);
    CHECK(worst_m < 1e-5);
  }
}

TEST_CASE("mixed_vjp zero direction and dead relu rows") {
  const auto arch = ArchSpec::parse("2-4-2:relu");
  Rng rng(21);
  ParamVector theta = random_params(arch, rng);
  CHECK(mixed_vjp(arch, theta, random_batch(rng, 4), ParamVector(arch)).isZero(0.0));

  // positive first-layer weights, zero biases: inputs deep in the negative
  // quadrant switch every hidden unit off
  theta.weight(0) = theta.weight(0).cwiseAbs();
  theta.bias(0).setZero();
  LabeledBatch b;
  b.features.resize(4, 2);
  b.features << -10, -10, 1.0, 0.5, -8, -12, 0.7, 1.3;
  b.labels = {0, 1, 0, 1};
  const ParamVector v = random_direction(arch, rng);
  const Matrix mixed = mixed_vjp(arch, theta, b, v);
  CHECK(mixed.row(0).isZero(0.0));
  CHECK(mixed.row(2).isZero(0.0));
  CHECK_FALSE(mixed.row(1).isZero(0.0));

  // the same rows are zero under the finite-difference oracle
  for (Eigen::Index row : {0, 2}) {
    for (Eigen::Index c = 0; c < 2; ++c) {
      LabeledBatch plus = b, minus = b;
      plus.features(row, c) += 1e-4;
      minus.features(row, c) -= 1e-4;
      const double d = (v.dot(grad(arch, theta, plus)) - v.dot(grad(arch, theta, minus))) / 2e-4;
      CHECK(std::abs(d) < 1e-12);
    }
  }
}

TEST_CASE("derivative products are deterministic") {
  const auto arch = ArchSpec::preset("4layer", 16, Activation::tanh);
  Rng rng(9);
  const ParamVector theta = random_params(arch, rng);
  const LabeledBatch b = random_batch(rng, 8);
  const ParamVector v = random_direction(arch, rng);
  CHECK(forward(arch, theta, b.features) == forward(arch, theta, b.features));
  CHECK(loss(arch, theta, b) == loss(arch, theta, b));
  CHECK(grad(arch, theta, b) == grad(arch, theta, b));
  CHECK(hvp(arch, theta, b, v) == hvp(arch, theta, b, v));
  CHECK(mixed_vjp(arch, theta, b, v) == mixed_vjp(arch, theta, b, v));
}

TEST_CASE("ParamVector arithmetic") {
  const auto arch = ArchSpec::preset("2layer");
  Rng rng(4);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int trial = 0; trial < 20; ++trial) {
    ParamVector a(arch), b(arch), c(arch);
    for (auto* p : {&a, &b, &c}) {
      for (Eigen::Index i = 0; i < p->values().size(); ++i) p->values()(i) = u(rng);
    }
    const ParamVector left = (a + b) + c;
    const ParamVector right = a + (b + c);
    CHECK(left.same_layout(a));
    CHECK((left.values() - right.values()).cwiseAbs().maxCoeff() <= 1e-12 * 3e3);
    CHECK(rel_norm_err((2.0 * (a + b)).values(), (2.0 * a + 2.0 * b).values()) < 1e-15);
  }
  ParamVector small(ArchSpec::preset("1layer"));
  ParamVector big(arch);
  CHECK_THROWS_AS(big += small, ValidationError);
  CHECK_THROWS_AS(big.dot(small), ValidationError);
}
