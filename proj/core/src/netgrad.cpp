#include "tabdistill/netgrad.hpp"

#include <cmath>
#include <charconv>
#include <random>
#include <sstream>

#include "tabdistill/error.hpp"
#include "tabdistill/rng.hpp"

namespace tabdistill {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "relu";
}

Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::relu;
  if (text == "tanh") return Activation::tanh;
  throw ValidationError("unknown activation '" + std::string(text) + "'");
}

ArchSpec ArchSpec::preset(std::string_view name, int hidden_width, Activation activation) {
  ArchSpec arch;
  arch.activation = activation;
  if (name == "1layer") {
    arch.widths = {2, 2};
  } else if (name == "2layer") {
    arch.widths = {2, hidden_width, 2};
  } else if (name == "4layer") {
    arch.widths = {2, hidden_width, hidden_width, hidden_width, 2};
  } else {
    throw ValidationError("unknown architecture preset '" + std::string(name) + "'");
  }
  arch.validate();
  return arch;
}

ArchSpec ArchSpec::parse(std::string_view text) {
  std::string_view body = text;
  Activation activation = Activation::relu;
  if (auto colon = text.find(':'); colon != std::string_view::npos) {
    body = text.substr(0, colon);
    activation = parse_activation(text.substr(colon + 1));
  }
  if (body == "1layer" || body == "2layer" || body == "4layer") {
    return preset(body, 16, activation);
  }
  ArchSpec arch;
  arch.activation = activation;
  std::size_t pos = 0;
  while (pos <= body.size()) {
    std::size_t dash = body.find('-', pos);
    std::string_view token = body.substr(pos, dash == std::string_view::npos ? body.npos : dash - pos);
    int w = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), w);
    if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) {
      throw ValidationError("malformed architecture '" + std::string(text) + "'");
    }
    arch.widths.push_back(w);
    if (dash == std::string_view::npos) break;
    pos = dash + 1;
  }
  arch.validate();
  return arch;
}

std::string ArchSpec::to_string() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (i) out << '-';
    out << widths[i];
  }
  out << ':' << tabdistill::to_string(activation);
  return out.str();
}

void ArchSpec::validate() const {
  if (widths.size() < 2) throw ValidationError("architecture needs at least two widths");
  for (int w : widths) {
    if (w <= 0) throw ValidationError("architecture widths must be positive");
  }
}

std::size_t ArchSpec::param_count() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    total += static_cast<std::size_t>(widths[l]) * widths[l + 1] + widths[l + 1];
  }
  return total;
}

// ---------------------------------------------------------------------------
// ParamVector

ParamVector::ParamVector(const ArchSpec& arch) : ParamVector(arch.widths, Vector::Zero(arch.param_count())) {}

ParamVector::ParamVector(std::vector<int> widths, Vector values)
    : widths_(std::move(widths)), values_(std::move(values)) {
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(off);
    off += static_cast<std::size_t>(widths_[l]) * widths_[l + 1] + widths_[l + 1];
  }
  if (off != static_cast<std::size_t>(values_.size())) {
    throw ValidationError("parameter count does not match layout");
  }
}

Eigen::Map<const Matrix> ParamVector::weight(std::size_t l) const {
  return {values_.data() + offsets_[l], widths_[l], widths_[l + 1]};
}
Eigen::Map<Matrix> ParamVector::weight(std::size_t l) {
  return {values_.data() + offsets_[l], widths_[l], widths_[l + 1]};
}
Eigen::Map<const Vector> ParamVector::bias(std::size_t l) const {
  return {values_.data() + offsets_[l] + static_cast<std::size_t>(widths_[l]) * widths_[l + 1],
          widths_[l + 1]};
}
Eigen::Map<Vector> ParamVector::bias(std::size_t l) {
  return {values_.data() + offsets_[l] + static_cast<std::size_t>(widths_[l]) * widths_[l + 1],
          widths_[l + 1]};
}

void ParamVector::check_layout(const ParamVector& other) const {
  if (!same_layout(other)) throw ValidationError("parameter layout mismatch");
}

ParamVector& ParamVector::operator+=(const ParamVector& rhs) {
  check_layout(rhs);
  values_ += rhs.values_;
  return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& rhs) {
  check_layout(rhs);
  values_ -= rhs.values_;
  return *this;
}

ParamVector& ParamVector::operator*=(double s) {
  values_ *= s;
  return *this;
}

ParamVector& ParamVector::axpy(double s, const ParamVector& rhs) {
  check_layout(rhs);
  values_ += s * rhs.values_;
  return *this;
}

double ParamVector::dot(const ParamVector& rhs) const {
  check_layout(rhs);
  return values_.dot(rhs.values_);
}

void LabeledBatch::validate(int classes) const {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ValidationError("feature rows and label count differ");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) throw ValidationError("label out of range");
  }
  if (!features.allFinite()) throw ValidationError("non-finite feature value");
}

// ---------------------------------------------------------------------------
// Model evaluation

ParamVector xavier_init(const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  ParamVector theta(arch);
  Rng rng(seed);
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    const double a = std::sqrt(6.0 / (arch.widths[l] + arch.widths[l + 1]));
    std::uniform_real_distribution<double> dist(-a, a);
    auto w = theta.weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    }
  }
  return theta;
}

namespace {

void check_inputs(const ArchSpec& arch, const ParamVector& theta, const Matrix& features) {
  if (!theta.matches(arch)) throw ValidationError("parameters do not match architecture " + arch.to_string());
  if (features.cols() != arch.input_width()) {
    throw ValidationError("feature width " + std::to_string(features.cols()) + " does not match input width " +
                          std::to_string(arch.input_width()));
  }
}

void check_batch(const ArchSpec& arch, const ParamVector& theta, const LabeledBatch& batch) {
  check_inputs(arch, theta, batch.features);
  if (batch.size() == 0) throw ValidationError("empty batch");
  if (static_cast<std::size_t>(batch.features.rows()) != batch.size()) {
    throw ValidationError("feature rows and label count differ");
  }
}

Matrix activate(Activation act, const Matrix& z) {
  if (act == Activation::relu) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

// sigma'(z), given z and sigma(z)
Matrix activation_slope(Activation act, const Matrix& z, const Matrix& a) {
  if (act == Activation::relu) return (z.array() > 0.0).cast<double>().matrix();
  return (1.0 - a.array().square()).matrix();
}

// sigma''(z), given sigma(z); zero for relu
Matrix activation_curvature(Activation act, const Matrix& a) {
  if (act == Activation::relu) return Matrix::Zero(a.rows(), a.cols());
  return (-2.0 * a.array() * (1.0 - a.array().square())).matrix();
}

struct ForwardCache {
  std::vector<Matrix> inputs;  // inputs[l] feeds layer l; inputs[0] = features
  std::vector<Matrix> pre;     // pre-activations of every layer; pre.back() = logits
};

ForwardCache run_forward(const ArchSpec& arch, const ParamVector& theta, const Matrix& features) {
  const std::size_t layers = arch.layer_count();
  ForwardCache cache;
  cache.inputs.reserve(layers);
  cache.pre.reserve(layers);
  cache.inputs.push_back(features);
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix z = cache.inputs[l] * theta.weight(l);
    z.rowwise() += theta.bias(l).transpose();
    if (l + 1 < layers) cache.inputs.push_back(activate(arch.activation, z));
    cache.pre.push_back(std::move(z));
  }
  return cache;
}

// Row-wise log-sum-exp and probabilities.
void log_softmax_parts(const Matrix& logits, Vector& lse, Matrix& probs) {
  const Eigen::Index n = logits.rows();
  lse.resize(n);
  probs.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double s = (logits.row(i).array() - mx).exp().sum();
    lse(i) = mx + std::log(s);
    probs.row(i) = (logits.row(i).array() - lse(i)).exp().matrix();
  }
}

double mean_cross_entropy(const Matrix& logits, const Vector& lse, const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    total += lse(static_cast<Eigen::Index>(i)) - logits(static_cast<Eigen::Index>(i), labels[i]);
  }
  return total / static_cast<double>(labels.size());
}

// dl/dlogits for the mean cross-entropy
Matrix logits_adjoint(const Matrix& probs, const std::vector<int>& labels) {
  Matrix delta = probs;
  for (std::size_t i = 0; i < labels.size(); ++i) delta(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
  delta /= static_cast<double>(labels.size());
  return delta;
}

}  // namespace

Matrix forward(const ArchSpec& arch, const ParamVector& theta, const Matrix& features) {
  check_inputs(arch, theta, features);
  return std::move(run_forward(arch, theta, features).pre.back());
}

Matrix softmax(const Matrix& logits) {
  Vector lse;
  Matrix probs;
  log_softmax_parts(logits, lse, probs);
  return probs;
}

std::vector<int> predict(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double loss(const ArchSpec& arch, const ParamVector& theta, const LabeledBatch& batch) {
  check_batch(arch, theta, batch);
  const Matrix logits = forward(arch, theta, batch.features);
  Vector lse;
  Matrix probs;
  log_softmax_parts(logits, lse, probs);
  return mean_cross_entropy(logits, lse, batch.labels);
}

double accuracy(const ArchSpec& arch, const ParamVector& theta, const LabeledBatch& batch) {
  check_batch(arch, theta, batch);
  const auto pred = predict(forward(arch, theta, batch.features));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == batch.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

LossGrad loss_and_grad(const ArchSpec& arch, const ParamVector& theta, const LabeledBatch& batch) {
  check_batch(arch, theta, batch);
  const std::size_t layers = arch.layer_count();
  const ForwardCache cache = run_forward(arch, theta, batch.features);

  Vector lse;
  Matrix probs;
  log_softmax_parts(cache.pre.back(), lse, probs);

  LossGrad out;
  out.loss = mean_cross_entropy(cache.pre.back(), lse, batch.labels);
  out.grad = ParamVector(arch);

  Matrix delta = logits_adjoint(probs, batch.labels);
  for (std::size_t l = layers; l-- > 0;) {
    out.grad.weight(l).noalias() = cache.inputs[l].transpose() * delta;
    out.grad.bias(l) = delta.colwise().sum().transpose();
    Matrix upstream = delta * theta.weight(l).transpose();
    if (l == 0) {
      out.grad_features = std::move(upstream);
    } else {
      delta = upstream.cwiseProduct(activation_slope(arch.activation, cache.pre[l - 1], cache.inputs[l]));
    }
  }
  return out;
}

ParamVector grad(const ArchSpec& arch, const ParamVector& theta, const LabeledBatch& batch) {
  return loss_and_grad(arch, theta, batch).grad;
}

// Forward-mode differentiation of the backprop computation along the
// parameter direction v. The tangent of dl/dtheta is H v (= v^T H by
// symmetry), and the tangent of dl/dfeatures is v^T d2l/(dtheta dfeatures).
SecondOrder second_order(const ArchSpec& arch, const ParamVector& theta, const LabeledBatch& batch,
                         const ParamVector& v) {
  check_batch(arch, theta, batch);
  if (!v.same_layout(theta)) throw ValidationError("direction layout does not match parameters");
  const std::size_t layers = arch.layer_count();
  const Eigen::Index rows = batch.features.rows();
  const ForwardCache cache = run_forward(arch, theta, batch.features);

  std::vector<Matrix> slope(layers);
  std::vector<Matrix> curvature(layers);
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    slope[l] = activation_slope(arch.activation, cache.pre[l], cache.inputs[l + 1]);
    curvature[l] = activation_curvature(arch.activation, cache.inputs[l + 1]);
  }

  // tangent forward
  std::vector<Matrix> d_inputs(layers);
  std::vector<Matrix> d_pre(layers);
  d_inputs[0] = Matrix::Zero(rows, batch.features.cols());
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix dz = cache.inputs[l] * v.weight(l);
    if (l > 0) dz.noalias() += d_inputs[l] * theta.weight(l);
    dz.rowwise() += v.bias(l).transpose();
    if (l + 1 < layers) d_inputs[l + 1] = slope[l].cwiseProduct(dz);
    d_pre[l] = std::move(dz);
  }

  Vector lse;
  Matrix probs;
  log_softmax_parts(cache.pre.back(), lse, probs);
  Matrix delta = logits_adjoint(probs, batch.labels);
  const Matrix& dlogits = d_pre.back();
  Matrix d_delta = probs.cwiseProduct(dlogits);
  const Vector inner = d_delta.rowwise().sum();
  d_delta -= probs.cwiseProduct(inner.replicate(1, probs.cols()));
  d_delta /= static_cast<double>(rows);

  SecondOrder out;
  out.hvp = ParamVector(arch);
  for (std::size_t l = layers; l-- > 0;) {
    auto hw = out.hvp.weight(l);
    hw.noalias() = cache.inputs[l].transpose() * d_delta;
    if (l > 0) hw.noalias() += d_inputs[l].transpose() * delta;
    out.hvp.bias(l) = d_delta.colwise().sum().transpose();

    Matrix upstream = delta * theta.weight(l).transpose();
    Matrix d_upstream = d_delta * theta.weight(l).transpose();
    d_upstream.noalias() += delta * v.weight(l).transpose();
    if (l == 0) {
      out.mixed = std::move(d_upstream);
    } else {
      const Matrix& s = slope[l - 1];
      Matrix next_delta = upstream.cwiseProduct(s);
      Matrix next_d_delta = d_upstream.cwiseProduct(s);
      if (arch.activation != Activation::relu) {
        next_d_delta += upstream.cwiseProduct(curvature[l - 1]).cwiseProduct(d_pre[l - 1]);
      }
      delta = std::move(next_delta);
      d_delta = std::move(next_d_delta);
    }
  }
  return out;
}

ParamVector hvp(const ArchSpec& arch, const ParamVector& theta, const LabeledBatch& batch, const ParamVector& v) {
  return second_order(arch, theta, batch, v).hvp;
}

Matrix mixed_vjp(const ArchSpec& arch, const ParamVector& theta, const LabeledBatch& batch, const ParamVector& v) {
  return second_order(arch, theta, batch, v).mixed;
}

}  // namespace tabdistill
