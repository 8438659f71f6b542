#pragma once

// Fully connected classifiers with exact first- and second-order derivative
// products of the mean softmax cross-entropy.
//
// Conventions:
//   * feature matrices are row-per-object (N x d);
//   * layer l computes Z_l = A_l W_l + 1 b_l^T with W_l stored in x out;
//   * the activation is applied between layers, never after the last one;
//   * relu'(0) = 0 and relu'' = 0 everywhere.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace tabdistill {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { relu, tanh };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view text);

/// Layer widths (input first, classes last) plus the hidden activation.
/// Serialized as "2-16-16-16-2:relu".
struct ArchSpec {
  std::vector<int> widths;
  Activation activation = Activation::relu;

  /// Accepts the serialized form or one of the presets "1layer", "2layer",
  /// "4layer" (optionally suffixed ":tanh").
  static ArchSpec parse(std::string_view text);
  static ArchSpec preset(std::string_view name, int hidden_width = 16,
                         Activation activation = Activation::relu);

  std::string to_string() const;
  void validate() const;

  std::size_t layer_count() const { return widths.empty() ? 0 : widths.size() - 1; }
  std::size_t param_count() const;
  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

/// Flat parameter vector laid out as W_0, b_0, W_1, b_1, ... Each W_l is a
/// column-major in x out block. Two vectors built for the same widths share
/// the layout, which makes elementwise arithmetic meaningful.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(const ArchSpec& arch);
  ParamVector(std::vector<int> widths, Vector values);

  const Vector& values() const { return values_; }
  Vector& values() { return values_; }
  const std::vector<int>& widths() const { return widths_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  std::size_t layer_count() const { return widths_.empty() ? 0 : widths_.size() - 1; }

  Eigen::Map<const Matrix> weight(std::size_t layer) const;
  Eigen::Map<Matrix> weight(std::size_t layer);
  Eigen::Map<const Vector> bias(std::size_t layer) const;
  Eigen::Map<Vector> bias(std::size_t layer);

  bool same_layout(const ParamVector& other) const { return widths_ == other.widths_; }
  bool matches(const ArchSpec& arch) const { return widths_ == arch.widths; }

  ParamVector& operator+=(const ParamVector& rhs);
  ParamVector& operator-=(const ParamVector& rhs);
  ParamVector& operator*=(double s);
  /// this += s * rhs
  ParamVector& axpy(double s, const ParamVector& rhs);

  double dot(const ParamVector& rhs) const;
  double norm() const { return values_.norm(); }
  bool all_finite() const { return values_.allFinite(); }

  friend ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
  friend ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
  friend ParamVector operator*(double s, ParamVector a) { return a *= s; }
  friend bool operator==(const ParamVector& a, const ParamVector& b) {
    return a.widths_ == b.widths_ && a.values_ == b.values_;
  }

 private:
  void check_layout(const ParamVector& other) const;

  std::vector<int> widths_;
  std::vector<std::size_t> offsets_;  // start of W_l; b_l follows it
  Vector values_;
};

/// Objects (rows) with class indices. Labels are in [0, classes).
struct LabeledBatch {
  Matrix features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  /// Shape agreement, label range and finiteness.
  void validate(int classes = 2) const;
};

/// Uniform Xavier/Glorot: W ~ U[-a, a], a = sqrt(6 / (fan_in + fan_out)),
/// zero biases.
ParamVector xavier_init(const ArchSpec& arch, std::uint64_t seed);

Matrix forward(const ArchSpec& arch, const ParamVector& theta, const Matrix& features);

double loss(const ArchSpec& arch, const ParamVector& theta, const LabeledBatch& batch);

/// Fraction of rows whose argmax logit equals the label; ties go to the
/// lowest class index.
double accuracy(const ArchSpec& arch, const ParamVector& theta, const LabeledBatch& batch);

/// Row-wise argmax with ties resolved toward the lowest index.
std::vector<int> predict(const Matrix& logits);

/// Row-wise softmax.
Matrix softmax(const Matrix& logits);

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
  Matrix grad_features;  // dl / d features
};

LossGrad loss_and_grad(const ArchSpec& arch, const ParamVector& theta, const LabeledBatch& batch);

ParamVector grad(const ArchSpec& arch, const ParamVector& theta, const LabeledBatch& batch);

/// Both second-order products for one direction v in parameter space:
///   hvp   = v^T d2l/dtheta2
///   mixed = v^T d2l/(dtheta dfeatures), shaped like batch.features
/// Computed in a single forward-mode sweep over the backprop graph.
struct SecondOrder {
  ParamVector hvp;
  Matrix mixed;
};

SecondOrder second_order(const ArchSpec& arch, const ParamVector& theta,
                         const LabeledBatch& batch, const ParamVector& v);

ParamVector hvp(const ArchSpec& arch, const ParamVector& theta, const LabeledBatch& batch,
                const ParamVector& v);

Matrix mixed_vjp(const ArchSpec& arch, const ParamVector& theta, const LabeledBatch& batch,
                 const ParamVector& v);

}  // namespace tabdistill
