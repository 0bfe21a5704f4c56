#include "milora/tensor.hpp"

#include <cmath>
#include <cstdlib>

namespace milora {

Tensor::Tensor(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw ShapeError("Tensor: negative dimension");
  data_.assign(static_cast<size_t>(rows) * cols, 0.0);
}

Tensor::Tensor(int rows, int cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (static_cast<int64_t>(data_.size()) != size())
    throw ShapeError("Tensor: data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str());
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = static_cast<int>(rows.size());
  cols_ = rows_ > 0 ? static_cast<int>(rows.begin()->size()) : 0;
  data_.reserve(static_cast<size_t>(rows_) * cols_);
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != cols_) throw ShapeError("Tensor: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Tensor Tensor::full(int rows, int cols, double v) {
  Tensor t(rows, cols);
  t.fill(v);
  return t;
}

Tensor Tensor::identity(int n) {
  Tensor t(n, n);
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::randn(RngStream& rng, int rows, int cols, double stddev) {
  Tensor t(rows, cols);
  for (double& v : t.data_) v = rng.normal(0.0, stddev);
  return t;
}

Tensor Tensor::row(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Tensor(1, n, std::move(v));
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::max_abs_diff(const Tensor& o) const {
  if (!same_shape(o)) throw ShapeError("max_abs_diff: shape mismatch " + shape_str() + " vs " + o.shape_str());
  double m = 0.0;
  for (size_t i = 0; i < data_.size(); ++i) m = std::max(m, std::fabs(data_[i] - o.data_[i]));
  return m;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

void Tensor::add_inplace(const Tensor& o) {
  if (!same_shape(o)) throw ShapeError("add_inplace: shape mismatch " + shape_str() + " vs " + o.shape_str());
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
}

void Tensor::scale_inplace(double c) {
  for (double& x : data_) x *= c;
}

std::string Tensor::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Parameter::Parameter(Tensor v, ParamGroup g, std::string n, bool trainable_now)
    : value(std::move(v)), group(g), trainable(trainable_now), name(std::move(n)) {
  grad = Tensor(value.rows(), value.cols());
}

void Parameter::zero_grad() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.rows(), value.cols());
  grad.fill(0.0);
}

}  // namespace milora
