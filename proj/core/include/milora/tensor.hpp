#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "milora/errors.hpp"
#include "milora/rng.hpp"

namespace milora {

// Dense row-major matrix of doubles.  Everything in this codebase is rank-2:
// row vectors are 1xN, scalars 1x1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols);
  Tensor(int rows, int cols, std::vector<double> values);
  Tensor(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }
  static Tensor full(int rows, int cols, double v);
  static Tensor identity(int n);
  static Tensor randn(RngStream& rng, int rows, int cols, double stddev);
  static Tensor row(std::vector<double> v);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int64_t size() const { return static_cast<int64_t>(rows_) * cols_; }
  bool empty() const { return data_.empty(); }

  double& at(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double at(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double* row_ptr(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
  const double* row_ptr(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;
  double max_abs_diff(const Tensor& o) const;
  double max_abs() const;

  void fill(double v);
  void add_inplace(const Tensor& o);
  void scale_inplace(double c);

  std::string shape_str() const;  // e.g. "3x4"

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// Which half of the bi-level optimization updates a parameter: task
// parameters train on the training split, activation-coefficient parameters
// train on the validation split.
enum class ParamGroup { kTask, kArch };

// A named trainable matrix plus its gradient accumulator.
struct Parameter {
  Tensor value;
  Tensor grad;
  ParamGroup group = ParamGroup::kTask;
  bool trainable = true;
  std::string name;

  Parameter() = default;
  Parameter(Tensor v, ParamGroup g, std::string n, bool trainable_now = true);
  void zero_grad();
};

}  // namespace milora
