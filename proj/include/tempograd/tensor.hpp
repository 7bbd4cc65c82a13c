#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tempograd/errors.hpp"
#include "tempograd/rng.hpp"

namespace tempograd {

// Dense row-major tensor of doubles. Rank 1 and 2 cover everything the engine
// needs; a scalar is represented as shape {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double fill);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor row_vector(std::vector<double> data);

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return data_.size(); }
  int dim(int axis) const;
  int rows() const { return dim(0); }
  int cols() const { return dim(1); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int r, int c);
  double at(int r, int c) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  void fill(double v);
  void add_in_place(const Tensor& other);

  bool all_finite() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::size_t shape_count(const std::vector<int>& shape);

// c += a * b, all row-major; a is m*k, b is k*n, c is m*n.
void gemm_nn_acc(const double* a, const double* b, double* c, int m, int k, int n);
// c += a * b^T; a is m*k, b is n*k, c is m*n.
void gemm_nt_acc(const double* a, const double* b, double* c, int m, int k, int n);
// c += a^T * b; a is k*m, b is k*n, c is m*n.
void gemm_tn_acc(const double* a, const double* b, double* c, int m, int k, int n);

// Glorot uniform draw over limit sqrt(6 / (fan_in + fan_out)); rank-2 only.
Tensor glorot_uniform(int fan_out, int fan_in, Rng& rng);

// Compressed sparse row matrix for the static baselines.
struct Csr {
  int rows = 0;
  int cols = 0;
  std::vector<int> row_ptr;   // length rows + 1
  std::vector<int> col_idx;   // length nnz, ascending within each row
  std::vector<double> values; // length nnz

  std::size_t nnz() const { return col_idx.size(); }
  void check() const;
};

// y += a * x; a is rows*cols sparse, x is cols*d dense, y is rows*d dense.
void spmm_acc(const Csr& a, const double* x, double* y, int d);

}  // namespace tempograd
