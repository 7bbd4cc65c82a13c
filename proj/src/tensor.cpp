#include "tempograd/tensor.hpp"

#include <cmath>
#include <sstream>

namespace tempograd {

std::size_t shape_count(const std::vector<int>& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("tensor axis length must be non-negative");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  if (shape_.size() > 2) throw ShapeError("tensor rank above 2 is not supported");
  data_.assign(shape_count(shape_), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > 2) throw ShapeError("tensor rank above 2 is not supported");
  if (shape_count(shape_) != data_.size())
    throw ShapeError("tensor data length does not match shape " + shape_str());
}

Tensor Tensor::full(std::vector<int> shape, double fill) {
  Tensor t(std::move(shape));
  t.fill(fill);
  return t;
}

Tensor Tensor::row_vector(std::vector<double> data) {
  const int n = static_cast<int>(data.size());
  return Tensor({n}, std::move(data));
}

int Tensor::dim(int axis) const {
  if (axis < 0 || axis >= ndim())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str());
  return shape_[static_cast<std::size_t>(axis)];
}

double& Tensor::at(int r, int c) {
  return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) +
               static_cast<std::size_t>(c)];
}

double Tensor::at(int r, int c) const {
  return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) +
               static_cast<std::size_t>(c)];
}

std::string Tensor::shape_str() const {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) out << ", ";
    out << shape_[i];
  }
  out << ')';
  return out.str();
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

void Tensor::add_in_place(const Tensor& other) {
  if (!same_shape(other))
    throw ShapeError("add_in_place shape mismatch: " + shape_str() + " vs " + other.shape_str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// The ikj order keeps the inner loop streaming over contiguous rows of b and c.
void gemm_nn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    const double* ai = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

void gemm_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const double* ap = a + static_cast<std::size_t>(p) * m;
    const double* bp = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

Tensor glorot_uniform(int fan_out, int fan_in, Rng& rng) {
  if (fan_out <= 0 || fan_in <= 0) throw ShapeError("glorot_uniform: fans must be positive");
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w({fan_out, fan_in});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-limit, limit);
  return w;
}

void Csr::check() const {
  if (rows < 0 || cols < 0) throw ShapeError("csr: negative dimension");
  if (row_ptr.size() != static_cast<std::size_t>(rows) + 1)
    throw ShapeError("csr: row_ptr length must be rows + 1");
  if (row_ptr.front() != 0 || row_ptr.back() != static_cast<int>(col_idx.size()))
    throw ShapeError("csr: row_ptr endpoints do not bracket the entry list");
  if (col_idx.size() != values.size()) throw ShapeError("csr: col_idx and values length mismatch");
  for (int r = 0; r < rows; ++r) {
    if (row_ptr[static_cast<std::size_t>(r)] > row_ptr[static_cast<std::size_t>(r) + 1])
      throw ShapeError("csr: row_ptr must be non-decreasing");
    for (int p = row_ptr[static_cast<std::size_t>(r)]; p < row_ptr[static_cast<std::size_t>(r) + 1]; ++p) {
      const int c = col_idx[static_cast<std::size_t>(p)];
      if (c < 0 || c >= cols) throw ShapeError("csr: column index out of range");
      if (p > row_ptr[static_cast<std::size_t>(r)] && col_idx[static_cast<std::size_t>(p) - 1] >= c)
        throw ShapeError("csr: columns must be strictly ascending within a row");
    }
  }
}

void spmm_acc(const Csr& a, const double* x, double* y, int d) {
  for (int r = 0; r < a.rows; ++r) {
    double* yr = y + static_cast<std::size_t>(r) * d;
    for (int p = a.row_ptr[static_cast<std::size_t>(r)]; p < a.row_ptr[static_cast<std::size_t>(r) + 1]; ++p) {
      const double v = a.values[static_cast<std::size_t>(p)];
      const double* xc = x + static_cast<std::size_t>(a.col_idx[static_cast<std::size_t>(p)]) * d;
      for (int j = 0; j < d; ++j) yr[j] += v * xc[j];
    }
  }
}

}  // namespace tempograd
