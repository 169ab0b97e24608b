#pragma once

// Small dense numeric kernel: row-major matrices, the handful of operations
// the detection model needs (each with an explicit backward), SGD with
// momentum, finite-difference gradient checking and JSON checkpoints.

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace wsod {

// Lower/upper bound applied to every probability before it enters a log.
inline constexpr double kProbClamp = 1e-7;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  // Nested-list constructor, convenient in tests: {{1, 2}, {3, 4}}.
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row(std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row_span(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Matrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  Matrix& operator+=(const Matrix& o);
  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

void require_same_shape(const Matrix& a, const Matrix& b, const char* where);

// out[i,c] = sum_k x[i,k] w[k,c] + b[c]; b is a 1 x C row.
Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b);

// Accumulates gradients of affine() given dout. Any of dx/dw/db may be null.
void affine_backward(const Matrix& x, const Matrix& w, const Matrix& dout,
                     Matrix* dx, Matrix* dw, Matrix* db);

// Softmax down each column (normalized over rows).
Matrix softmax_cols(const Matrix& s);
// Softmax along each row (normalized over columns).
Matrix softmax_rows(const Matrix& s);

// Given p = softmax(s) and dL/dp, returns dL/ds.
Matrix softmax_cols_backward(const Matrix& p, const Matrix& dp);
Matrix softmax_rows_backward(const Matrix& p, const Matrix& dp);

double sigmoid(double x);
double clamp_prob(double p);
Matrix column_sums(const Matrix& m);  // 1 x C
Matrix row_means(const Matrix& m);    // 1 x C mean over rows

// A learnable tensor: value plus accumulated gradient of identical shape.
struct ParamTensor {
  std::string name;
  Matrix value;
  Matrix grad;

  ParamTensor() = default;
  ParamTensor(std::string n, Matrix v);

  void zero_grad() { grad.fill(0.0); }
};

using ParamList = std::vector<ParamTensor*>;

// v <- momentum * v - lr * grad; value <- value + v; grad <- 0.
class Sgd {
 public:
  Sgd(double lr, double momentum);

  // Throws ErrorKind::numeric naming the parameter if any gradient is
  // nonfinite; in that case no parameter is modified.
  void step(const ParamList& params);

  double lr() const noexcept { return lr_; }
  double momentum() const noexcept { return momentum_; }

 private:
  double lr_;
  double momentum_;
  std::map<std::string, Matrix> velocity_;
};

// Central-difference check of analytic gradients already stored in
// params[*]->grad against the scalar function `loss` (evaluated with the
// current parameter values). Returns the maximum over coordinates of
// |a - n| / max(1, |a|, |n|). Parameter values are restored on return.
double grad_check(const std::function<double()>& loss, const ParamList& params,
                  double eps = 1e-5);

// Checkpoint: {"<name>": {"shape": [rows, cols], "values": [...]}} with every
// value written using 17 significant digits.
std::string checkpoint_to_json(const ParamList& params);
std::map<std::string, Matrix> checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::string& path, const ParamList& params);
std::map<std::string, Matrix> load_checkpoint(const std::string& path);

std::string format_double(double v);

}  // namespace wsod
