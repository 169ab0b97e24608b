#include "wsod/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "wsod/error.hpp"

namespace wsod {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    fail(ErrorKind::shape, "matrix data length " + std::to_string(data_.size()) +
                               " does not match " + std::to_string(rows) + "x" +
                               std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) fail(ErrorKind::shape, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Matrix(1, n, std::move(values));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& o) {
  require_same_shape(*this, o, "matrix +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* where) {
  if (!a.same_shape(b)) {
    fail(ErrorKind::shape,
         std::string(where) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    fail(ErrorKind::shape, "affine: cannot combine x " + shape_str(x) + ", w " +
                               shape_str(w) + ", b " + shape_str(b));
  }
  Matrix out(x.rows(), w.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < w.cols(); ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) acc += x(i, k) * w(k, c);
      out(i, c) = acc + b(0, c);
    }
  }
  return out;
}

void affine_backward(const Matrix& x, const Matrix& w, const Matrix& dout,
                     Matrix* dx, Matrix* dw, Matrix* db) {
  if (dout.rows() != x.rows() || dout.cols() != w.cols()) {
    fail(ErrorKind::shape, "affine_backward: dout " + shape_str(dout) +
                               " does not match output of x " + shape_str(x) +
                               " and w " + shape_str(w));
  }
  if (dx) {
    require_same_shape(*dx, x, "affine_backward dx");
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t k = 0; k < x.cols(); ++k) {
        double acc = 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) acc += dout(i, c) * w(k, c);
        (*dx)(i, k) += acc;
      }
  }
  if (dw) {
    require_same_shape(*dw, w, "affine_backward dw");
    for (std::size_t k = 0; k < w.rows(); ++k)
      for (std::size_t c = 0; c < w.cols(); ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) acc += x(i, k) * dout(i, c);
        (*dw)(k, c) += acc;
      }
  }
  if (db) {
    if (db->rows() != 1 || db->cols() != w.cols())
      fail(ErrorKind::shape, "affine_backward: db " + shape_str(*db));
    for (std::size_t c = 0; c < w.cols(); ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.rows(); ++i) acc += dout(i, c);
      (*db)(0, c) += acc;
    }
  }
}

Matrix softmax_cols(const Matrix& s) {
  Matrix out(s.rows(), s.cols());
  for (std::size_t c = 0; c < s.cols(); ++c) {
    double mx = -INFINITY;
    for (std::size_t i = 0; i < s.rows(); ++i) mx = std::max(mx, s(i, c));
    double total = 0.0;
    for (std::size_t i = 0; i < s.rows(); ++i) {
      out(i, c) = std::exp(s(i, c) - mx);
      total += out(i, c);
    }
    for (std::size_t i = 0; i < s.rows(); ++i) out(i, c) /= total;
  }
  return out;
}

Matrix softmax_rows(const Matrix& s) {
  Matrix out(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < s.cols(); ++c) mx = std::max(mx, s(i, c));
    double total = 0.0;
    for (std::size_t c = 0; c < s.cols(); ++c) {
      out(i, c) = std::exp(s(i, c) - mx);
      total += out(i, c);
    }
    for (std::size_t c = 0; c < s.cols(); ++c) out(i, c) /= total;
  }
  return out;
}

Matrix softmax_cols_backward(const Matrix& p, const Matrix& dp) {
  require_same_shape(p, dp, "softmax_cols_backward");
  Matrix ds(p.rows(), p.cols());
  for (std::size_t c = 0; c < p.cols(); ++c) {
    double dot = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) dot += dp(i, c) * p(i, c);
    for (std::size_t i = 0; i < p.rows(); ++i) ds(i, c) = p(i, c) * (dp(i, c) - dot);
  }
  return ds;
}

Matrix softmax_rows_backward(const Matrix& p, const Matrix& dp) {
  require_same_shape(p, dp, "softmax_rows_backward");
  Matrix ds(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) dot += dp(i, c) * p(i, c);
    for (std::size_t c = 0; c < p.cols(); ++c) ds(i, c) = p(i, c) * (dp(i, c) - dot);
  }
  return ds;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

Matrix column_sums(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t c = 0; c < m.cols(); ++c) out(0, c) += m(i, c);
  return out;
}

Matrix row_means(const Matrix& m) {
  Matrix out = column_sums(m);
  if (m.rows() > 0)
    for (double& v : out.data()) v /= static_cast<double>(m.rows());
  return out;
}

ParamTensor::ParamTensor(std::string n, Matrix v)
    : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

Sgd::Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {
  if (!(lr > 0) || !std::isfinite(lr)) fail(ErrorKind::config, "sgd: lr must be > 0");
  if (!(momentum >= 0 && momentum < 1))
    fail(ErrorKind::config, "sgd: momentum must lie in [0, 1)");
}

void Sgd::step(const ParamList& params) {
  for (const ParamTensor* p : params) {
    require_same_shape(p->value, p->grad, p->name.c_str());
    if (!p->grad.all_finite()) fail(ErrorKind::numeric, "nonfinite gradient in parameter " + p->name);
  }
  for (ParamTensor* p : params) {
    auto [it, inserted] = velocity_.try_emplace(p->name, p->value.rows(), p->value.cols());
    Matrix& v = it->second;
    require_same_shape(v, p->value, "sgd velocity");
    auto& vd = v.data();
    auto& gd = p->grad.data();
    auto& xd = p->value.data();
    for (std::size_t i = 0; i < vd.size(); ++i) {
      vd[i] = momentum_ * vd[i] - lr_ * gd[i];
      xd[i] += vd[i];
    }
    p->zero_grad();
  }
}

double grad_check(const std::function<double()>& loss, const ParamList& params, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-4)) fail(ErrorKind::config, "grad_check: eps must lie in [1e-6, 1e-4]");
  double worst = 0.0;
  for (ParamTensor* p : params) {
    auto& xs = p->value.data();
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const double saved = xs[k];
      xs[k] = saved + eps;
      const double up = loss();
      xs[k] = saved - eps;
      const double down = loss();
      xs[k] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        fail(ErrorKind::numeric, "grad_check: nonfinite loss while perturbing " + p->name);
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad.data()[k];
      const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string checkpoint_to_json(const ParamList& params) {
  // Emitted by hand so that every number carries exactly 17 significant digits.
  std::vector<const ParamTensor*> sorted(params.begin(), params.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ParamTensor* a, const ParamTensor* b) { return a->name < b->name; });
  std::ostringstream os;
  os << "{\n";
  for (std::size_t n = 0; n < sorted.size(); ++n) {
    const ParamTensor& p = *sorted[n];
    if (!p.value.all_finite()) fail(ErrorKind::numeric, "nonfinite value in parameter " + p.name);
    os << "  " << nlohmann::json(p.name).dump() << ": {\"shape\": [" << p.value.rows() << ", "
       << p.value.cols() << "], \"values\": [";
    const auto& d = p.value.data();
    for (std::size_t i = 0; i < d.size(); ++i) os << (i ? ", " : "") << format_double(d[i]);
    os << "]}" << (n + 1 < sorted.size() ? "," : "") << "\n";
  }
  os << "}\n";
  return os.str();
}

std::map<std::string, Matrix> checkpoint_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::checkpoint, std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::checkpoint, "checkpoint root must be an object");
  std::map<std::string, Matrix> out;
  for (auto& [name, entry] : j.items()) {
    try {
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) fail(ErrorKind::checkpoint, name + ": shape must have two entries");
      auto values = entry.at("values").get<std::vector<double>>();
      out.emplace(name, Matrix(shape[0], shape[1], std::move(values)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::checkpoint, name + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorKind::checkpoint, name + ": " + e.what());
    }
  }
  return out;
}

void save_checkpoint(const std::string& path, const ParamList& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write checkpoint " + path);
  out << checkpoint_to_json(params);
  if (!out) fail(ErrorKind::io, "failed writing checkpoint " + path);
}

std::map<std::string, Matrix> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace wsod
