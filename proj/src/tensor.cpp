#include "nexus/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "nexus/errors.hpp"

namespace nexus {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                          b.shape_string());
  }
}

}  // namespace

// ---------------------------------------------------------------- Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ValidationError("Matrix: data length " + std::to_string(data_.size()) +
                          " does not match " + shape_string());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ValidationError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
  if (r0 + nr > rows_ || c0 + nc > cols_) {
    throw ValidationError("Matrix::block: [" + std::to_string(r0) + "+" + std::to_string(nr) +
                          ", " + std::to_string(c0) + "+" + std::to_string(nc) +
                          "] out of range for " + shape_string());
  }
  Matrix out(nr, nc);
  for (std::size_t r = 0; r < nr; ++r) {
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>((r0 + r) * cols_ + c0), nc,
                out.data_.begin() + static_cast<std::ptrdiff_t>(r * nc));
  }
  return out;
}

void Matrix::set_block(std::size_t r0, std::size_t c0, const Matrix& src) {
  if (r0 + src.rows_ > rows_ || c0 + src.cols_ > cols_) {
    throw ValidationError("Matrix::set_block: " + src.shape_string() + " at (" +
                          std::to_string(r0) + ", " + std::to_string(c0) + ") exceeds " +
                          shape_string());
  }
  for (std::size_t r = 0; r < src.rows_; ++r) {
    std::copy_n(src.data_.begin() + static_cast<std::ptrdiff_t>(r * src.cols_), src.cols_,
                data_.begin() + static_cast<std::ptrdiff_t>((r0 + r) * cols_ + c0));
  }
}

std::string Matrix::shape_string() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

// ---------------------------------------------------------------- products

namespace {
thread_local MultiplyAddCounter* active_counter = nullptr;
}  // namespace

MultiplyAddCounter::MultiplyAddCounter() : outer_(active_counter) { active_counter = this; }

MultiplyAddCounter::~MultiplyAddCounter() {
  if (outer_) outer_->count_ += count_;
  active_counter = outer_;
}

void record_multiply_adds(std::uint64_t n) {
  if (active_counter) active_counter->count_ += n;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ValidationError("matmul: inner dimensions differ, a" + a.shape_string() + " b" +
                          b.shape_string());
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  record_multiply_adds(n * k * m);
  Matrix c(n, m);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* pc = c.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = pc + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ValidationError("matmul_at_b: row counts differ, a" + a.shape_string() + " b" +
                          b.shape_string());
  }
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  record_multiply_adds(n * k * m);
  Matrix c(n, m);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* pc = c.values().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = pa + p * n;
    const double* brow = pb + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double api = arow[i];
      double* crow = pc + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += api * brow[j];
    }
  }
  return c;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ValidationError("matmul_a_bt: column counts differ, a" + a.shape_string() + " b" +
                          b.shape_string());
  }
  // Transposing b first keeps the inner loop contiguous; the summation order
  // per output element is unchanged.
  return matmul(a, transpose(b));
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  add_in_place(out, b);
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& x : out.values()) x *= s;
  return out;
}

void add_in_place(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add_in_place");
  auto o = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
}

void axpy_in_place(Matrix& a, double s, const Matrix& b) {
  require_same_shape(a, b, "axpy_in_place");
  auto o = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += s * bv[i];
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double x : a.values()) s += x * x;
  return std::sqrt(s);
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double x : a.values()) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
  return m;
}

bool all_finite(const Matrix& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------- activations

double gelu(double x) { return 0.5 * x * std::erfc(-x * std::numbers::sqrt2 * 0.5); }

double gelu_derivative(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014326779399460599343818684758586311649;
  const double cdf = 0.5 * std::erfc(-x * std::numbers::sqrt2 * 0.5);
  return cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

Matrix gelu(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.values()) v = gelu(v);
  return out;
}

Matrix gelu_derivative(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.values()) v = gelu_derivative(v);
  return out;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    const double inv = 1.0 / sum;
    for (double& v : o) v *= inv;
  }
  return out;
}

Matrix softmax_rows(const Matrix& x, const Matrix& keep) {
  require_same_shape(x, keep, "softmax_rows(mask)");
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto k = keep.row(r);
    auto o = out.row(r);
    double mx = -INFINITY;
    for (std::size_t c = 0; c < in.size(); ++c)
      if (k[c] != 0.0) mx = std::max(mx, in[c]);
    if (mx == -INFINITY) {
      throw ValidationError("softmax_rows: row " + std::to_string(r) + " is fully masked");
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = k[c] != 0.0 ? std::exp(in[c] - mx) : 0.0;
      sum += o[c];
    }
    const double inv = 1.0 / sum;
    for (double& v : o) v *= inv;
  }
  return out;
}

Matrix causal_mask(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c <= r; ++c) m(r, c) = 1.0;
  return m;
}

// ---------------------------------------------------------------- QR

QrResult qr_thin(const Matrix& m) {
  const std::size_t rows = m.rows(), cols = m.cols();
  if (rows < cols) {
    throw ValidationError("qr_thin: need rows >= cols, got " + m.shape_string());
  }
  double scale_ref = 0.0;
  for (std::size_t c = 0; c < cols; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += m(r, c) * m(r, c);
    scale_ref = std::max(scale_ref, std::sqrt(s));
  }

  Matrix a = m;
  std::vector<std::vector<double>> reflectors;
  reflectors.reserve(cols);
  for (std::size_t k = 0; k < cols; ++k) {
    double norm = 0.0;
    for (std::size_t r = k; r < rows; ++r) norm += a(r, k) * a(r, k);
    norm = std::sqrt(norm);
    std::vector<double> v(rows - k, 0.0);
    if (norm > 0.0) {
      const double alpha = a(k, k) >= 0.0 ? -norm : norm;
      for (std::size_t r = k; r < rows; ++r) v[r - k] = a(r, k);
      v[0] -= alpha;
      double vnorm = 0.0;
      for (double x : v) vnorm += x * x;
      vnorm = std::sqrt(vnorm);
      if (vnorm > 0.0) {
        for (double& x : v) x /= vnorm;
        for (std::size_t c = k; c < cols; ++c) {
          double d = 0.0;
          for (std::size_t r = k; r < rows; ++r) d += v[r - k] * a(r, c);
          for (std::size_t r = k; r < rows; ++r) a(r, c) -= 2.0 * d * v[r - k];
        }
      }
    }
    reflectors.push_back(std::move(v));
  }

  QrResult out{Matrix(rows, cols), Matrix(cols, cols)};
  for (std::size_t r = 0; r < cols; ++r)
    for (std::size_t c = r; c < cols; ++c) out.r(r, c) = a(r, c);

  // Q = H_0 H_1 ... H_{cols-1} applied to the first cols columns of I.
  for (std::size_t c = 0; c < cols; ++c) out.q(c, c) = 1.0;
  for (std::size_t kk = cols; kk-- > 0;) {
    const auto& v = reflectors[kk];
    for (std::size_t c = 0; c < cols; ++c) {
      double d = 0.0;
      for (std::size_t r = kk; r < rows; ++r) d += v[r - kk] * out.q(r, c);
      for (std::size_t r = kk; r < rows; ++r) out.q(r, c) -= 2.0 * d * v[r - kk];
    }
  }

  for (std::size_t k = 0; k < cols; ++k) {
    if (!(std::abs(out.r(k, k)) > 1e-10 * scale_ref)) {
      throw NumericError("qr_thin: rank-deficient input " + m.shape_string() + ", pivot " +
                         std::to_string(k) + " below tolerance");
    }
    if (out.r(k, k) < 0.0) {
      for (std::size_t c = k; c < cols; ++c) out.r(k, c) = -out.r(k, c);
      for (std::size_t r = 0; r < rows; ++r) out.q(r, k) = -out.q(r, k);
    }
  }
  return out;
}

// ---------------------------------------------------------------- SVD

namespace {

// Completes column k of u (rows x n) to a unit vector orthogonal to the
// columns in `filled`, trying standard basis vectors in order.
void complete_column(Matrix& u, std::size_t k, const std::vector<bool>& filled) {
  const std::size_t rows = u.rows();
  for (std::size_t e = 0; e < rows; ++e) {
    std::vector<double> cand(rows, 0.0);
    cand[e] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < u.cols(); ++j) {
        if (!filled[j]) continue;
        double d = 0.0;
        for (std::size_t r = 0; r < rows; ++r) d += u(r, j) * cand[r];
        for (std::size_t r = 0; r < rows; ++r) cand[r] -= d * u(r, j);
      }
    }
    double n = 0.0;
    for (double x : cand) n += x * x;
    n = std::sqrt(n);
    if (n > 1e-6) {
      for (std::size_t r = 0; r < rows; ++r) u(r, k) = cand[r] / n;
      return;
    }
  }
}

}  // namespace

SvdResult svd_small(const Matrix& m) {
  if (std::min(m.rows(), m.cols()) > 3) {
    throw ValidationError("svd_small: min(rows, cols) must be <= 3, got " + m.shape_string());
  }
  const bool flipped = m.cols() > m.rows();
  Matrix a = flipped ? transpose(m) : m;  // rows >= cols
  const std::size_t rows = a.rows(), n = a.cols();
  Matrix v = Matrix::identity(n);

  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
          alpha += a(r, p) * a(r, p);
          beta += a(r, q) * a(r, q);
          gamma += a(r, p) * a(r, q);
        }
        if (gamma == 0.0 || std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double s = c * t;
        for (std::size_t r = 0; r < rows; ++r) {
          const double ap = a(r, p), aq = a(r, q);
          a(r, p) = c * ap - s * aq;
          a(r, q) = s * ap + c * aq;
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double vp = v(r, p), vq = v(r, q);
          v(r, p) = c * vp - s * vq;
          v(r, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += a(r, j) * a(r, j);
    sigma[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  const double smax = n ? sigma[order[0]] : 0.0;
  SvdResult out{std::vector<double>(n), Matrix(rows, n), Matrix(n, n)};
  std::vector<bool> filled(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.singular_values[k] = sigma[j];
    for (std::size_t r = 0; r < n; ++r) out.v(r, k) = v(r, j);
    if (sigma[j] > 1e-14 * std::max(smax, 1e-300)) {
      for (std::size_t r = 0; r < rows; ++r) out.u(r, k) = a(r, j) / sigma[j];
      filled[k] = true;
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (!filled[k]) {
      complete_column(out.u, k, filled);
      filled[k] = true;
    }
  }
  if (flipped) std::swap(out.u, out.v);
  return out;
}

// ---------------------------------------------------------------- symmetric eigen

EigResult eig_sym(const Matrix& c) {
  if (c.rows() != c.cols()) throw ValidationError("eig_sym: matrix not square " + c.shape_string());
  const std::size_t n = c.rows();
  Matrix a = c;
  Matrix v = Matrix::identity(n);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diag += a(i, i) * a(i, i);
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    }
    if (off == 0.0 || off <= 1e-32 * diag) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t =
            (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::hypot(1.0, theta));
        const double cs = 1.0 / std::hypot(1.0, t);
        const double sn = t * cs;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = cs * akp - sn * akq;
          a(k, q) = sn * akp + cs * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = cs * apk - sn * aqk;
          a(q, k) = sn * apk + cs * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = cs * vkp - sn * vkq;
          v(k, q) = sn * vkp + cs * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  EigResult out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.values[k] = a(j, j);
    std::size_t arg = 0;
    for (std::size_t r = 1; r < n; ++r)
      if (std::abs(v(r, j)) > std::abs(v(arg, j))) arg = r;
    const double sign = v(arg, j) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = sign * v(r, j);
  }
  return out;
}

EigResult eig_sym3(const Matrix& c) {
  if (c.rows() != 3 || c.cols() != 3) {
    throw ValidationError("eig_sym3: expected 3x3, got " + c.shape_string());
  }
  const double tol = 1e-12 * std::max(1.0, max_abs(c));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j)
      if (std::abs(c(i, j) - c(j, i)) > tol) {
        throw ValidationError("eig_sym3: matrix is not symmetric");
      }
  return eig_sym(c);
}

// ---------------------------------------------------------------- gradients

Matrix finite_diff_grad(const ScalarFn& f, const Matrix& x, double eps) {
  if (!(eps > 0.0)) throw ValidationError("finite_diff_grad: eps must be positive");
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.values()[i];
    probe.values()[i] = orig + eps;
    const double fp = f(probe);
    probe.values()[i] = orig - eps;
    const double fm = f(probe);
    probe.values()[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite function value at entry " +
                         std::to_string(i));
    }
    g.values()[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

// ---------------------------------------------------------------- sampling

Matrix seeded_gaussian(CounterRng& rng, std::size_t rows, std::size_t cols, double mean,
                       double stddev) {
  if (!(stddev >= 0.0)) throw ValidationError("seeded_gaussian: std must be >= 0");
  Matrix m(rows, cols);
  for (double& x : m.values()) x = mean + stddev * rng.gaussian();
  return m;
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double mu = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace nexus
