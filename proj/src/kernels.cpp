#include "deltalag/kernels.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace deltalag::kernels {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline bool parallel_worth(std::size_t m, std::size_t k, std::size_t n) {
  return m > 1 && m * k * n >= kParallelWork;
}

// Centers and scales each column of x to unit norm. Returns false for columns
// that cannot be standardized.
std::vector<char> standardize_columns(const double* x, std::size_t rows, std::size_t cols,
                                      std::vector<double>& out) {
  out.assign(rows * cols, 0.0);
  std::vector<char> ok(cols, 1);
  for (std::size_t c = 0; c < cols; ++c) {
    double mean = 0.0;
    bool constant = true;
    for (std::size_t r = 0; r < rows; ++r) {
      const double v = x[r * cols + c];
      if (!std::isfinite(v)) {
        ok[c] = 0;
        break;
      }
      constant = constant && v == x[c];
      mean += v;
    }
    if (!ok[c] || constant) {
      ok[c] = 0;
      continue;
    }
    mean /= static_cast<double>(rows);
    double ss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = x[r * cols + c] - mean;
      ss += d * d;
    }
    if (!(ss > 0.0)) {
      ok[c] = 0;
      continue;
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t r = 0; r < rows; ++r) {
      out[r * cols + c] = (x[r * cols + c] - mean) * inv;
    }
  }
  return ok;
}

}  // namespace

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static) if (parallel_worth(m, k, n))
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    }
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static) if (parallel_worth(m, k, n))
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * n + j] = s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static) if (parallel_worth(m, k, n))
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void column_correlation(const double* x, const double* y, double* out, std::size_t rows,
                        std::size_t p, std::size_t q) {
  std::vector<double> xs, ys;
  const auto xok = standardize_columns(x, rows, p, xs);
  const auto yok = standardize_columns(y, rows, q, ys);
  matmul_tn(xs.data(), ys.data(), out, p, rows, q);
#pragma omp parallel for schedule(static) if (p * q >= 4096)
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < q; ++j) {
      double& v = out[i * q + j];
      if (!xok[i] || !yok[j]) {
        v = kNaN;
      } else if (v > 1.0) {
        v = 1.0;
      } else if (v < -1.0) {
        v = -1.0;
      }
    }
  }
}

namespace reference {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

void column_correlation(const double* x, const double* y, double* out, std::size_t rows,
                        std::size_t p, std::size_t q) {
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < q; ++j) {
      double mx = 0.0, my = 0.0;
      bool finite = true, xconst = true, yconst = true;
      for (std::size_t r = 0; r < rows; ++r) {
        const double xv = x[r * p + i];
        const double yv = y[r * q + j];
        if (!std::isfinite(xv) || !std::isfinite(yv)) {
          finite = false;
          break;
        }
        xconst = xconst && xv == x[i];
        yconst = yconst && yv == y[j];
        mx += xv;
        my += yv;
      }
      if (!finite || rows == 0 || xconst || yconst) {
        out[i * q + j] = kNaN;
        continue;
      }
      mx /= static_cast<double>(rows);
      my /= static_cast<double>(rows);
      double sxy = 0.0, sxx = 0.0, syy = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        const double dx = x[r * p + i] - mx;
        const double dy = y[r * q + j] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
      }
      out[i * q + j] = (sxx > 0.0 && syy > 0.0) ? sxy / std::sqrt(sxx * syy) : kNaN;
    }
  }
}

}  // namespace reference

}  // namespace deltalag::kernels
