#include "milora/ops.hpp"

#include <cmath>

namespace milora {

namespace {
constexpr double kMaskValue = -1e30;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + a.shape_str() + " * " + b.shape_str());
  Tensor c(a.rows(), b.cols());
  const int m = a.rows(), kk = a.cols(), n = b.cols();
  for (int i = 0; i < m; ++i) {
    double* ci = c.row_ptr(i);
    const double* ai = a.row_ptr(i);
    for (int k = 0; k < kk; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row_ptr(k);
      for (int j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: " + a.shape_str() + " * " + b.shape_str() + "^T");
  Tensor c(a.rows(), b.rows());
  const int m = a.rows(), kk = a.cols(), n = b.rows();
  for (int i = 0; i < m; ++i) {
    const double* ai = a.row_ptr(i);
    double* ci = c.row_ptr(i);
    for (int j = 0; j < n; ++j) {
      const double* bj = b.row_ptr(j);
      double s = 0.0;
      for (int k = 0; k < kk; ++k) s += ai[k] * bj[k];
      ci[j] = s;
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows())
    throw ShapeError("matmul_tn: " + a.shape_str() + "^T * " + b.shape_str());
  Tensor c(a.cols(), b.cols());
  const int m = a.cols(), kk = a.rows(), n = b.cols();
  for (int k = 0; k < kk; ++k) {
    const double* ak = a.row_ptr(k);
    const double* bk = b.row_ptr(k);
    for (int i = 0; i < m; ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      double* ci = c.row_ptr(i);
      for (int j = 0; j < n; ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  Tensor t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("add: " + a.shape_str() + " vs " + b.shape_str());
  Tensor c = a;
  c.add_inplace(b);
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("mul: " + a.shape_str() + " vs " + b.shape_str());
  Tensor c = a;
  for (int64_t i = 0; i < c.size(); ++i) c.data()[i] *= b.data()[i];
  return c;
}

Tensor scale(const Tensor& a, double c) {
  Tensor t = a;
  t.scale_inplace(c);
  return t;
}

Tensor softmax_rows(const Tensor& a) {
  if (!a.all_finite()) throw ContractError("softmax_rows: non-finite input");
  Tensor y(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i) {
    const double* xi = a.row_ptr(i);
    double* yi = y.row_ptr(i);
    double mx = xi[0];
    for (int j = 1; j < a.cols(); ++j) mx = std::max(mx, xi[j]);
    double s = 0.0;
    for (int j = 0; j < a.cols(); ++j) {
      yi[j] = std::exp(xi[j] - mx);
      s += yi[j];
    }
    for (int j = 0; j < a.cols(); ++j) yi[j] /= s;
  }
  return y;
}

Tensor rmsnorm_rows(const Tensor& x, const Tensor& w, double eps) {
  if (w.rows() != 1 || w.cols() != x.cols())
    throw ShapeError("rmsnorm_rows: weight " + w.shape_str() + " for input " + x.shape_str());
  Tensor y(x.rows(), x.cols());
  const int d = x.cols();
  for (int i = 0; i < x.rows(); ++i) {
    const double* xi = x.row_ptr(i);
    double* yi = y.row_ptr(i);
    double ms = 0.0;
    for (int j = 0; j < d; ++j) ms += xi[j] * xi[j];
    const double inv = 1.0 / std::sqrt(ms / d + eps);
    for (int j = 0; j < d; ++j) yi[j] = xi[j] * inv * w.at(0, j);
  }
  return y;
}

Tensor silu(const Tensor& a) {
  Tensor y = a;
  for (double& v : y.data()) v = v / (1.0 + std::exp(-v));
  return y;
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

Tensor gelu(const Tensor& a) {
  Tensor y = a;
  for (double& v : y.data()) v = gelu_scalar(v);
  return y;
}

Tensor relu(const Tensor& a) {
  Tensor y = a;
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

void rope_inplace(Tensor& x, int n_heads, int first_pos, double base) {
  const int d = x.cols();
  if (n_heads <= 0 || d % n_heads != 0) throw ShapeError("rope: cols not divisible by heads");
  const int hd = d / n_heads;
  if (hd % 2 != 0) throw ShapeError("rope: head dim must be even");
  for (int r = 0; r < x.rows(); ++r) {
    const double pos = static_cast<double>(first_pos + r);
    double* row = x.row_ptr(r);
    for (int h = 0; h < n_heads; ++h) {
      double* hp = row + h * hd;
      for (int i = 0; i < hd / 2; ++i) {
        const double theta = pos * std::pow(base, -2.0 * i / hd);
        const double c = std::cos(theta), s = std::sin(theta);
        const double a = hp[2 * i], b = hp[2 * i + 1];
        hp[2 * i] = a * c - b * s;
        hp[2 * i + 1] = a * s + b * c;
      }
    }
  }
}

Tensor take_rows(const Tensor& a, int r0, int r1) {
  if (r0 < 0 || r1 > a.rows() || r0 >= r1) throw ShapeError("take_rows: bad range");
  Tensor out(r1 - r0, a.cols());
  for (int r = r0; r < r1; ++r)
    for (int c = 0; c < a.cols(); ++c) out.at(r - r0, c) = a.at(r, c);
  return out;
}

Tensor mean_rows(const Tensor& a) {
  if (a.rows() == 0) throw ShapeError("mean_rows: empty input");
  Tensor y(1, a.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) y.at(0, j) += a.at(i, j);
  y.scale_inplace(1.0 / a.rows());
  return y;
}

Tensor max_rows(const Tensor& a, std::vector<int>* argmax) {
  if (a.rows() == 0) throw ShapeError("max_rows: empty input");
  Tensor y(1, a.cols());
  if (argmax) argmax->assign(a.cols(), 0);
  for (int j = 0; j < a.cols(); ++j) {
    double best = a.at(0, j);
    int bi = 0;
    for (int i = 1; i < a.rows(); ++i) {
      if (a.at(i, j) > best) {  // strict: ties keep the lowest row
        best = a.at(i, j);
        bi = i;
      }
    }
    y.at(0, j) = best;
    if (argmax) (*argmax)[j] = bi;
  }
  return y;
}

Tensor causal_mask(int n) {
  Tensor m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) m.at(i, j) = kMaskValue;
  return m;
}

int argmax_row(const Tensor& t, int r) {
  int best = 0;
  for (int j = 1; j < t.cols(); ++j)
    if (t.at(r, j) > t.at(r, best)) best = j;
  return best;
}

}  // namespace milora
