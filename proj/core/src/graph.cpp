#include "milora/graph.hpp"

#include <cmath>
#include <memory>
#include <utility>

namespace milora {

namespace {

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Shared scratch for the rational op: polynomial values and derivatives at
// one point, reused by forward and backward.
struct RationalPoint {
  double num, dnum_dx;   // numerator polynomial and its x-derivative
  double den, dden_dx;   // full denominator (>= 1) and its x-derivative
  double poly;           // raw denominator polynomial sum_i b_i x^i
};

RationalPoint rational_point(double x, const Tensor& a, const Tensor& b, DenomMode mode) {
  RationalPoint p{};
  const int m = a.cols() - 1;
  const int n = b.cols();
  // Horner for numerator and its derivative.
  double num = a.at(0, m), dnum = 0.0;
  for (int j = m - 1; j >= 0; --j) {
    dnum = dnum * x + num;
    num = num * x + a.at(0, j);
  }
  p.num = num;
  p.dnum_dx = dnum;
  if (mode == DenomMode::kAbsOfSum) {
    double s = 0.0, ds = 0.0, xp = 1.0;  // xp tracks x^{i-1}
    for (int i = 1; i <= n; ++i) {
      const double bi = b.at(0, i - 1);
      ds += bi * i * xp;
      xp *= x;
      s += bi * xp;
    }
    p.poly = s;
    p.den = 1.0 + std::fabs(s);
    p.dden_dx = sgn(s) * ds;
  } else {
    double s = 0.0, ds = 0.0, xp = 1.0;  // xp tracks x^{i-1}
    for (int i = 1; i <= n; ++i) {
      const double bi = b.at(0, i - 1);
      const double xim1 = xp;
      xp *= x;
      const double t = bi * xp;
      s += std::fabs(t);
      ds += sgn(t) * bi * i * xim1;
    }
    p.poly = s;
    p.den = 1.0 + s;
    p.dden_dx = ds;
  }
  return p;
}

}  // namespace

void GraphNode::add_grad(const Tensor& g) {
  if (grad.empty()) grad = Tensor(value.rows(), value.cols());
  grad.add_inplace(g);
}

Tensor& GraphNode::grad_ref() {
  if (grad.empty()) grad = Tensor(value.rows(), value.cols());
  return grad;
}

GraphNode* Graph::make(Tensor v, bool needs_grad, std::function<void()> back) {
  nodes_.emplace_back();
  GraphNode& n = nodes_.back();
  n.value = std::move(v);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  return &n;
}

Value Graph::input(Tensor t) { return Value(make(std::move(t), false, nullptr)); }

Value Graph::param(Parameter& p) {
  GraphNode* n = make(p.value, p.trainable, nullptr);
  if (p.trainable) {
    Parameter* pp = &p;
    n->back = [n, pp] { pp->grad.add_inplace(n->grad); };
  }
  return Value(n);
}

Value Graph::matmul(Value a, Value b) {
  GraphNode *an = a.node_, *bn = b.node_;
  Tensor v = milora::matmul(an->value, bn->value);
  const bool ng = an->needs_grad || bn->needs_grad;
  GraphNode* out = make(std::move(v), ng, nullptr);
  if (ng) {
    out->back = [out, an, bn] {
      if (an->needs_grad) an->add_grad(matmul_nt(out->grad, bn->value));
      if (bn->needs_grad) bn->add_grad(matmul_tn(an->value, out->grad));
    };
  }
  return Value(out);
}

Value Graph::transpose(Value a) {
  GraphNode* an = a.node_;
  GraphNode* out = make(milora::transpose(an->value), an->needs_grad, nullptr);
  if (an->needs_grad)
    out->back = [out, an] { an->add_grad(milora::transpose(out->grad)); };
  return Value(out);
}

Value Graph::add(Value a, Value b) {
  GraphNode *an = a.node_, *bn = b.node_;
  const bool ng = an->needs_grad || bn->needs_grad;
  GraphNode* out = make(milora::add(an->value, bn->value), ng, nullptr);
  if (ng) {
    out->back = [out, an, bn] {
      if (an->needs_grad) an->add_grad(out->grad);
      if (bn->needs_grad) bn->add_grad(out->grad);
    };
  }
  return Value(out);
}

Value Graph::add_bias(Value a, Value bias) {
  GraphNode *an = a.node_, *bn = bias.node_;
  if (bn->value.rows() != 1 || bn->value.cols() != an->value.cols())
    throw ShapeError("add_bias: bias " + bn->value.shape_str() + " for " + an->value.shape_str());
  Tensor v = an->value;
  for (int i = 0; i < v.rows(); ++i)
    for (int j = 0; j < v.cols(); ++j) v.at(i, j) += bn->value.at(0, j);
  const bool ng = an->needs_grad || bn->needs_grad;
  GraphNode* out = make(std::move(v), ng, nullptr);
  if (ng) {
    out->back = [out, an, bn] {
      if (an->needs_grad) an->add_grad(out->grad);
      if (bn->needs_grad) {
        Tensor g(1, out->grad.cols());
        for (int i = 0; i < out->grad.rows(); ++i)
          for (int j = 0; j < out->grad.cols(); ++j) g.at(0, j) += out->grad.at(i, j);
        bn->add_grad(g);
      }
    };
  }
  return Value(out);
}

Value Graph::mul(Value a, Value b) {
  GraphNode *an = a.node_, *bn = b.node_;
  const bool ng = an->needs_grad || bn->needs_grad;
  GraphNode* out = make(milora::mul(an->value, bn->value), ng, nullptr);
  if (ng) {
    out->back = [out, an, bn] {
      if (an->needs_grad) an->add_grad(milora::mul(out->grad, bn->value));
      if (bn->needs_grad) bn->add_grad(milora::mul(out->grad, an->value));
    };
  }
  return Value(out);
}

Value Graph::scale(Value a, double c) {
  GraphNode* an = a.node_;
  GraphNode* out = make(milora::scale(an->value, c), an->needs_grad, nullptr);
  if (an->needs_grad)
    out->back = [out, an, c] { an->add_grad(milora::scale(out->grad, c)); };
  return Value(out);
}

Value Graph::scale_by(Value a, Value s) {
  GraphNode *an = a.node_, *sn = s.node_;
  if (sn->value.rows() != 1 || sn->value.cols() != 1)
    throw ShapeError("scale_by: scale must be 1x1, got " + sn->value.shape_str());
  const double sv = sn->value.at(0, 0);
  const bool ng = an->needs_grad || sn->needs_grad;
  GraphNode* out = make(milora::scale(an->value, sv), ng, nullptr);
  if (ng) {
    out->back = [out, an, sn, sv] {
      if (an->needs_grad) an->add_grad(milora::scale(out->grad, sv));
      if (sn->needs_grad) {
        double acc = 0.0;
        for (int64_t i = 0; i < out->grad.size(); ++i)
          acc += out->grad.data()[i] * an->value.data()[i];
        Tensor g(1, 1);
        g.at(0, 0) = acc;
        sn->add_grad(g);
      }
    };
  }
  return Value(out);
}

Value Graph::slice_rows(Value a, int r0, int r1) {
  GraphNode* an = a.node_;
  if (r0 < 0 || r1 > an->value.rows() || r0 >= r1)
    throw ShapeError("slice_rows: bad range [" + std::to_string(r0) + "," + std::to_string(r1) + ")");
  Tensor v(r1 - r0, an->value.cols());
  for (int i = r0; i < r1; ++i)
    for (int j = 0; j < v.cols(); ++j) v.at(i - r0, j) = an->value.at(i, j);
  GraphNode* out = make(std::move(v), an->needs_grad, nullptr);
  if (an->needs_grad) {
    out->back = [out, an, r0] {
      Tensor& g = an->grad_ref();
      for (int i = 0; i < out->grad.rows(); ++i)
        for (int j = 0; j < out->grad.cols(); ++j) g.at(r0 + i, j) += out->grad.at(i, j);
    };
  }
  return Value(out);
}

Value Graph::slice_cols(Value a, int c0, int c1) {
  GraphNode* an = a.node_;
  if (c0 < 0 || c1 > an->value.cols() || c0 >= c1)
    throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) + ")");
  Tensor v(an->value.rows(), c1 - c0);
  for (int i = 0; i < v.rows(); ++i)
    for (int j = c0; j < c1; ++j) v.at(i, j - c0) = an->value.at(i, j);
  GraphNode* out = make(std::move(v), an->needs_grad, nullptr);
  if (an->needs_grad) {
    out->back = [out, an, c0] {
      Tensor& g = an->grad_ref();
      for (int i = 0; i < out->grad.rows(); ++i)
        for (int j = 0; j < out->grad.cols(); ++j) g.at(i, c0 + j) += out->grad.at(i, j);
    };
  }
  return Value(out);
}

Value Graph::concat_rows(const std::vector<Value>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  int rows = 0;
  const int cols = parts[0].cols();
  bool ng = false;
  for (const Value& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
    ng = ng || p.node_->needs_grad;
  }
  Tensor v(rows, cols);
  int r = 0;
  for (const Value& p : parts) {
    for (int i = 0; i < p.rows(); ++i, ++r)
      for (int j = 0; j < cols; ++j) v.at(r, j) = p.t().at(i, j);
  }
  std::vector<GraphNode*> srcs;
  for (const Value& p : parts) srcs.push_back(p.node_);
  GraphNode* out = make(std::move(v), ng, nullptr);
  if (ng) {
    out->back = [out, srcs] {
      int r = 0;
      for (GraphNode* s : srcs) {
        if (s->needs_grad) {
          Tensor& g = s->grad_ref();
          for (int i = 0; i < s->value.rows(); ++i)
            for (int j = 0; j < s->value.cols(); ++j) g.at(i, j) += out->grad.at(r + i, j);
        }
        r += s->value.rows();
      }
    };
  }
  return Value(out);
}

Value Graph::concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const int rows = parts[0].rows();
  int cols = 0;
  bool ng = false;
  for (const Value& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.cols();
    ng = ng || p.node_->needs_grad;
  }
  Tensor v(rows, cols);
  int c = 0;
  for (const Value& p : parts) {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < p.cols(); ++j) v.at(i, c + j) = p.t().at(i, j);
    c += p.cols();
  }
  std::vector<GraphNode*> srcs;
  for (const Value& p : parts) srcs.push_back(p.node_);
  GraphNode* out = make(std::move(v), ng, nullptr);
  if (ng) {
    out->back = [out, srcs] {
      int c = 0;
      for (GraphNode* s : srcs) {
        if (s->needs_grad) {
          Tensor& g = s->grad_ref();
          for (int i = 0; i < s->value.rows(); ++i)
            for (int j = 0; j < s->value.cols(); ++j) g.at(i, j) += out->grad.at(i, c + j);
        }
        c += s->value.cols();
      }
    };
  }
  return Value(out);
}

Value Graph::gather_cols(Value a, std::vector<int> idx) {
  GraphNode* an = a.node_;
  if (an->value.rows() != 1) throw ShapeError("gather_cols: input must be a row vector");
  Tensor v(1, static_cast<int>(idx.size()));
  for (size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || idx[j] >= an->value.cols()) throw ShapeError("gather_cols: index out of range");
    v.at(0, static_cast<int>(j)) = an->value.at(0, idx[j]);
  }
  GraphNode* out = make(std::move(v), an->needs_grad, nullptr);
  if (an->needs_grad) {
    out->back = [out, an, idx = std::move(idx)] {
      Tensor& g = an->grad_ref();
      for (size_t j = 0; j < idx.size(); ++j) g.at(0, idx[j]) += out->grad.at(0, static_cast<int>(j));
    };
  }
  return Value(out);
}

Value Graph::softmax_rows(Value a) {
  GraphNode* an = a.node_;
  GraphNode* out = make(milora::softmax_rows(an->value), an->needs_grad, nullptr);
  if (an->needs_grad) {
    out->back = [out, an] {
      Tensor g(an->value.rows(), an->value.cols());
      for (int i = 0; i < g.rows(); ++i) {
        const double* y = out->value.row_ptr(i);
        const double* dy = out->grad.row_ptr(i);
        double dot = 0.0;
        for (int j = 0; j < g.cols(); ++j) dot += dy[j] * y[j];
        for (int j = 0; j < g.cols(); ++j) g.at(i, j) = y[j] * (dy[j] - dot);
      }
      an->add_grad(g);
    };
  }
  return Value(out);
}

Value Graph::rmsnorm(Value x, Value w, double eps) {
  GraphNode *xn = x.node_, *wn = w.node_;
  const bool ng = xn->needs_grad || wn->needs_grad;
  GraphNode* out = make(rmsnorm_rows(xn->value, wn->value, eps), ng, nullptr);
  if (ng) {
    out->back = [out, xn, wn, eps] {
      const Tensor& xv = xn->value;
      const Tensor& wv = wn->value;
      const int d = xv.cols();
      Tensor gx(xv.rows(), d);
      Tensor gw(1, d);
      for (int i = 0; i < xv.rows(); ++i) {
        const double* xi = xv.row_ptr(i);
        const double* dyi = out->grad.row_ptr(i);
        double ms = 0.0;
        for (int j = 0; j < d; ++j) ms += xi[j] * xi[j];
        const double r2 = ms / d + eps;
        const double inv = 1.0 / std::sqrt(r2);
        // dL/dw_j accumulates x_j / r; dL/dx needs the projection term.
        double proj = 0.0;
        for (int j = 0; j < d; ++j) proj += dyi[j] * wv.at(0, j) * xi[j];
        proj /= (d * r2);
        for (int j = 0; j < d; ++j) {
          gw.at(0, j) += dyi[j] * xi[j] * inv;
          gx.at(i, j) = inv * (dyi[j] * wv.at(0, j) - xi[j] * proj);
        }
      }
      if (xn->needs_grad) xn->add_grad(gx);
      if (wn->needs_grad) wn->add_grad(gw);
    };
  }
  return Value(out);
}

Value Graph::silu(Value a) {
  GraphNode* an = a.node_;
  GraphNode* out = make(milora::silu(an->value), an->needs_grad, nullptr);
  if (an->needs_grad) {
    out->back = [out, an] {
      Tensor g(an->value.rows(), an->value.cols());
      for (int64_t i = 0; i < g.size(); ++i) {
        const double x = an->value.data()[i];
        const double s = 1.0 / (1.0 + std::exp(-x));
        g.data()[i] = out->grad.data()[i] * s * (1.0 + x * (1.0 - s));
      }
      an->add_grad(g);
    };
  }
  return Value(out);
}

Value Graph::gelu(Value a) {
  GraphNode* an = a.node_;
  GraphNode* out = make(milora::gelu(an->value), an->needs_grad, nullptr);
  if (an->needs_grad) {
    out->back = [out, an] {
      Tensor g(an->value.rows(), an->value.cols());
      constexpr double kInvSqrt2Pi = 0.3989422804014326779;
      for (int64_t i = 0; i < g.size(); ++i) {
        const double x = an->value.data()[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        g.data()[i] = out->grad.data()[i] * (cdf + x * pdf);
      }
      an->add_grad(g);
    };
  }
  return Value(out);
}

Value Graph::relu(Value a) {
  GraphNode* an = a.node_;
  GraphNode* out = make(milora::relu(an->value), an->needs_grad, nullptr);
  if (an->needs_grad) {
    out->back = [out, an] {
      Tensor g(an->value.rows(), an->value.cols());
      for (int64_t i = 0; i < g.size(); ++i)
        g.data()[i] = an->value.data()[i] > 0.0 ? out->grad.data()[i] : 0.0;
      an->add_grad(g);
    };
  }
  return Value(out);
}

Value Graph::rational(Value x, Value num_coef, Value den_coef, DenomMode mode) {
  GraphNode *xn = x.node_, *an = num_coef.node_, *bn = den_coef.node_;
  if (an->value.rows() != 1 || bn->value.rows() != 1)
    throw ShapeError("rational: coefficient tensors must be row vectors");
  Tensor v(xn->value.rows(), xn->value.cols());
  for (int64_t i = 0; i < v.size(); ++i) {
    const RationalPoint p = rational_point(xn->value.data()[i], an->value, bn->value, mode);
    v.data()[i] = p.num / p.den;
  }
  const bool ng = xn->needs_grad || an->needs_grad || bn->needs_grad;
  GraphNode* out = make(std::move(v), ng, nullptr);
  if (ng) {
    out->back = [out, xn, an, bn, mode] {
      const int m = an->value.cols() - 1;
      const int n = bn->value.cols();
      Tensor gx(xn->value.rows(), xn->value.cols());
      Tensor ga(1, m + 1);
      Tensor gb(1, n);
      for (int64_t i = 0; i < xn->value.size(); ++i) {
        const double xv = xn->value.data()[i];
        const double dy = out->grad.data()[i];
        if (dy == 0.0) continue;
        const RationalPoint p = rational_point(xv, an->value, bn->value, mode);
        const double inv_den = 1.0 / p.den;
        gx.data()[i] = dy * (p.dnum_dx * inv_den - p.num * p.dden_dx * inv_den * inv_den);
        double xp = 1.0;
        for (int j = 0; j <= m; ++j) {
          ga.at(0, j) += dy * xp * inv_den;
          xp *= xv;
        }
        const double common = -dy * p.num * inv_den * inv_den;
        xp = xv;
        for (int j = 1; j <= n; ++j) {
          const double bj = bn->value.at(0, j - 1);
          const double dden_db =
              mode == DenomMode::kAbsOfSum ? sgn(p.poly) * xp : sgn(bj * xp) * xp;
          gb.at(0, j - 1) += common * dden_db;
          xp *= xv;
        }
      }
      if (xn->needs_grad) xn->add_grad(gx);
      if (an->needs_grad) an->add_grad(ga);
      if (bn->needs_grad) bn->add_grad(gb);
    };
  }
  return Value(out);
}

Value Graph::mean_rows(Value a) {
  GraphNode* an = a.node_;
  GraphNode* out = make(milora::mean_rows(an->value), an->needs_grad, nullptr);
  if (an->needs_grad) {
    out->back = [out, an] {
      const double inv = 1.0 / an->value.rows();
      Tensor g(an->value.rows(), an->value.cols());
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) g.at(i, j) = out->grad.at(0, j) * inv;
      an->add_grad(g);
    };
  }
  return Value(out);
}

Value Graph::max_rows(Value a) {
  GraphNode* an = a.node_;
  auto argmax = std::make_shared<std::vector<int>>();
  Tensor v = milora::max_rows(an->value, argmax.get());
  GraphNode* out = make(std::move(v), an->needs_grad, nullptr);
  if (an->needs_grad) {
    out->back = [out, an, argmax] {
      Tensor& g = an->grad_ref();
      for (int j = 0; j < out->grad.cols(); ++j) g.at((*argmax)[j], j) += out->grad.at(0, j);
    };
  }
  return Value(out);
}

Value Graph::sum(Value a) {
  GraphNode* an = a.node_;
  Tensor v(1, 1);
  for (double x : an->value.data()) v.at(0, 0) += x;
  GraphNode* out = make(std::move(v), an->needs_grad, nullptr);
  if (an->needs_grad) {
    out->back = [out, an] {
      an->add_grad(Tensor::full(an->value.rows(), an->value.cols(), out->grad.at(0, 0)));
    };
  }
  return Value(out);
}

Value Graph::normalize_sum(Value a) {
  GraphNode* an = a.node_;
  if (an->value.rows() != 1) throw ShapeError("normalize_sum: input must be a row vector");
  double s = 0.0;
  for (double x : an->value.data()) s += x;
  if (s == 0.0) throw ContractError("normalize_sum: zero sum");
  GraphNode* out = make(milora::scale(an->value, 1.0 / s), an->needs_grad, nullptr);
  if (an->needs_grad) {
    out->back = [out, an, s] {
      const int n = an->value.cols();
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += out->grad.at(0, j) * out->value.at(0, j);
      Tensor g(1, n);
      for (int j = 0; j < n; ++j) g.at(0, j) = (out->grad.at(0, j) - dot) / s;
      an->add_grad(g);
    };
  }
  return Value(out);
}

Value Graph::rope(Value a, int n_heads, int first_pos, double base) {
  GraphNode* an = a.node_;
  Tensor v = an->value;
  rope_inplace(v, n_heads, first_pos, base);
  GraphNode* out = make(std::move(v), an->needs_grad, nullptr);
  if (an->needs_grad) {
    out->back = [out, an, n_heads, first_pos, base] {
      // The rotation is orthogonal; its transpose is rotation by -theta,
      // which equals rotating grad rows at negated positions... instead just
      // apply the inverse rotation explicitly.
      Tensor g = out->grad;
      const int d = g.cols();
      const int hd = d / n_heads;
      for (int r = 0; r < g.rows(); ++r) {
        const double pos = static_cast<double>(first_pos + r);
        double* row = g.row_ptr(r);
        for (int h = 0; h < n_heads; ++h) {
          double* hp = row + h * hd;
          for (int i = 0; i < hd / 2; ++i) {
            const double theta = pos * std::pow(base, -2.0 * i / hd);
            const double c = std::cos(theta), s = std::sin(theta);
            const double x = hp[2 * i], y = hp[2 * i + 1];
            hp[2 * i] = x * c + y * s;
            hp[2 * i + 1] = -x * s + y * c;
          }
        }
      }
      an->add_grad(g);
    };
  }
  return Value(out);
}

Value Graph::embedding(const std::vector<int>& ids, Parameter& table) {
  const int n = static_cast<int>(ids.size());
  const int d = table.value.cols();
  Tensor v(n, d);
  for (int i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= table.value.rows())
      throw ContractError("embedding: token id " + std::to_string(ids[i]) + " out of range");
    for (int j = 0; j < d; ++j) v.at(i, j) = table.value.at(ids[i], j);
  }
  GraphNode* out = make(std::move(v), table.trainable, nullptr);
  if (table.trainable) {
    Parameter* tp = &table;
    out->back = [out, tp, ids] {
      for (size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < tp->grad.cols(); ++j)
          tp->grad.at(ids[i], j) += out->grad.at(static_cast<int>(i), j);
    };
  }
  return Value(out);
}

Value Graph::ce_sum(Value logits, const std::vector<int>& targets,
                    const std::vector<uint8_t>& mask) {
  GraphNode* ln = logits.node_;
  const int n = ln->value.rows();
  const int vsz = ln->value.cols();
  if (static_cast<int>(targets.size()) != n || static_cast<int>(mask.size()) != n)
    throw ShapeError("ce_sum: targets/mask length must equal logit rows");
  if (!ln->value.all_finite()) throw ContractError("ce_sum: non-finite logits");
  // Cache softmax probabilities for the backward pass.
  auto probs = std::make_shared<Tensor>(milora::softmax_rows(ln->value));
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    if (targets[i] < 0 || targets[i] >= vsz)
      throw ContractError("ce_sum: target id out of range");
    const double* xi = ln->value.row_ptr(i);
    double mx = xi[0];
    for (int j = 1; j < vsz; ++j) mx = std::max(mx, xi[j]);
    double lse = 0.0;
    for (int j = 0; j < vsz; ++j) lse += std::exp(xi[j] - mx);
    loss += (mx + std::log(lse)) - xi[targets[i]];
  }
  Tensor v(1, 1);
  v.at(0, 0) = loss;
  GraphNode* out = make(std::move(v), ln->needs_grad, nullptr);
  if (ln->needs_grad) {
    out->back = [out, ln, probs, targets, mask] {
      const double dy = out->grad.at(0, 0);
      Tensor g(ln->value.rows(), ln->value.cols());
      for (int i = 0; i < g.rows(); ++i) {
        if (!mask[i]) continue;
        for (int j = 0; j < g.cols(); ++j) g.at(i, j) = dy * probs->at(i, j);
        g.at(i, targets[i]) -= dy;
      }
      ln->add_grad(g);
    };
  }
  return Value(out);
}

void Graph::backward(Value loss) {
  if (!loss.valid()) throw ContractError("backward: invalid loss handle");
  if (loss.rows() != 1 || loss.cols() != 1)
    throw ContractError("backward: loss must be 1x1, got " + loss.node_->value.shape_str());
  for (GraphNode& n : nodes_) n.grad = Tensor();
  loss.node_->grad = Tensor::full(1, 1, 1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->needs_grad && it->back && !it->grad.empty()) it->back();
  }
}

double rational_value_scalar(double x, const Tensor& num_coef, const Tensor& den_coef,
                             DenomMode mode) {
  const RationalPoint p = rational_point(x, num_coef, den_coef, mode);
  return p.num / p.den;
}

}  // namespace milora
