#include "milora/router.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "milora/errors.hpp"
#include "milora/ops.hpp"

namespace milora {

namespace {

constexpr double kFitLo = -3.0;
constexpr double kFitHi = 3.0;
constexpr double kFitStep = 0.01;

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

std::vector<double> fit_grid() {
  std::vector<double> xs;
  const int n = static_cast<int>(std::lround((kFitHi - kFitLo) / kFitStep)) + 1;
  xs.reserve(n);
  for (int i = 0; i < n; ++i) xs.push_back(kFitLo + kFitStep * i);
  return xs;
}

// Evaluate numerator, denominator and coefficient partials at one x.
struct FitPoint {
  double value;
  std::vector<double> jac;  // d value / d [a_0..a_m, b_1..b_n]
};

FitPoint eval_with_jacobian(double x, const std::vector<double>& a,
                            const std::vector<double>& b, DenomMode mode) {
  const int m = static_cast<int>(a.size()) - 1;
  const int n = static_cast<int>(b.size());
  double num = 0.0, xp = 1.0;
  std::vector<double> xpow(std::max(m, n) + 1);
  for (int j = 0; j <= std::max(m, n); ++j) {
    xpow[j] = xp;
    xp *= x;
  }
  for (int j = 0; j <= m; ++j) num += a[j] * xpow[j];
  double poly = 0.0;
  for (int i = 1; i <= n; ++i) poly += b[i - 1] * xpow[i];
  double den;
  if (mode == DenomMode::kAbsOfSum) {
    den = 1.0 + std::fabs(poly);
  } else {
    den = 1.0;
    for (int i = 1; i <= n; ++i) den += std::fabs(b[i - 1] * xpow[i]);
  }
  FitPoint p;
  p.value = num / den;
  p.jac.assign(m + 1 + n, 0.0);
  const double inv = 1.0 / den;
  for (int j = 0; j <= m; ++j) p.jac[j] = xpow[j] * inv;
  for (int i = 1; i <= n; ++i) {
    const double dden_db = mode == DenomMode::kAbsOfSum
                               ? sgn(poly) * xpow[i]
                               : sgn(b[i - 1] * xpow[i]) * xpow[i];
    p.jac[m + i] = -num * inv * inv * dden_db;
  }
  return p;
}

// Solve A x = rhs for a small dense symmetric system via Gaussian
// elimination with partial pivoting.  Returns false on a (near-)singular
// pivot.
bool solve_dense(std::vector<std::vector<double>> A, std::vector<double> rhs,
                 std::vector<double>& x) {
  const int n = static_cast<int>(rhs.size());
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
    if (std::fabs(A[piv][col]) < 1e-300) return false;
    std::swap(A[piv], A[col]);
    std::swap(rhs[piv], rhs[col]);
    const double d = A[col][col];
    for (int r = col + 1; r < n; ++r) {
      const double f = A[r][col] / d;
      if (f == 0.0) continue;
      for (int c = col; c < n; ++c) A[r][c] -= f * A[col][c];
      rhs[r] -= f * rhs[col];
    }
  }
  x.assign(n, 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double s = rhs[r];
    for (int c = r + 1; c < n; ++c) s -= A[r][c] * x[c];
    x[r] = s / A[r][r];
  }
  return true;
}

double sum_sq_residual(const std::vector<double>& xs, const std::vector<double>& a,
                       const std::vector<double>& b, DenomMode mode) {
  double s = 0.0;
  for (double x : xs) {
    const FitPoint p = eval_with_jacobian(x, a, b, mode);
    const double r = p.value - gelu_scalar(x);
    s += r * r;
  }
  return s;
}

}  // namespace

RationalActivation make_rational(int m, int n, const std::string& name_prefix) {
  if (m < 1 || n < 1) throw ConfigError("rational: orders must be >= 1");
  RationalActivation act;
  act.num_coef = Parameter(Tensor(1, m + 1), ParamGroup::kArch, name_prefix + ".num");
  act.den_coef = Parameter(Tensor(1, n), ParamGroup::kArch, name_prefix + ".den");
  return act;
}

RationalActivation make_identity_rational(int m, int n, const std::string& name_prefix) {
  RationalActivation act = make_rational(m, n, name_prefix);
  act.num_coef.value.at(0, 1) = 1.0;
  return act;
}

GeluFitResult fit_gelu_rational(int m, int n, const std::string& name_prefix,
                                DenomMode mode) {
  if (m < 1 || n < 1) throw ConfigError("rational fit: orders must be >= 1");
  const std::vector<double> xs = fit_grid();
  const int na = m + 1;
  const int np = na + n;

  // Stage 1: plain polynomial least squares for the numerator (b = 0).
  std::vector<double> a(na, 0.0), b(n, 0.0);
  {
    std::vector<std::vector<double>> ata(na, std::vector<double>(na, 0.0));
    std::vector<double> aty(na, 0.0);
    for (double x : xs) {
      std::vector<double> row(na);
      double xp = 1.0;
      for (int j = 0; j < na; ++j) {
        row[j] = xp;
        xp *= x;
      }
      const double y = gelu_scalar(x);
      for (int i = 0; i < na; ++i) {
        aty[i] += row[i] * y;
        for (int j = 0; j < na; ++j) ata[i][j] += row[i] * row[j];
      }
    }
    std::vector<double> sol;
    if (solve_dense(ata, aty, sol)) a = sol;
  }

  // Stage 2: joint linear least squares on the cleared-denominator form
  // num(x) - y*poly(x) ~ y.  This is the classic rational-fit linearization;
  // crucially it moves the denominator coefficients off zero, where the
  // |poly| kink has a vanishing subgradient and damped refinement could not
  // escape.
  {
    std::vector<std::vector<double>> ata(np, std::vector<double>(np, 0.0));
    std::vector<double> aty(np, 0.0);
    std::vector<double> row(np);
    for (double x : xs) {
      const double y = gelu_scalar(x);
      double xp = 1.0;
      for (int j = 0; j < na; ++j) {
        row[j] = xp;
        xp *= x;
      }
      xp = x;
      for (int i = 0; i < n; ++i) {
        row[na + i] = -y * xp;
        xp *= x;
      }
      for (int i = 0; i < np; ++i) {
        aty[i] += row[i] * y;
        for (int j = 0; j < np; ++j) ata[i][j] += row[i] * row[j];
      }
    }
    std::vector<double> sol;
    if (solve_dense(ata, aty, sol)) {
      std::vector<double> a2(sol.begin(), sol.begin() + na);
      std::vector<double> b2(sol.begin() + na, sol.end());
      // Keep the linearized start only if it beats the numerator-only fit
      // under the true (absolute-value) denominator.
      if (sum_sq_residual(xs, a2, b2, mode) < sum_sq_residual(xs, a, b, mode)) {
        a = a2;
        b = b2;
      }
    }
  }

  // Stage 3: damped (Levenberg-Marquardt) least squares over all
  // coefficients.  Fully deterministic; damping scales the normal-equation
  // diagonal and adapts to whether a trial step reduced the cost.
  double cost = sum_sq_residual(xs, a, b, mode);
  double lambda = 1e-3;
  int iters = 0;
  for (int outer = 0; outer < 200; ++outer) {
    ++iters;
    std::vector<std::vector<double>> jtj(np, std::vector<double>(np, 0.0));
    std::vector<double> jtr(np, 0.0);
    for (double x : xs) {
      const FitPoint p = eval_with_jacobian(x, a, b, mode);
      const double r = p.value - gelu_scalar(x);
      for (int i = 0; i < np; ++i) {
        jtr[i] += p.jac[i] * r;
        for (int j = i; j < np; ++j) jtj[i][j] += p.jac[i] * p.jac[j];
      }
    }
    for (int i = 0; i < np; ++i)
      for (int j = 0; j < i; ++j) jtj[i][j] = jtj[j][i];

    bool stepped = false;
    for (int attempt = 0; attempt < 40 && !stepped; ++attempt) {
      std::vector<std::vector<double>> damped = jtj;
      for (int i = 0; i < np; ++i)
        damped[i][i] += lambda * std::max(jtj[i][i], 1e-12);
      std::vector<double> rhs(np);
      for (int i = 0; i < np; ++i) rhs[i] = -jtr[i];
      std::vector<double> delta;
      if (!solve_dense(damped, rhs, delta)) {
        lambda *= 10.0;
        continue;
      }
      std::vector<double> a2 = a, b2 = b;
      for (int j = 0; j < na; ++j) a2[j] += delta[j];
      for (int j = 0; j < n; ++j) b2[j] += delta[na + j];
      const double cost2 = sum_sq_residual(xs, a2, b2, mode);
      if (cost2 < cost) {
        a = a2;
        b = b2;
        const double rel = (cost - cost2) / std::max(cost, 1e-300);
        cost = cost2;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = true;
        if (rel < 1e-14) outer = 1 << 29;  // converged
      } else {
        lambda *= 10.0;
      }
    }
    if (!stepped) break;  // no further progress at any damping
  }

  GeluFitResult out;
  out.activation = make_rational(m, n, name_prefix);
  for (int j = 0; j < na; ++j) out.activation.num_coef.value.at(0, j) = a[j];
  for (int j = 0; j < n; ++j) out.activation.den_coef.value.at(0, j) = b[j];
  double max_resid = 0.0;
  for (double x : xs) {
    const double v = rational_value_scalar(x, out.activation.num_coef.value,
                                           out.activation.den_coef.value, mode);
    max_resid = std::max(max_resid, std::fabs(v - gelu_scalar(x)));
  }
  out.max_abs_residual = max_resid;
  out.iterations = iters;
  return out;
}

Tensor rational_eval(const RationalActivation& act, const Tensor& x, DenomMode mode) {
  Tensor y = x;
  for (double& v : y.data())
    v = rational_value_scalar(v, act.num_coef.value, act.den_coef.value, mode);
  return y;
}

bool RoutingDecision::complete(int n_layers) const {
  if (static_cast<int>(layers.size()) != n_layers) return false;
  for (const LayerRoute& lr : layers)
    if (lr.experts.empty() || lr.experts.size() != lr.gates.size()) return false;
  return true;
}

uint64_t RoutingDecision::fingerprint() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const LayerRoute& lr : layers) {
    for (int e : lr.experts) h = fnv1a64(&e, sizeof e, h);
    for (double g : lr.gates) h = fnv1a64(&g, sizeof g, h);
  }
  return h;
}

std::vector<Parameter*> LoraRouter::params() {
  std::vector<Parameter*> out{&weight};
  if (activation == RouterActivation::kRational) {
    out.push_back(&rational.num_coef);
    out.push_back(&rational.den_coef);
  }
  if (pooler == PoolerKind::kSelfAttention) out.push_back(&attn_query);
  return out;
}

int64_t LoraRouter::param_count() const {
  int64_t n = weight.value.size();
  if (activation == RouterActivation::kRational)
    n += rational.num_coef.value.size() + rational.den_coef.value.size();
  if (pooler == PoolerKind::kSelfAttention) n += attn_query.value.size();
  return n;
}

void RouterSettings::validate() const {
  if (k < 1 || k > kNumModules)
    throw ConfigError("router: k must be in [1, " + std::to_string(kNumModules) + "]");
  if (rational_m < 1 || rational_n < 1)
    throw ConfigError("router: rational orders must be >= 1");
}

LoraRouter init_router(const BackboneConfig& cfg, const RouterSettings& s, int layer,
                       RouterActivation activation, uint64_t seed) {
  s.validate();
  LoraRouter r;
  r.layer_index = layer;
  const std::string prefix = "router.layer" + std::to_string(layer);
  {
    RngStream rng(seed, prefix + ".weight");
    const double std = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    r.weight = Parameter(Tensor::randn(rng, cfg.d_model, kNumModules, std),
                         ParamGroup::kTask, prefix + ".weight");
  }
  r.activation = activation;
  if (activation == RouterActivation::kRational) {
    GeluFitResult fit = fit_gelu_rational(s.rational_m, s.rational_n, prefix + ".act", s.denom);
    r.rational = std::move(fit.activation);
  }
  r.pooler = s.pooler;
  if (s.pooler == PoolerKind::kSelfAttention) {
    // Zero start: the attention pooler begins as exact mean pooling and
    // learns to specialize.
    r.attn_query = Parameter(Tensor(cfg.d_model, 1), ParamGroup::kTask, prefix + ".pool_query");
  }
  return r;
}

Tensor pool_states(const Tensor& states, PoolerKind kind, const Parameter* attn_query) {
  if (states.rows() < 1) throw ContractError("pool_states: empty sequence");
  switch (kind) {
    case PoolerKind::kLastToken: {
      Tensor out(1, states.cols());
      for (int j = 0; j < states.cols(); ++j) out.at(0, j) = states.at(states.rows() - 1, j);
      return out;
    }
    case PoolerKind::kMean:
      return mean_rows(states);
    case PoolerKind::kMax:
      return max_rows(states);
    case PoolerKind::kSelfAttention: {
      if (!attn_query) throw ContractError("pool_states: attention pooler without query");
      // scores over the sequence axis -> one attention-weighted average row
      Tensor u = matmul(states, attn_query->value);       // n x 1
      Tensor att = softmax_rows(transpose(u));            // 1 x n
      return matmul(att, states);                         // 1 x d
    }
  }
  throw ContractError("pool_states: bad pooler kind");
}

Tensor router_probs(const LoraRouter& r, const Tensor& pooled, DenomMode denom) {
  Tensor z;
  switch (r.activation) {
    case RouterActivation::kRational: z = rational_eval(r.rational, pooled, denom); break;
    case RouterActivation::kGelu: z = gelu(pooled); break;
    case RouterActivation::kRelu: z = relu(pooled); break;
  }
  return softmax_rows(matmul(z, r.weight.value));
}

std::vector<int> topk_indices(const Tensor& probs, int k) {
  if (probs.rows() != 1) throw ContractError("topk_indices: probs must be a row vector");
  if (k < 1 || k > probs.cols()) throw ContractError("topk_indices: bad k");
  std::vector<int> idx(probs.cols());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int x, int y) {
    if (probs.at(0, x) != probs.at(0, y)) return probs.at(0, x) > probs.at(0, y);
    return x < y;  // ties choose the lower index
  });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<double> make_gates(const Tensor& probs, const std::vector<int>& experts,
                               GatingMode gating) {
  std::vector<double> gates(experts.size(), 1.0);
  if (gating == GatingMode::kWeighted) {
    double s = 0.0;
    for (int e : experts) s += probs.at(0, e);
    for (size_t i = 0; i < experts.size(); ++i) gates[i] = probs.at(0, experts[i]) / s;
  }
  return gates;
}

LayerRoute route(const LoraRouter& r, const Tensor& pooled, int k, GatingMode gating,
                 DenomMode denom) {
  LayerRoute lr;
  lr.probs = router_probs(r, pooled, denom);
  lr.experts = topk_indices(lr.probs, k);
  lr.gates = make_gates(lr.probs, lr.experts, gating);
  return lr;
}

Value pool_states_g(Graph& g, Value states, PoolerKind kind, Parameter* attn_query) {
  switch (kind) {
    case PoolerKind::kLastToken:
      return g.slice_rows(states, states.rows() - 1, states.rows());
    case PoolerKind::kMean:
      return g.mean_rows(states);
    case PoolerKind::kMax:
      return g.max_rows(states);
    case PoolerKind::kSelfAttention: {
      if (!attn_query) throw ContractError("pool_states_g: attention pooler without query");
      Value u = g.matmul(states, g.param(*attn_query));
      Value att = g.softmax_rows(g.transpose(u));
      return g.matmul(att, states);
    }
  }
  throw ContractError("pool_states_g: bad pooler kind");
}

RouteG route_g(Graph& g, LoraRouter& r, Value pooled, int k, GatingMode gating,
               DenomMode denom) {
  Value z;
  switch (r.activation) {
    case RouterActivation::kRational:
      z = g.rational(pooled, g.param(r.rational.num_coef), g.param(r.rational.den_coef), denom);
      break;
    case RouterActivation::kGelu: z = g.gelu(pooled); break;
    case RouterActivation::kRelu: z = g.relu(pooled); break;
  }
  RouteG out;
  out.probs = g.softmax_rows(g.matmul(z, g.param(r.weight)));
  out.fixed.probs = out.probs.t();
  out.fixed.experts = topk_indices(out.fixed.probs, k);
  Value sel = g.gather_cols(out.probs, out.fixed.experts);
  if (gating == GatingMode::kWeighted) {
    out.gates = g.normalize_sum(sel);
  } else {
    out.gates = g.input(Tensor::full(1, k, 1.0));
  }
  out.fixed.gates.assign(out.gates.t().data().begin(), out.gates.t().data().end());
  return out;
}

Tensor hard_fractions(const std::vector<Tensor>& batch_probs) {
  if (batch_probs.empty()) throw ContractError("hard_fractions: empty batch");
  Tensor f(1, batch_probs[0].cols());
  for (const Tensor& p : batch_probs) f.at(0, argmax_row(p, 0)) += 1.0;
  f.scale_inplace(1.0 / static_cast<double>(batch_probs.size()));
  return f;
}

LoadStats load_balance_stats(const std::vector<Tensor>& batch_probs) {
  LoadStats s;
  s.hard_frac = hard_fractions(batch_probs);
  s.mean_prob = Tensor(1, batch_probs[0].cols());
  for (const Tensor& p : batch_probs) s.mean_prob.add_inplace(p);
  s.mean_prob.scale_inplace(1.0 / static_cast<double>(batch_probs.size()));
  return s;
}

}  // namespace milora
