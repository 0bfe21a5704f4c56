#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "milora/errors.hpp"
#include "milora/graph.hpp"
#include "milora/ops.hpp"
#include "milora/optim.hpp"
#include "milora/rng.hpp"
#include "milora/tensor.hpp"
#include "oracles.hpp"

using namespace milora;

namespace {

Parameter make_param(RngStream& rng, int r, int c, const std::string& name,
                     double stddev = 1.0) {
  return Parameter(Tensor::randn(rng, r, c, stddev), ParamGroup::kTask, name);
}

// Reduces any tensor to a scalar with fixed random weights so FD checks see
// every output element.
Value weighted_sum(Graph& g, Value v, const Tensor& w) {
  return g.sum(g.mul(v, g.input(w)));
}

}  // namespace

TEST_CASE("tensor: construction and shape checks") {
  Tensor t(2, 3);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.size() == 6);
  for (double v : t.data()) CHECK(v == 0.0);

  Tensor lit{{1.0, 2.0}, {3.0, 4.0}};
  CHECK(lit.at(1, 0) == 3.0);
  CHECK_THROWS_AS(Tensor(2, 2, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(Tensor(-1, 2), ShapeError);

  Tensor i3 = Tensor::identity(3);
  CHECK(i3.at(0, 0) == 1.0);
  CHECK(i3.at(0, 1) == 0.0);

  Tensor r = Tensor::row({5.0, 6.0});
  CHECK(r.rows() == 1);
  CHECK(r.at(0, 1) == 6.0);

  CHECK(lit.max_abs() == 4.0);
  Tensor lit2 = lit;
  lit2.at(0, 1) += 0.25;
  CHECK(lit.max_abs_diff(lit2) == 0.25);
}

TEST_CASE("rng: substreams are deterministic and independent") {
  RngStream a(7, "weights"), a2(7, "weights"), b(7, "bias");
  bool all_equal = true, any_equal_cross = true;
  for (int i = 0; i < 64; ++i) {
    uint64_t x = a.next_u64();
    all_equal = all_equal && (x == a2.next_u64());
    any_equal_cross = any_equal_cross && (x == b.next_u64());
  }
  CHECK(all_equal);
  CHECK_FALSE(any_equal_cross);

  RngStream u(123);
  double mn = 1.0, mx = 0.0, sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = u.uniform();
    mn = std::min(mn, x);
    mx = std::max(mx, x);
    sum += x;
  }
  CHECK(mn >= 0.0);
  CHECK(mx < 1.0);
  CHECK(std::fabs(sum / n - 0.5) < 0.02);

  RngStream nrm(42);
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = nrm.normal();
    s1 += x;
    s2 += x * x;
  }
  CHECK(std::fabs(s1 / n) < 0.03);
  CHECK(std::fabs(s2 / n - 1.0) < 0.05);

  RngStream ui(9);
  std::vector<int> seen(5, 0);
  for (int i = 0; i < 5000; ++i) {
    int x = ui.uniform_int(0, 4);
    REQUIRE(x >= 0);
    REQUIRE(x < 5);
    seen[static_cast<size_t>(x)]++;
  }
  for (int c : seen) CHECK(c > 800);
}

TEST_CASE("fnv1a64 matches the published test vectors") {
  // Reference digests of the 64-bit FNV-1a function.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("matmul family agrees with the naive triple loop") {
  RngStream rng(11);
  for (int trial = 0; trial < 12; ++trial) {
    int m = rng.uniform_int(1, 7);
    int k = rng.uniform_int(1, 7);
    int n = rng.uniform_int(1, 7);
    Tensor a = Tensor::randn(rng, m, k, 1.0);
    Tensor b = Tensor::randn(rng, k, n, 1.0);
    Tensor want = oracle::matmul(a, b);
    CHECK(matmul(a, b).max_abs_diff(want) < 1e-12);
    CHECK(matmul_nt(a, transpose(b)).max_abs_diff(want) < 1e-12);
    CHECK(matmul_tn(transpose(a), b).max_abs_diff(want) < 1e-12);
  }
  CHECK_THROWS_AS(matmul(Tensor(2, 3), Tensor(2, 3)), ShapeError);
  CHECK_THROWS_AS(add(Tensor(2, 3), Tensor(3, 2)), ShapeError);
}

TEST_CASE("softmax rows: exact two-point case, normalization, finiteness") {
  Tensor x{{0.0, std::log(2.0)}};
  Tensor y = softmax_rows(x);
  CHECK(std::fabs(y.at(0, 0) - 1.0 / 3.0) < 1e-15);
  CHECK(std::fabs(y.at(0, 1) - 2.0 / 3.0) < 1e-15);

  RngStream rng(3);
  Tensor big = Tensor::randn(rng, 4, 9, 50.0);  // large logits stay stable
  Tensor p = softmax_rows(big);
  for (int r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (int c = 0; c < p.cols(); ++c) {
      s += p.at(r, c);
      CHECK(p.at(r, c) >= 0.0);
    }
    CHECK(std::fabs(s - 1.0) < 1e-12);
  }

  Tensor bad{{1.0, std::numeric_limits<double>::quiet_NaN()}};
  CHECK_THROWS_AS(softmax_rows(bad), ContractError);
}

TEST_CASE("masked attention scores: fully masked entries vanish exactly") {
  // A score of -1e30 must underflow to an exact 0 probability after the
  // max-subtracted exponential, so padding columns contribute nothing.
  Tensor scores{{0.3, -1e30, -1e30}};
  Tensor p = softmax_rows(scores);
  CHECK(p.at(0, 0) == 1.0);
  CHECK(p.at(0, 1) == 0.0);
  CHECK(p.at(0, 2) == 0.0);

  Tensor mask = causal_mask(3);
  CHECK(mask.at(0, 0) == 0.0);
  CHECK(mask.at(0, 1) == -1e30);
  CHECK(mask.at(2, 1) == 0.0);
}

TEST_CASE("rmsnorm rows matches a direct computation") {
  RngStream rng(5);
  Tensor x = Tensor::randn(rng, 3, 6, 2.0);
  Tensor w = Tensor::randn(rng, 1, 6, 1.0);
  const double eps = 1e-5;
  Tensor y = rmsnorm_rows(x, w, eps);
  for (int r = 0; r < 3; ++r) {
    double ms = 0.0;
    for (int c = 0; c < 6; ++c) ms += x.at(r, c) * x.at(r, c);
    double rms = std::sqrt(ms / 6.0 + eps);
    for (int c = 0; c < 6; ++c)
      CHECK(std::fabs(y.at(r, c) - x.at(r, c) / rms * w.at(0, c)) < 1e-14);
  }
}

TEST_CASE("activation scalars") {
  CHECK(gelu_scalar(0.0) == 0.0);
  // gelu(1) = 0.5 * (1 + erf(1/sqrt(2)))
  CHECK(std::fabs(gelu_scalar(1.0) - 0.8413447460685429) < 1e-12);
  CHECK(std::fabs(gelu_scalar(-1.0) - (-0.15865525393145707)) < 1e-12);
  Tensor x{{-2.0, 0.0, 3.0}};
  Tensor s = silu(x);
  CHECK(std::fabs(s.at(0, 0) - (-2.0 / (1.0 + std::exp(2.0)))) < 1e-15);
  CHECK(s.at(0, 1) == 0.0);
  Tensor r = relu(x);
  CHECK(r.at(0, 0) == 0.0);
  CHECK(r.at(0, 2) == 3.0);
}

TEST_CASE("rope: position 0 is identity, rotations preserve pair norms") {
  const int heads = 2, d = 8;
  RngStream rng(17);
  Tensor x = Tensor::randn(rng, 3, d, 1.0);
  Tensor x0 = x;
  rope_inplace(x0, heads, 0, 10000.0);
  for (int c = 0; c < d; ++c) CHECK(x0.at(0, c) == x.at(0, c));  // row 0 at pos 0

  Tensor xr = x;
  rope_inplace(xr, heads, 5, 10000.0);
  const int hd = d / heads;
  for (int r = 0; r < 3; ++r)
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < hd / 2; ++i) {
        int c0 = h * hd + 2 * i, c1 = c0 + 1;
        double n_before = x.at(r, c0) * x.at(r, c0) + x.at(r, c1) * x.at(r, c1);
        double n_after = xr.at(r, c0) * xr.at(r, c0) + xr.at(r, c1) * xr.at(r, c1);
        CHECK(std::fabs(n_before - n_after) < 1e-12);
      }

  // Same absolute position must give the same rotation regardless of where
  // the row sits in the tensor (prefill vs incremental decode agreement).
  Tensor full = Tensor::randn(rng, 4, d, 1.0);
  Tensor last = Tensor(1, d);
  for (int c = 0; c < d; ++c) last.at(0, c) = full.at(3, c);
  rope_inplace(full, heads, 0, 10000.0);
  rope_inplace(last, heads, 3, 10000.0);
  for (int c = 0; c < d; ++c) CHECK(last.at(0, c) == full.at(3, c));
}

TEST_CASE("reductions") {
  Tensor x{{1.0, -2.0}, {3.0, 0.5}, {-1.0, 7.0}};
  Tensor m = mean_rows(x);
  CHECK(std::fabs(m.at(0, 0) - 1.0) < 1e-15);
  CHECK(std::fabs(m.at(0, 1) - 5.5 / 3.0) < 1e-15);
  std::vector<int> arg;
  Tensor mx = max_rows(x, &arg);
  CHECK(mx.at(0, 0) == 3.0);
  CHECK(mx.at(0, 1) == 7.0);
  CHECK(arg == std::vector<int>{1, 2});
  // Ties resolve to the lowest row index.
  Tensor tie{{2.0}, {2.0}};
  std::vector<int> targ;
  max_rows(tie, &targ);
  CHECK(targ == std::vector<int>{0});
  CHECK(argmax_row(Tensor{{0.5, 3.0, 3.0}}, 0) == 1);
}

// ---------------------------------------------------------------------------
// Autodiff: every graph op is checked against central finite differences.
// ---------------------------------------------------------------------------

TEST_CASE("graph: finite differences across the op set") {
  RngStream rng(29);
  Parameter A = make_param(rng, 3, 4, "A");
  Parameter B = make_param(rng, 4, 2, "B");
  Parameter C = make_param(rng, 3, 2, "C");
  Parameter bias = make_param(rng, 1, 2, "bias");
  Tensor w32 = Tensor::randn(rng, 3, 2, 1.0);
  Tensor w34 = Tensor::randn(rng, 3, 4, 1.0);
  Tensor w43 = Tensor::randn(rng, 4, 3, 1.0);

  SUBCASE("matmul, add, bias, elementwise, scale") {
    auto build = [&](Graph& g) {
      Value y = g.matmul(g.param(A), g.param(B));
      y = g.add(y, g.param(C));
      y = g.add_bias(y, g.param(bias));
      y = g.mul(y, g.scale(g.param(C), 0.7));
      return weighted_sum(g, y, w32);
    };
    auto rep = oracle::fd_check(build, {&A, &B, &C, &bias});
    CHECK(rep.worst_ratio < 1.0);
  }

  SUBCASE("transpose and slices") {
    auto build = [&](Graph& g) {
      Value at = g.transpose(g.param(A));  // 4x3
      Value top = g.slice_rows(at, 0, 2);
      Value bottom = g.slice_rows(at, 2, 4);
      Value joined = g.concat_rows({top, bottom});
      Value left = g.slice_cols(joined, 0, 1);
      Value rest = g.slice_cols(joined, 1, 3);
      return weighted_sum(g, g.concat_cols({left, rest}), w43);
    };
    auto rep = oracle::fd_check(build, {&A});
    CHECK(rep.worst_ratio < 1.0);
  }

  SUBCASE("softmax, silu, gelu, relu chains") {
    auto build = [&](Graph& g) {
      Value y = g.softmax_rows(g.param(A));
      y = g.add(y, g.silu(g.param(A)));
      y = g.add(y, g.gelu(g.param(A)));
      y = g.add(y, g.relu(g.param(A)));
      return weighted_sum(g, y, w34);
    };
    auto rep = oracle::fd_check(build, {&A});
    CHECK(rep.worst_ratio < 1.0);
  }

  SUBCASE("rmsnorm") {
    Parameter w = make_param(rng, 1, 4, "w");
    auto build = [&](Graph& g) {
      return weighted_sum(g, g.rmsnorm(g.param(A), g.param(w), 1e-5), w34);
    };
    auto rep = oracle::fd_check(build, {&A, &w});
    CHECK(rep.worst_ratio < 1.0);
  }

  SUBCASE("reductions and normalize_sum") {
    Parameter v = make_param(rng, 1, 5, "v");
    for (int i = 0; i < 5; ++i) v.value.at(0, i) = 0.3 + rng.uniform();  // positive
    Tensor w1 = Tensor::randn(rng, 1, 4 + 4 + 1 + 5, 1.0);
    auto build2 = [&](Graph& g) {
      Value stats = g.concat_cols(
          {g.mean_rows(g.param(A)), g.max_rows(g.param(A)), g.sum(g.param(A))});
      Value nv = g.normalize_sum(g.param(v));
      return weighted_sum(g, g.concat_cols({stats, nv}), w1);
    };
    auto rep = oracle::fd_check(build2, {&A, &v});
    CHECK(rep.worst_ratio < 1.0);
  }

  SUBCASE("scale_by and gather_cols") {
    Parameter s = make_param(rng, 1, 1, "s");
    Parameter v = make_param(rng, 1, 6, "v");
    Tensor w1 = Tensor::randn(rng, 1, 3, 1.0);
    auto build = [&](Graph& g) {
      Value picked = g.gather_cols(g.param(v), {4, 0, 2});
      return weighted_sum(g, g.scale_by(picked, g.param(s)), w1);
    };
    auto rep = oracle::fd_check(build, {&s, &v});
    CHECK(rep.worst_ratio < 1.0);
  }

  SUBCASE("rope") {
    auto build = [&](Graph& g) {
      return weighted_sum(g, g.rope(g.param(A), 2, 3, 10000.0), w34);
    };
    auto rep = oracle::fd_check(build, {&A});
    CHECK(rep.worst_ratio < 1.0);
  }

  SUBCASE("embedding scatter-add") {
    Parameter table = make_param(rng, 5, 3, "table");
    Tensor w1 = Tensor::randn(rng, 4, 3, 1.0);
    auto build = [&](Graph& g) {
      return weighted_sum(g, g.embedding({1, 4, 1, 0}, table), w1);  // repeated id
    };
    auto rep = oracle::fd_check(build, {&table});
    CHECK(rep.worst_ratio < 1.0);
  }

  SUBCASE("cross entropy with mask") {
    Parameter logits = make_param(rng, 4, 5, "logits");
    auto build = [&](Graph& g) {
      return g.ce_sum(g.param(logits), {2, 0, 4, 1}, {1, 0, 1, 1});
    };
    auto rep = oracle::fd_check(build, {&logits});
    CHECK(rep.worst_ratio < 1.0);
    // Masked rows receive exactly zero gradient.
    logits.zero_grad();
    Graph g;
    Value loss = build(g);
    g.backward(loss);
    for (int c = 0; c < 5; ++c) CHECK(logits.grad.at(1, c) == 0.0);
  }
}

TEST_CASE("graph: cross entropy value matches a direct computation") {
  // Uniform logits: each row contributes log(vocab).
  Tensor z = Tensor::full(3, 7, 0.42);
  Parameter p(z, ParamGroup::kTask, "z");
  Graph g;
  Value loss = g.ce_sum(g.param(p), {0, 6, 3}, {1, 1, 1});
  CHECK(std::fabs(loss.t().at(0, 0) - 3.0 * std::log(7.0)) < 1e-12);
  // All-masked sums to zero (callers divide by the count and must guard).
  Graph g2;
  CHECK(g2.ce_sum(g2.param(p), {0, 6, 3}, {0, 0, 0}).t().at(0, 0) == 0.0);
}

TEST_CASE("graph: gradient bookkeeping") {
  RngStream rng(31);
  Parameter A = make_param(rng, 2, 2, "A");
  Parameter frozen(Tensor::randn(rng, 2, 2, 1.0), ParamGroup::kTask, "F", false);
  Tensor w = Tensor::randn(rng, 2, 2, 1.0);

  SUBCASE("backward requires a scalar") {
    Graph g;
    Value y = g.param(A);
    CHECK_THROWS_AS(g.backward(y), ContractError);
  }

  SUBCASE("parameter grads accumulate across backward calls") {
    A.zero_grad();
    Graph g;
    Value loss = weighted_sum(g, g.param(A), w);
    g.backward(loss);
    Tensor once = A.grad;
    g.backward(loss);
    Tensor twice = A.grad;
    for (int64_t i = 0; i < once.size(); ++i)
      CHECK(std::fabs(twice.data()[i] - 2.0 * once.data()[i]) < 1e-15);
    A.zero_grad();
    CHECK(A.grad.max_abs() == 0.0);
  }

  SUBCASE("gradients flow through frozen parameters without accumulating") {
    A.zero_grad();
    frozen.zero_grad();
    Graph g;
    // loss = sum(w * (A @ F)): dA depends on F's value, F gets nothing.
    Value loss = weighted_sum(g, g.matmul(g.param(A), g.param(frozen)), w);
    g.backward(loss);
    CHECK(frozen.grad.max_abs() == 0.0);
    CHECK(A.grad.max_abs() > 0.0);
    Tensor expect = matmul_nt(w, frozen.value);
    CHECK(A.grad.max_abs_diff(expect) < 1e-12);
  }
}

TEST_CASE("rational op: identity coefficients reproduce x exactly") {
  // Numerator (0, 1, 0, ...), empty-effect denominator: R(x) = x / (1 + |0|).
  Parameter num(Tensor::row({0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0}), ParamGroup::kArch, "num");
  Parameter den(Tensor::row({0.0, 0.0, 0.0, 0.0, 0.0}), ParamGroup::kArch, "den");
  for (DenomMode mode : {DenomMode::kAbsOfSum, DenomMode::kSumOfAbs}) {
    Graph g;
    Tensor xs(1, 201);
    for (int i = 0; i <= 200; ++i) xs.at(0, i) = -5.0 + 0.05 * i;
    Value y = g.rational(g.input(xs), g.param(num), g.param(den), mode);
    CHECK(y.t().max_abs_diff(xs) <= 1e-15);
  }
}

TEST_CASE("rational op: finite differences in x and both coefficient vectors") {
  RngStream rng(37);
  Parameter x = make_param(rng, 2, 3, "x");
  Parameter num(Tensor::randn(rng, 1, 7, 0.5), ParamGroup::kArch, "num");
  Parameter den(Tensor::randn(rng, 1, 5, 0.5), ParamGroup::kArch, "den");
  Tensor w = Tensor::randn(rng, 2, 3, 1.0);
  for (DenomMode mode : {DenomMode::kAbsOfSum, DenomMode::kSumOfAbs}) {
    auto build = [&](Graph& g) {
      return weighted_sum(g, g.rational(g.param(x), g.param(num), g.param(den), mode), w);
    };
    auto rep = oracle::fd_check(build, {&x, &num, &den});
    INFO("mode ", mode == DenomMode::kAbsOfSum ? "abs-of-sum" : "sum-of-abs",
         " worst at ", rep.worst_param);
    CHECK(rep.worst_ratio < 1.0);
  }
}

TEST_CASE("rational op: denominator never dips below one") {
  RngStream rng(41);
  Parameter num(Tensor::randn(rng, 1, 7, 2.0), ParamGroup::kArch, "num");
  Parameter den(Tensor::randn(rng, 1, 5, 2.0), ParamGroup::kArch, "den");
  Tensor xs = Tensor::randn(rng, 1, 64, 3.0);
  for (DenomMode mode : {DenomMode::kAbsOfSum, DenomMode::kSumOfAbs}) {
    Graph g;
    Value y = g.rational(g.input(xs), g.param(num), g.param(den), mode);
    CHECK(y.t().all_finite());
  }
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

TEST_CASE("adamw: multi-step trajectory matches the scalar recurrence") {
  RngStream rng(43);
  Parameter p = make_param(rng, 2, 3, "p");
  Tensor w0 = p.value;
  AdamWConfig cfg;
  cfg.lr = 1e-2;
  cfg.weight_decay = 0.01;
  AdamW opt({&p}, cfg);

  std::vector<oracle::AdamScalarState> st(static_cast<size_t>(w0.size()));
  std::vector<double> want(w0.data().begin(), w0.data().end());
  for (int step = 1; step <= 5; ++step) {
    Tensor grad = Tensor::randn(rng, 2, 3, 1.0);
    p.grad = grad;
    const double scale = (step == 3) ? 0.25 : 1.0;  // exercise lr_scale
    opt.step(scale);
    for (size_t i = 0; i < want.size(); ++i)
      want[i] = oracle::adamw_scalar_step(want[i], grad.data()[i], st[i], step,
                                          cfg.lr * scale, cfg.beta1, cfg.beta2,
                                          cfg.eps, cfg.weight_decay);
    // step() must leave the gradient untouched.
    CHECK(p.grad.max_abs_diff(grad) == 0.0);
  }
  CHECK(opt.step_count() == 5);
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(std::fabs(p.value.data()[i] - want[i]) < 1e-14);
}

TEST_CASE("adamw: weight decay is decoupled from the gradient") {
  Parameter p(Tensor::full(1, 1, 2.0), ParamGroup::kTask, "p");
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  AdamW opt({&p}, cfg);
  p.zero_grad();  // zero gradient: only the decay term moves the weight
  opt.step();
  CHECK(std::fabs(p.value.at(0, 0) - (2.0 - 0.1 * 0.5 * 2.0)) < 1e-15);
}

TEST_CASE("adamw: separate instances over disjoint groups do not interact") {
  RngStream rng(47);
  Parameter task = make_param(rng, 2, 2, "task");
  Parameter arch(Tensor::randn(rng, 2, 2, 1.0), ParamGroup::kArch, "arch");
  std::vector<Parameter*> all{&task, &arch};
  auto task_params = filter_group(all, ParamGroup::kTask);
  auto arch_params = filter_group(all, ParamGroup::kArch);
  REQUIRE(task_params == std::vector<Parameter*>{&task});
  REQUIRE(arch_params == std::vector<Parameter*>{&arch});

  AdamW topt(task_params, AdamWConfig{});
  AdamW aopt(arch_params, AdamWConfig{});
  Tensor arch_before = arch.value;
  task.grad.fill(1.0);
  arch.grad.fill(1.0);
  topt.step();
  CHECK(arch.value.max_abs_diff(arch_before) == 0.0);  // bit-identical

  // Frozen parameters are skipped entirely.
  Parameter frozen(Tensor::full(1, 1, 3.0), ParamGroup::kTask, "f", false);
  AdamW fopt({&frozen}, AdamWConfig{});
  frozen.grad.fill(10.0);
  fopt.step();
  CHECK(frozen.value.at(0, 0) == 3.0);
}

TEST_CASE("adamw: configuration validation") {
  AdamWConfig bad;
  bad.lr = 0.0;
  CHECK_THROWS_AS(AdamW({}, bad), ConfigError);
  bad.lr = 1e-3;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(AdamW({}, bad), ConfigError);
}

TEST_CASE("warmup then linear decay schedule") {
  // 100 total steps, 6 warmup: ramp hits 1 at step 5, decays to 0 at the end.
  CHECK(std::fabs(warmup_linear_decay(0, 100, 6) - 1.0 / 6.0) < 1e-15);
  CHECK(std::fabs(warmup_linear_decay(2, 100, 6) - 3.0 / 6.0) < 1e-15);
  CHECK(warmup_linear_decay(5, 100, 6) == 1.0);
  CHECK(std::fabs(warmup_linear_decay(53, 100, 6) - 47.0 / 94.0) < 1e-15);
  CHECK(std::fabs(warmup_linear_decay(99, 100, 6) - 1.0 / 94.0) < 1e-15);
  CHECK(warmup_linear_decay(100, 100, 6) == 0.0);
  double prev = 2.0;
  bool monotone_after_warmup = true;
  for (int s = 5; s < 100; ++s) {
    double v = warmup_linear_decay(s, 100, 6);
    monotone_after_warmup = monotone_after_warmup && v <= prev;
    prev = v;
  }
  CHECK(monotone_after_warmup);
}
