#pragma once

#include <vector>

#include "milora/tensor.hpp"

namespace milora {

// Plain value kernels shared by the autodiff graph and the cached inference
// engine, so both execution paths run the same arithmetic.

Tensor matmul(const Tensor& a, const Tensor& b);     // a[m,k] * b[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a[m,k] * b[n,k]^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a[k,m]^T * b[k,n]
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);

// Row-wise softmax with max subtraction.  Throws ContractError on non-finite
// input: a NaN/Inf reaching a normalizer is always an upstream bug.
Tensor softmax_rows(const Tensor& a);

// y = x / sqrt(mean(x^2) + eps) * w, per row; w is 1 x cols.
Tensor rmsnorm_rows(const Tensor& x, const Tensor& w, double eps);

Tensor silu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor relu(const Tensor& a);
double gelu_scalar(double x);  // exact erf form

// Rotary position encoding applied in place: rows are positions
// (first_pos, first_pos+1, ...), columns split into n_heads heads, and
// consecutive even/odd pairs inside each head are rotated.
void rope_inplace(Tensor& x, int n_heads, int first_pos, double base);

Tensor take_rows(const Tensor& a, int r0, int r1);  // copy of rows [r0, r1)

Tensor mean_rows(const Tensor& a);                                  // 1 x cols
Tensor max_rows(const Tensor& a, std::vector<int>* argmax = nullptr);  // 1 x cols

// n x n additive attention mask: 0 at or below the diagonal, -1e30 above.
Tensor causal_mask(int n);

// Index of the row maximum; ties resolve to the lowest index.
int argmax_row(const Tensor& t, int r);

}  // namespace milora
