#pragma once

#include <vector>

#include "navmini/tensor.hpp"

namespace navmini {
namespace ops {

// ----- elementwise -----
Tensor add(const Tensor& a, const Tensor& b);      // same shape
Tensor sub(const Tensor& a, const Tensor& b);      // same shape
Tensor mul(const Tensor& a, const Tensor& b);      // hadamard
Tensor scale(const Tensor& x, float s);
Tensor affine(const Tensor& x, float scale, float shift);
Tensor relu(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp_op(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor clamp(const Tensor& x, float lo, float hi); // zero grad outside [lo,hi]
Tensor minimum(const Tensor& a, const Tensor& b);

// ----- linear algebra -----
Tensor matmul(const Tensor& a, const Tensor& b);   // [m,k]x[k,n]
Tensor bias_add(const Tensor& x, const Tensor& b); // [m,n]+[n] row broadcast
Tensor transpose2d(const Tensor& x);

// ----- shape -----
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_rows(const Tensor& x, int r0, int r1);
Tensor slice_cols(const Tensor& x, int c0, int c1);
Tensor concat_rows(const std::vector<Tensor>& xs); // stack along dim 0, equal cols
Tensor concat_cols(const std::vector<Tensor>& xs); // along dim 1, equal rows

// ----- reductions / losses -----
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);                   // mean((a-b)^2)
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);
Tensor gaussian_kl(const Tensor& mu, const Tensor& logvar);     // vs N(0, I)

// ----- softmax family -----
Tensor softmax(const Tensor& x);        // last dim
Tensor log_softmax(const Tensor& x);    // last dim
Tensor causal_softmax(const Tensor& scores); // [T,T], row t over cols <= t
Tensor select_per_row(const Tensor& x, const std::vector<int>& idx); // [m,n]->[m]

// ----- normalization -----
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta); // last dim

// ----- convolution -----
// x [N,C,H,W], w [F,C,kh,kw], b [F] (optional: pass undefined Tensor for none)
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
// x [N,C,H,W], w [C,F,kh,kw], b [F]; output [(H-1)*stride - 2*pad + kh, ...]
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);

// ----- attention -----
// x [T,E]; wqkv [E,3E] (cols: Q | K | V, head-blocked inside each third);
// wo [E,E]. Composite of primitive ops; position t attends to positions <= t.
Tensor causal_self_attention(
	const Tensor& x, const Tensor& wqkv, const Tensor& bqkv, const Tensor& wo, const Tensor& bo, int n_heads);

// dense layer helper: bias_add(matmul(x, w), b)
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

// Constant copy cut off from the graph (stop-gradient).
Tensor detach(const Tensor& x);

} // namespace ops
} // namespace navmini
