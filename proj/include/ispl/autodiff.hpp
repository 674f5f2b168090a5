#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ispl/tensor.hpp"

namespace ispl::ad {

// Reverse-mode autodiff over Tensor. Graphs are built eagerly; each op returns
// a Node holding its value, its parents, and a closure that scatters the
// node's gradient into the parents. backward() walks the graph in reverse
// topological order. Everything is single-threaded and order-stable so runs
// with equal seeds are bit-identical.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand, same shape as value
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.empty() && value.numel() > 0) grad = Tensor::zeros(value.shape());
    }
    void zero_grad() {
        if (!grad.empty()) grad.fill(0.0);
    }
};

// Leaf holding data; trainable leaves are the model parameters.
Var leaf(Tensor value, bool requires_grad = false);
Var constant(Tensor value);

// Stops gradient flow; shares the underlying value.
Var detach(const Var& x);

// Elementwise (shapes must match exactly).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_const(const Var& a, double c);

// Activations.
Var leaky_relu(const Var& x, double slope);
Var tanh_op(const Var& x);
Var sigmoid(const Var& x);

enum class Pad { Zero, Reflect };

// Plain 2D convolution, NCHW x (Co,Ci,K,K). Output size (H+2p-K)/stride+1.
Var conv2d(const Var& x, const Var& w, int stride, int pad, Pad mode);

// Adds a per-channel bias (C) to an NCHW tensor.
Var add_bias(const Var& x, const Var& b);

// Pixel-adaptive convolution: out(p) = sum_q tanh(<e_p, e_q>) * w_dqp * y(q)
// over the KxK neighborhood of p with reflect padding. `embeddings` carries
// the per-pixel projection g(y); gradients flow to all three inputs.
// If phi_min/phi_max are non-null the observed correlation range is recorded.
Var pac_conv(const Var& features, const Var& w, const Var& embeddings,
             double* phi_min = nullptr, double* phi_max = nullptr);

// Bilinear resampling (half-pixel convention) to an arbitrary size.
Var bilinear_resize(const Var& x, int64_t out_h, int64_t out_w);

// Per-sample, per-channel spatial normalization (x - mean) / std with the
// standard deviation floored at eps.
Var instance_norm(const Var& x, double eps);

// Channel-wise concatenation of NCHW tensors with equal N,H,W.
Var concat_channels(const std::vector<Var>& xs);

// out = sum_j W(row, j) * xs[j]; W is a rank-2 parameter, xs all same shape.
Var weighted_sum(const std::vector<Var>& xs, const Var& weight_matrix, int64_t row);

// Mean over every element -> scalar node of shape (1).
Var mean_all(const Var& x);

// Runs backward from a scalar root (seeds d(root)/d(root) = 1).
void backward(const Var& root);

}  // namespace ispl::ad
