#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dv/tensor.hpp"

namespace dv {

// Define-by-run reverse-mode automatic differentiation. Every op builds a
// node holding its output value plus a closure that scatters the node's
// gradient into its parents. backward() walks the graph in reverse
// topological order. While grad mode is off (NoGradGuard) ops only compute
// values, so inference carries no tape.

class Node;
using NodePtr = std::shared_ptr<Node>;

class Node {
  public:
    Tensor value;
    Tensor grad;  // allocated on demand, same shape as value
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backprop;  // reads this node's grad
    std::string name;                     // set for parameters

    void ensure_grad() {
        if (grad.empty()) grad = Tensor::zeros(value.dims());
    }
    // first contribution moves the buffer in, later ones accumulate
    void accum(Tensor&& g) {
        if (grad.empty())
            grad = std::move(g);
        else
            grad.add_(g);
    }
    // first contribution may alias `g`; the buffer gets mutated if further
    // contributions arrive, which is safe because the donor node has already
    // been processed. At most one parent per node may receive the alias.
    void accum_shared(const Tensor& g) {
        if (grad.empty())
            grad = g;
        else
            grad.add_(g);
    }
    void accum_clone(const Tensor& g) {
        if (grad.empty())
            grad = g.clone();
        else
            grad.add_(g);
    }
};

class Var {
  public:
    Var() = default;
    explicit Var(NodePtr n) : node_(std::move(n)) {}

    static Var leaf(Tensor value, bool requires_grad, std::string name = {});
    static Var constant(Tensor value) { return leaf(std::move(value), false); }

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    Tensor& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const std::string& name() const { return node_->name; }
    const NodePtr& node() const { return node_; }

    const Shape& dims() const { return node_->value.dims(); }
    int64_t size() const { return node_->value.size(); }

  private:
    NodePtr node_;
};

bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

// Runs reverse accumulation from a scalar (or any tensor seeded with ones).
void backward(const Var& root);
void zero_grad(const std::vector<Var>& params);

namespace ops {

// elementwise
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var silu(const Var& a);
Var abs_val(const Var& a);

// x[G, ...] + c[...] broadcast over the leading axis
Var add_broadcast0(const Var& x, const Var& c);

// shape
Var reshape(const Var& x, Shape dims);
Var permute(const Var& x, const std::vector<int>& perm);
Var concat_axis0(const std::vector<Var>& xs);
Var concat_channel(const Var& a, const Var& b);  // [N,Ca,H,W] + [N,Cb,H,W]
Var slice_axis0(const Var& x, int64_t start, int64_t len);
Var slice_cols(const Var& x, int64_t start, int64_t len);  // x[N,K]
// [B,...] -> [B*times,...], row b repeated consecutively
Var repeat_interleave0(const Var& x, int64_t times);

// linear algebra
Var linear(const Var& x, const Var& w, const Var& b);  // x[N,K], w[O,K], b[O] or undefined
// a[G,M,K] x b[Gb,K,N] -> [G,M,N]; G must equal Gb*rhs_repeat, rhs block g
// uses b[g / rhs_repeat]
Var bmm(const Var& a, const Var& b, int64_t rhs_repeat = 1, double alpha = 1.0);
Var softmax_lastdim(const Var& x);

// convolution / normalization
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// x[(B*T),C,H,W]; 1-D convolution over the frame axis per spatial location
Var conv1d_time(const Var& x, const Var& w, const Var& b, int64_t batch, int64_t frames);
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps = 1e-5);
// x[N,C,H,W] * (1 + s[N,C]) + t[N,C]
Var film(const Var& x, const Var& s, const Var& t);
Var upsample_nearest2x(const Var& x);
Var gap2d(const Var& x);  // [N,C,H,W] -> [N,C] mean over H,W

// x[(B*T),C,H,W] + y[B,C,H,W] broadcast over frames (batch-major layout)
Var add_frame_broadcast(const Var& x, const Var& y, int64_t frames);

// lookups & reductions
Var embedding_rows(const Var& table, const std::vector<int>& ids);
Var mean_all(const Var& x);   // -> [1]
Var sum_axis0(const Var& x);  // [T,F] -> [F]
Var mean_axis0(const Var& x);
Var mse(const Var& a, const Var& b);  // -> [1]
// logits[N,K], integer labels; mean cross entropy with fused softmax backward
Var cross_entropy(const Var& logits, const std::vector<int>& labels);

}  // namespace ops

}  // namespace dv
