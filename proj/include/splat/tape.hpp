#pragma once

#include <functional>
#include <vector>

#include "splat/tensor.hpp"

namespace splat {

// Handle into a Tape node.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Define-by-run reverse-mode tape. Nodes are appended in execution order, so
// topological order holds by construction; backward() walks the node list in
// reverse exactly once with a fixed accumulation order, which makes repeated
// backward passes bit-identical.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor t);      // requires_grad taken from the tensor
    Var constant(Tensor t);  // never receives gradient

    const Tensor& value(Var v) const;
    // Gradient of the last backward() loss w.r.t. node v. Zero tensor if the
    // node participated but received no gradient.
    Tensor grad(Var v) const;
    bool requires_grad(Var v) const;

    // elementwise (same shape)
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var neg(Var a);
    Var abs(Var a);
    Var relu(Var a);
    Var sigmoid(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var sqrt(Var a);
    Var sin(Var a);
    Var cos(Var a);
    Var add_scalar(Var a, double c);
    Var mul_scalar(Var a, double c);
    Var clamp_min(Var a, double c);

    // reductions / contractions
    Var sum(Var a);
    Var mean(Var a);
    Var dot(Var a, Var b);  // flat vectors, same length -> scalar

    // linear algebra
    Var matmul(Var a, Var b);       // (m,k) x (k,n)
    Var add_rowvec(Var x, Var b);   // (m,n) + (n,)
    Var concat_cols(const std::vector<Var>& xs);  // (m,ki) -> (m, sum ki)

    // image ops on (C,H,W)
    Var conv2d(Var x, Var w, Var b, int stride, int pad);  // w: (OC,C,kh,kw), b: (OC,)
    Var depthwise_valid_conv(Var x, Var k);                // k: (kh,kw), same kernel per channel
    Var upsample2x(Var x);

    // Escape hatch for ops with hand-written backward (rasterizer, sampling).
    // `backward(gout, parent_grads)`: parent_grads[i] is a preallocated
    // accumulator for parent i, or nullptr when that parent needs no gradient.
    using CustomBackward = std::function<void(const Tensor& gout, const std::vector<Tensor*>& parent_grads)>;
    Var custom(std::vector<Var> parents, Tensor value, CustomBackward backward);

    void backward(Var loss);

    size_t size() const { return nodes_.size(); }

  private:
    struct Node;
    using BackwardFn = std::function<void(Tape&, const Node&, const Tensor& gout,
                                          const std::vector<Tensor*>& parent_grads)>;
    struct Node {
        Tensor value;
        std::vector<int> parents;
        BackwardFn backward;
        bool requires_grad = false;
    };

    Var emit(Tensor value, std::vector<int> parents, BackwardFn fn);
    const Tensor& val(int id) const { return nodes_[size_t(id)].value; }
    void check(Var v) const;

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool ran_backward_ = false;
};

}  // namespace splat
