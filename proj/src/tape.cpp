#include "splat/tape.hpp"

#include <cmath>

namespace splat {

void Tape::check(Var v) const {
    if (!v.valid() || v.id >= int(nodes_.size()))
        throw ContractError("tape: invalid var handle");
}

Var Tape::emit(Tensor value, std::vector<int> parents, BackwardFn fn) {
    value.assert_finite("tape op output");
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backward = std::move(fn);
    for (int p : n.parents)
        if (nodes_[size_t(p)].requires_grad) n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Var{int(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor t) {
    t.assert_finite("leaf");
    Node n;
    n.requires_grad = t.requires_grad;
    n.value = std::move(t);
    nodes_.push_back(std::move(n));
    return Var{int(nodes_.size()) - 1};
}

Var Tape::constant(Tensor t) {
    t.requires_grad = false;
    return leaf(std::move(t));
}

const Tensor& Tape::value(Var v) const {
    check(v);
    return nodes_[size_t(v.id)].value;
}

bool Tape::requires_grad(Var v) const {
    check(v);
    return nodes_[size_t(v.id)].requires_grad;
}

Tensor Tape::grad(Var v) const {
    check(v);
    if (!ran_backward_) throw ContractError("tape: grad() before backward()");
    const Tensor& g = grads_[size_t(v.id)];
    if (g.data.empty()) return Tensor::zeros(nodes_[size_t(v.id)].value.shape);
    return g;
}

void Tape::backward(Var loss) {
    check(loss);
    if (nodes_[size_t(loss.id)].value.numel() != 1)
        throw ContractError("tape: backward target must be scalar");
    grads_.assign(nodes_.size(), Tensor{});
    grads_[size_t(loss.id)] = Tensor({1}, {1.0});
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[size_t(i)];
        if (!n.requires_grad || !n.backward) continue;
        const Tensor& gout = grads_[size_t(i)];
        if (gout.data.empty()) continue;
        std::vector<Tensor*> pg(n.parents.size(), nullptr);
        for (size_t k = 0; k < n.parents.size(); ++k) {
            Node& p = nodes_[size_t(n.parents[k])];
            if (!p.requires_grad) continue;
            Tensor& g = grads_[size_t(n.parents[k])];
            if (g.data.empty()) g = Tensor::zeros(p.value.shape);
            pg[k] = &g;
        }
        n.backward(*this, n, gout, pg);
    }
    ran_backward_ = true;
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": shape mismatch");
}
}  // namespace

// ---- elementwise binary ----

Var Tape::add(Var a, Var b) {
    check(a); check(b);
    const Tensor &ta = val(a.id), &tb = val(b.id);
    require_same_shape(ta, tb, "add");
    Tensor out = ta;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    return emit(std::move(out), {a.id, b.id},
                [](Tape&, const Node&, const Tensor& g, const std::vector<Tensor*>& pg) {
                    for (int k = 0; k < 2; ++k)
                        if (pg[size_t(k)])
                            for (size_t i = 0; i < g.data.size(); ++i) pg[size_t(k)]->data[i] += g.data[i];
                });
}

Var Tape::sub(Var a, Var b) {
    check(a); check(b);
    const Tensor &ta = val(a.id), &tb = val(b.id);
    require_same_shape(ta, tb, "sub");
    Tensor out = ta;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
    return emit(std::move(out), {a.id, b.id},
                [](Tape&, const Node&, const Tensor& g, const std::vector<Tensor*>& pg) {
                    if (pg[0])
                        for (size_t i = 0; i < g.data.size(); ++i) pg[0]->data[i] += g.data[i];
                    if (pg[1])
                        for (size_t i = 0; i < g.data.size(); ++i) pg[1]->data[i] -= g.data[i];
                });
}

Var Tape::mul(Var a, Var b) {
    check(a); check(b);
    const Tensor &ta = val(a.id), &tb = val(b.id);
    require_same_shape(ta, tb, "mul");
    Tensor out = ta;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
    return emit(std::move(out), {a.id, b.id},
                [](Tape& t, const Node& n, const Tensor& g, const std::vector<Tensor*>& pg) {
                    const Tensor& va = t.val(n.parents[0]);
                    const Tensor& vb = t.val(n.parents[1]);
                    if (pg[0])
                        for (size_t i = 0; i < g.data.size(); ++i) pg[0]->data[i] += g.data[i] * vb.data[i];
                    if (pg[1])
                        for (size_t i = 0; i < g.data.size(); ++i) pg[1]->data[i] += g.data[i] * va.data[i];
                });
}

Var Tape::div(Var a, Var b) {
    check(a); check(b);
    const Tensor &ta = val(a.id), &tb = val(b.id);
    require_same_shape(ta, tb, "div");
    Tensor out = ta;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] /= tb.data[i];
    return emit(std::move(out), {a.id, b.id},
                [](Tape& t, const Node& n, const Tensor& g, const std::vector<Tensor*>& pg) {
                    const Tensor& va = t.val(n.parents[0]);
                    const Tensor& vb = t.val(n.parents[1]);
                    if (pg[0])
                        for (size_t i = 0; i < g.data.size(); ++i) pg[0]->data[i] += g.data[i] / vb.data[i];
                    if (pg[1])
                        for (size_t i = 0; i < g.data.size(); ++i)
                            pg[1]->data[i] -= g.data[i] * va.data[i] / (vb.data[i] * vb.data[i]);
                });
}

// ---- elementwise unary ----

namespace {
using Fwd = double (*)(double);
}

Var Tape::neg(Var a) { return mul_scalar(a, -1.0); }

Var Tape::abs(Var a) {
    check(a);
    Tensor out = val(a.id);
    for (double& x : out.data) x = std::fabs(x);
    return emit(std::move(out), {a.id},
                [](Tape& t, const Node& n, const Tensor& g, const std::vector<Tensor*>& pg) {
                    if (!pg[0]) return;
                    const Tensor& v = t.val(n.parents[0]);
                    for (size_t i = 0; i < g.data.size(); ++i) {
                        double s = v.data[i] > 0 ? 1.0 : (v.data[i] < 0 ? -1.0 : 0.0);
                        pg[0]->data[i] += g.data[i] * s;
                    }
                });
}

Var Tape::relu(Var a) {
    check(a);
    Tensor out = val(a.id);
    for (double& x : out.data) x = x > 0 ? x : 0.0;
    return emit(std::move(out), {a.id},
                [](Tape& t, const Node& n, const Tensor& g, const std::vector<Tensor*>& pg) {
                    if (!pg[0]) return;
                    const Tensor& v = t.val(n.parents[0]);
                    for (size_t i = 0; i < g.data.size(); ++i)
                        if (v.data[i] > 0) pg[0]->data[i] += g.data[i];
                });
}

Var Tape::sigmoid(Var a) {
    check(a);
    Tensor out = val(a.id);
    for (double& x : out.data) {
        x = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    return emit(std::move(out), {a.id},
                [](Tape& t, const Node& n, const Tensor& g, const std::vector<Tensor*>& pg) {
                    if (!pg[0]) return;
                    const Tensor& y = n.value;
                    (void)t;
                    for (size_t i = 0; i < g.data.size(); ++i)
                        pg[0]->data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
                });
}

Var Tape::exp(Var a) {
    check(a);
    Tensor out = val(a.id);
    for (double& x : out.data) x = std::exp(x);
    return emit(std::move(out), {a.id},
                [](Tape&, const Node& n, const Tensor& g, const std::vector<Tensor*>& pg) {
                    if (!pg[0]) return;
                    for (size_t i = 0; i < g.data.size(); ++i)
                        pg[0]->data[i] += g.data[i] * n.value.data[i];
                });
}

Var Tape::log(Var a) {
    check(a);
    Tensor out = val(a.id);
    for (double& x : out.data) x = std::log(x);
    return emit(std::move(out), {a.id},
                [](Tape& t, const Node& n, const Tensor& g, const std::vector<Tensor*>& pg) {
                    if (!pg[0]) return;
                    const Tensor& v = t.val(n.parents[0]);
                    for (size_t i = 0; i < g.data.size(); ++i)
                        pg[0]->data[i] += g.data[i] / v.data[i];
                });
}

Var Tape::sqrt(Var a) {
    check(a);
    Tensor out = val(a.id);
    for (double& x : out.data) x = std::sqrt(x);
    return emit(std::move(out), {a.id},
                [](Tape&, const Node& n, const Tensor& g, const std::vector<Tensor*>& pg) {
                    if (!pg[0]) return;
                    for (size_t i = 0; i < g.data.size(); ++i)
                        pg[0]->data[i] += g.data[i] * 0.5 / n.value.data[i];
                });
}

Var Tape::sin(Var a) {
    check(a);
    Tensor out = val(a.id);
    for (double& x : out.data) x = std::sin(x);
    return emit(std::move(out), {a.id},
                [](Tape& t, const Node& n, const Tensor& g, const std::vector<Tensor*>& pg) {
                    if (!pg[0]) return;
                    const Tensor& v = t.val(n.parents[0]);
                    for (size_t i = 0; i < g.data.size(); ++i)
                        pg[0]->data[i] += g.data[i] * std::cos(v.data[i]);
                });
}

Var Tape::cos(Var a) {
    check(a);
    Tensor out = val(a.id);
    for (double& x : out.data) x = std::cos(x);
    return emit(std::move(out), {a.id},
                [](Tape& t, const Node& n, const Tensor& g, const std::vector<Tensor*>& pg) {
                    if (!pg[0]) return;
                    const Tensor& v = t.val(n.parents[0]);
                    for (size_t i = 0; i < g.data.size(); ++i)
                        pg[0]->data[i] -= g.data[i] * std::sin(v.data[i]);
                });
}

Var Tape::add_scalar(Var a, double c) {
    check(a);
    Tensor out = val(a.id);
    for (double& x : out.data) x += c;
    return emit(std::move(out), {a.id},
                [](Tape&, const Node&, const Tensor& g, const std::vector<Tensor*>& pg) {
                    if (!pg[0]) return;
                    for (size_t i = 0; i < g.data.size(); ++i) pg[0]->data[i] += g.data[i];
                });
}

Var Tape::mul_scalar(Var a, double c) {
    check(a);
    Tensor out = val(a.id);
    for (double& x : out.data) x *= c;
    return emit(std::move(out), {a.id},
                [c](Tape&, const Node&, const Tensor& g, const std::vector<Tensor*>& pg) {
                    if (!pg[0]) return;
                    for (size_t i = 0; i < g.data.size(); ++i) pg[0]->data[i] += c * g.data[i];
                });
}

Var Tape::clamp_min(Var a, double c) {
    check(a);
    Tensor out = val(a.id);
    for (double& x : out.data) x = x > c ? x : c;
    return emit(std::move(out), {a.id},
                [c](Tape& t, const Node& n, const Tensor& g, const std::vector<Tensor*>& pg) {
                    if (!pg[0]) return;
                    const Tensor& v = t.val(n.parents[0]);
                    for (size_t i = 0; i < g.data.size(); ++i)
                        if (v.data[i] > c) pg[0]->data[i] += g.data[i];
                });
}

// ---- reductions ----

Var Tape::sum(Var a) {
    check(a);
    double acc = 0.0;
    for (double x : val(a.id).data) acc += x;
    return emit(Tensor::scalar(acc), {a.id},
                [](Tape&, const Node&, const Tensor& g, const std::vector<Tensor*>& pg) {
                    if (!pg[0]) return;
                    for (double& x : pg[0]->data) x += g.data[0];
                });
}

Var Tape::mean(Var a) {
    check(a);
    const int n = val(a.id).numel();
    return mul_scalar(sum(a), 1.0 / double(n));
}

Var Tape::dot(Var a, Var b) {
    check(a); check(b);
    const Tensor &ta = val(a.id), &tb = val(b.id);
    if (ta.numel() != tb.numel()) throw ShapeError("dot: length mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < ta.data.size(); ++i) acc += ta.data[i] * tb.data[i];
    return emit(Tensor::scalar(acc), {a.id, b.id},
                [](Tape& t, const Node& n, const Tensor& g, const std::vector<Tensor*>& pg) {
                    const Tensor& va = t.val(n.parents[0]);
                    const Tensor& vb = t.val(n.parents[1]);
                    if (pg[0])
                        for (size_t i = 0; i < va.data.size(); ++i) pg[0]->data[i] += g.data[0] * vb.data[i];
                    if (pg[1])
                        for (size_t i = 0; i < vb.data.size(); ++i) pg[1]->data[i] += g.data[0] * va.data[i];
                });
}

// ---- linear algebra ----

Var Tape::matmul(Var a, Var b) {
    check(a); check(b);
    const Tensor &ta = val(a.id), &tb = val(b.id);
    if (ta.ndim() != 2 || tb.ndim() != 2 || ta.dim(1) != tb.dim(0))
        throw ShapeError("matmul: incompatible shapes");
    const int m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double av = ta.data[size_t(i * k + p)];
            if (av == 0.0) continue;
            const double* brow = tb.data.data() + size_t(p) * n;
            double* orow = out.data.data() + size_t(i) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    return emit(std::move(out), {a.id, b.id},
                [m, k, n](Tape& t, const Node& nn, const Tensor& g, const std::vector<Tensor*>& pg) {
                    const Tensor& va = t.val(nn.parents[0]);
                    const Tensor& vb = t.val(nn.parents[1]);
                    if (pg[0]) {
                        // dA = G * B^T
                        for (int i = 0; i < m; ++i)
                            for (int p = 0; p < k; ++p) {
                                double acc = 0.0;
                                for (int j = 0; j < n; ++j)
                                    acc += g.data[size_t(i * n + j)] * vb.data[size_t(p * n + j)];
                                pg[0]->data[size_t(i * k + p)] += acc;
                            }
                    }
                    if (pg[1]) {
                        // dB = A^T * G
                        for (int p = 0; p < k; ++p)
                            for (int j = 0; j < n; ++j) {
                                double acc = 0.0;
                                for (int i = 0; i < m; ++i)
                                    acc += va.data[size_t(i * k + p)] * g.data[size_t(i * n + j)];
                                pg[1]->data[size_t(p * n + j)] += acc;
                            }
                    }
                });
}

Var Tape::add_rowvec(Var x, Var b) {
    check(x); check(b);
    const Tensor &tx = val(x.id), &tb = val(b.id);
    if (tx.ndim() != 2 || tb.numel() != tx.dim(1)) throw ShapeError("add_rowvec: shape mismatch");
    const int m = tx.dim(0), n = tx.dim(1);
    Tensor out = tx;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.data[size_t(i * n + j)] += tb.data[size_t(j)];
    return emit(std::move(out), {x.id, b.id},
                [m, n](Tape&, const Node&, const Tensor& g, const std::vector<Tensor*>& pg) {
                    if (pg[0])
                        for (size_t i = 0; i < g.data.size(); ++i) pg[0]->data[i] += g.data[i];
                    if (pg[1])
                        for (int i = 0; i < m; ++i)
                            for (int j = 0; j < n; ++j) pg[1]->data[size_t(j)] += g.data[size_t(i * n + j)];
                });
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw ContractError("concat_cols: no inputs");
    int m = -1, total = 0;
    std::vector<int> widths;
    std::vector<int> parents;
    for (Var v : xs) {
        check(v);
        const Tensor& t = val(v.id);
        if (t.ndim() != 2) throw ShapeError("concat_cols: inputs must be 2-D");
        if (m < 0) m = t.dim(0);
        if (t.dim(0) != m) throw ShapeError("concat_cols: row count mismatch");
        widths.push_back(t.dim(1));
        total += t.dim(1);
        parents.push_back(v.id);
    }
    Tensor out = Tensor::zeros({m, total});
    int off = 0;
    for (size_t k = 0; k < xs.size(); ++k) {
        const Tensor& t = val(xs[k].id);
        const int w = widths[k];
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
                out.data[size_t(i * total + off + j)] = t.data[size_t(i * w + j)];
        off += w;
    }
    return emit(std::move(out), parents,
                [m, total, widths](Tape&, const Node&, const Tensor& g, const std::vector<Tensor*>& pg) {
                    int off = 0;
                    for (size_t k = 0; k < widths.size(); ++k) {
                        const int w = widths[k];
                        if (pg[k])
                            for (int i = 0; i < m; ++i)
                                for (int j = 0; j < w; ++j)
                                    pg[k]->data[size_t(i * w + j)] += g.data[size_t(i * total + off + j)];
                        off += w;
                    }
                });
}

// ---- image ops ----

Var Tape::conv2d(Var x, Var w, Var b, int stride, int pad) {
    check(x); check(w); check(b);
    const Tensor &tx = val(x.id), &tw = val(w.id), &tb = val(b.id);
    if (tx.ndim() != 3 || tw.ndim() != 4) throw ShapeError("conv2d: expected (C,H,W) and (OC,C,kh,kw)");
    const int C = tx.dim(0), H = tx.dim(1), W = tx.dim(2);
    const int OC = tw.dim(0), kh = tw.dim(2), kw = tw.dim(3);
    if (tw.dim(1) != C) throw ShapeError("conv2d: channel mismatch");
    if (tb.numel() != OC) throw ShapeError("conv2d: bias size mismatch");
    const int OH = (H + 2 * pad - kh) / stride + 1;
    const int OW = (W + 2 * pad - kw) / stride + 1;
    if (OH <= 0 || OW <= 0) throw ShapeError("conv2d: output would be empty");
    Tensor out = Tensor::zeros({OC, OH, OW});
    for (int oc = 0; oc < OC; ++oc)
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                double acc = tb.data[size_t(oc)];
                for (int c = 0; c < C; ++c)
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= W) continue;
                            acc += tx.data[size_t((c * H + iy) * W + ix)] *
                                   tw.data[size_t(((oc * C + c) * kh + ky) * kw + kx)];
                        }
                    }
                out.data[size_t((oc * OH + oy) * OW + ox)] = acc;
            }
    return emit(std::move(out), {x.id, w.id, b.id},
                [C, H, W, OC, kh, kw, OH, OW, stride, pad](Tape& t, const Node& n, const Tensor& g,
                                                           const std::vector<Tensor*>& pg) {
                    const Tensor& vx = t.val(n.parents[0]);
                    const Tensor& vw = t.val(n.parents[1]);
                    for (int oc = 0; oc < OC; ++oc)
                        for (int oy = 0; oy < OH; ++oy)
                            for (int ox = 0; ox < OW; ++ox) {
                                const double go = g.data[size_t((oc * OH + oy) * OW + ox)];
                                if (go == 0.0) continue;
                                if (pg[2]) pg[2]->data[size_t(oc)] += go;
                                for (int c = 0; c < C; ++c)
                                    for (int ky = 0; ky < kh; ++ky) {
                                        const int iy = oy * stride - pad + ky;
                                        if (iy < 0 || iy >= H) continue;
                                        for (int kx = 0; kx < kw; ++kx) {
                                            const int ix = ox * stride - pad + kx;
                                            if (ix < 0 || ix >= W) continue;
                                            const size_t xi = size_t((c * H + iy) * W + ix);
                                            const size_t wi = size_t(((oc * C + c) * kh + ky) * kw + kx);
                                            if (pg[0]) pg[0]->data[xi] += go * vw.data[wi];
                                            if (pg[1]) pg[1]->data[wi] += go * vx.data[xi];
                                        }
                                    }
                            }
                });
}

Var Tape::depthwise_valid_conv(Var x, Var k) {
    check(x); check(k);
    const Tensor &tx = val(x.id), &tk = val(k.id);
    if (tx.ndim() != 3 || tk.ndim() != 2) throw ShapeError("depthwise_valid_conv: expected (C,H,W), (kh,kw)");
    const int C = tx.dim(0), H = tx.dim(1), W = tx.dim(2);
    const int kh = tk.dim(0), kw = tk.dim(1);
    const int OH = H - kh + 1, OW = W - kw + 1;
    if (OH <= 0 || OW <= 0) throw ShapeError("depthwise_valid_conv: kernel larger than input");
    Tensor out = Tensor::zeros({C, OH, OW});
    for (int c = 0; c < C; ++c)
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                double acc = 0.0;
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx)
                        acc += tx.data[size_t((c * H + oy + ky) * W + ox + kx)] *
                               tk.data[size_t(ky * kw + kx)];
                out.data[size_t((c * OH + oy) * OW + ox)] = acc;
            }
    return emit(std::move(out), {x.id, k.id},
                [C, H, W, kh, kw, OH, OW](Tape& t, const Node& n, const Tensor& g,
                                          const std::vector<Tensor*>& pg) {
                    const Tensor& vx = t.val(n.parents[0]);
                    const Tensor& vk = t.val(n.parents[1]);
                    for (int c = 0; c < C; ++c)
                        for (int oy = 0; oy < OH; ++oy)
                            for (int ox = 0; ox < OW; ++ox) {
                                const double go = g.data[size_t((c * OH + oy) * OW + ox)];
                                if (go == 0.0) continue;
                                for (int ky = 0; ky < kh; ++ky)
                                    for (int kx = 0; kx < kw; ++kx) {
                                        const size_t xi = size_t((c * H + oy + ky) * W + ox + kx);
                                        const size_t ki = size_t(ky * kw + kx);
                                        if (pg[0]) pg[0]->data[xi] += go * vk.data[ki];
                                        if (pg[1]) pg[1]->data[ki] += go * vx.data[xi];
                                    }
                            }
                });
}

Var Tape::upsample2x(Var x) {
    check(x);
    const Tensor& tx = val(x.id);
    if (tx.ndim() != 3) throw ShapeError("upsample2x: expected (C,H,W)");
    const int C = tx.dim(0), H = tx.dim(1), W = tx.dim(2);
    Tensor out = Tensor::zeros({C, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                const double v = tx.data[size_t((c * H + y) * W + xx)];
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        out.data[size_t((c * 2 * H + 2 * y + dy) * 2 * W + 2 * xx + dx)] = v;
            }
    return emit(std::move(out), {x.id},
                [C, H, W](Tape&, const Node&, const Tensor& g, const std::vector<Tensor*>& pg) {
                    if (!pg[0]) return;
                    for (int c = 0; c < C; ++c)
                        for (int y = 0; y < H; ++y)
                            for (int xx = 0; xx < W; ++xx) {
                                double acc = 0.0;
                                for (int dy = 0; dy < 2; ++dy)
                                    for (int dx = 0; dx < 2; ++dx)
                                        acc += g.data[size_t((c * 2 * H + 2 * y + dy) * 2 * W + 2 * xx + dx)];
                                pg[0]->data[size_t((c * H + y) * W + xx)] += acc;
                            }
                });
}

Var Tape::custom(std::vector<Var> parents, Tensor value, CustomBackward backward) {
    std::vector<int> ids;
    for (Var v : parents) {
        check(v);
        ids.push_back(v.id);
    }
    return emit(std::move(value), std::move(ids),
                [backward = std::move(backward)](Tape&, const Node&, const Tensor& g,
                                                 const std::vector<Tensor*>& pg) { backward(g, pg); });
}

}  // namespace splat
