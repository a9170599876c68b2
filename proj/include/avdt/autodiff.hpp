#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "avdt/tensor.hpp"

namespace avdt {

// ============================================================================
// Dense kernels (also usable outside the graph)
// ============================================================================

// C = op(A) @ op(B); A is m x k after transposition, B is k x n.
// Row-major. The tt variant is not needed by any backward rule.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
          bool trans_a, bool trans_b) {
    std::fill(c, c + m * n, T(0));
    if (!trans_a && !trans_b) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                T av = a[i * k + p];
                const T* brow = b + p * n;
                T* crow = c + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
    } else if (!trans_a && trans_b) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const T* arow = a + i * k;
                const T* brow = b + j * k;
                T acc = 0;
                for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
                c[i * n + j] = acc;
            }
    } else if (trans_a && !trans_b) {
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t i = 0; i < m; ++i) {
                T av = a[p * m + i];
                const T* brow = b + p * n;
                T* crow = c + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
    } else {
        throw ShapeError("gemm: tt variant unsupported");
    }
}

template <typename T>
Tensor<T> matmul_plain(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0))
        throw ShapeError("matmul " + shape_str(a.shape()) + " @ " + shape_str(b.shape()));
    Tensor<T> out(Shape{a.extent(0), b.extent(1)});
    gemm(a.data(), b.data(), out.data(), a.extent(0), a.extent(1), b.extent(1), false, false);
    return out;
}

// Numerically stable softmax along one axis of a plain tensor.
template <typename T>
Tensor<T> softmax_plain(const Tensor<T>& x, std::size_t axis) {
    if (axis >= x.rank()) throw ShapeError("softmax: axis out of range");
    std::size_t extent = x.extent(axis);
    std::size_t inner = 1, outer = 1;
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.extent(i);
    for (std::size_t i = 0; i < axis; ++i) outer *= x.extent(i);
    Tensor<T> out(x.shape());
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const T* src = x.data() + o * extent * inner + in;
            T* dst = out.data() + o * extent * inner + in;
            T mx = src[0];
            for (std::size_t e = 1; e < extent; ++e) mx = std::max(mx, src[e * inner]);
            T sum = 0;
            for (std::size_t e = 0; e < extent; ++e) {
                T v = std::exp(src[e * inner] - mx);
                dst[e * inner] = v;
                sum += v;
            }
            for (std::size_t e = 0; e < extent; ++e) dst[e * inner] /= sum;
        }
    out.require_finite("softmax");
    return out;
}

// ============================================================================
// Reverse-mode graph
// ============================================================================

template <typename T> class Tape;

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad; // empty until someone accumulates into it
    std::vector<Node*> parents;
    std::function<void(Node<T>&)> backward_fn;
    bool needs_grad = false;

    Tensor<T>& ensure_grad() {
        if (grad.empty()) grad = Tensor<T>(value.shape());
        return grad;
    }
    void accumulate(const Tensor<T>& g) {
        Tensor<T>& dst = ensure_grad();
        for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += g[i];
    }
};

template <typename T>
using Var = Node<T>*;

// Named trainable leaf. The node outlives any tape.
template <typename T>
struct Parameter {
    std::string name;
    std::unique_ptr<Node<T>> node;

    Var<T> var() const { return node.get(); }
    Tensor<T>& value() { return node->value; }
    const Tensor<T>& value() const { return node->value; }
    Tensor<T>& grad() { return node->grad; }
};

template <typename T>
class ParamStore {
  public:
    Var<T> create(const std::string& name, Tensor<T> init) {
        for (auto& p : params_)
            if (p->name == name) throw ConfigError("duplicate parameter " + name);
        auto p = std::make_unique<Parameter<T>>();
        p->name = name;
        p->node = std::make_unique<Node<T>>();
        p->node->value = std::move(init);
        p->node->needs_grad = true;
        params_.push_back(std::move(p));
        return params_.back()->node.get();
    }

    Parameter<T>* find(const std::string& name) {
        for (auto& p : params_)
            if (p->name == name) return p.get();
        return nullptr;
    }

    std::size_t size() const { return params_.size(); }
    Parameter<T>& at(std::size_t i) { return *params_[i]; }
    const Parameter<T>& at(std::size_t i) const { return *params_[i]; }

    std::size_t total_values() const {
        std::size_t n = 0;
        for (auto& p : params_) n += p->node->value.numel();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) {
            Tensor<T>& g = p->node->ensure_grad();
            std::fill(g.vec().begin(), g.vec().end(), T(0));
        }
    }

  private:
    std::vector<std::unique_ptr<Parameter<T>>> params_;
};

// Records op nodes in creation order; creation order is a topological order,
// so the reverse sweep visits each node exactly once with all downstream
// gradients already accumulated.
template <typename T>
class Tape {
  public:
    Var<T> constant(Tensor<T> v) { return adopt(std::move(v), false); }
    Var<T> input(Tensor<T> v, bool needs_grad = false) { return adopt(std::move(v), needs_grad); }

    void backward(Var<T> loss) {
        if (loss->value.numel() != 1)
            throw ShapeError("backward: loss must be scalar, got " + shape_str(loss->value.shape()));
        loss->ensure_grad();
        loss->grad[0] = T(1);
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
            Node<T>* n = *it;
            if (!n->needs_grad || !n->backward_fn || n->grad.empty()) continue;
            n->backward_fn(*n);
        }
    }

    void clear() {
        order_.clear();
        owned_.clear();
    }
    std::size_t recorded() const { return order_.size(); }

    // ---- primitive ops -----------------------------------------------------

    Var<T> add(Var<T> a, Var<T> b) {
        require_same(a, b, "add");
        Tensor<T> out = a->value;
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
        return make(std::move(out), {a, b}, [](Node<T>& self) {
            if (self.parents[0]->needs_grad) self.parents[0]->accumulate(self.grad);
            if (self.parents[1]->needs_grad) self.parents[1]->accumulate(self.grad);
        }, "add");
    }

    Var<T> sub(Var<T> a, Var<T> b) {
        require_same(a, b, "sub");
        Tensor<T> out = a->value;
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
        return make(std::move(out), {a, b}, [](Node<T>& self) {
            if (self.parents[0]->needs_grad) self.parents[0]->accumulate(self.grad);
            if (self.parents[1]->needs_grad) {
                Node<T>* b = self.parents[1];
                Tensor<T>& g = b->ensure_grad();
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
            }
        }, "sub");
    }

    Var<T> mul(Var<T> a, Var<T> b) {
        require_same(a, b, "mul");
        Tensor<T> out = a->value;
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
        return make(std::move(out), {a, b}, [](Node<T>& self) {
            Node<T>* a = self.parents[0];
            Node<T>* b = self.parents[1];
            if (a->needs_grad) {
                Tensor<T>& g = a->ensure_grad();
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * b->value[i];
            }
            if (b->needs_grad) {
                Tensor<T>& g = b->ensure_grad();
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * a->value[i];
            }
        }, "mul");
    }

    Var<T> scale(Var<T> a, T s) {
        Tensor<T> out = a->value;
        for (auto& v : out.vec()) v *= s;
        return make(std::move(out), {a}, [s](Node<T>& self) {
            Node<T>* a = self.parents[0];
            Tensor<T>& g = a->ensure_grad();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s * self.grad[i];
        }, "scale");
    }

    // out = s * x with a learnable scalar s (shape [1]).
    Var<T> scale_by(Var<T> x, Var<T> s) {
        if (s->value.numel() != 1) throw ShapeError("scale_by: gate must be scalar");
        Tensor<T> out = x->value;
        T sv = s->value[0];
        for (auto& v : out.vec()) v *= sv;
        return make(std::move(out), {x, s}, [](Node<T>& self) {
            Node<T>* x = self.parents[0];
            Node<T>* s = self.parents[1];
            T sv = s->value[0];
            if (x->needs_grad) {
                Tensor<T>& g = x->ensure_grad();
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] += sv * self.grad[i];
            }
            if (s->needs_grad) {
                T acc = 0;
                for (std::size_t i = 0; i < x->value.numel(); ++i)
                    acc += self.grad[i] * x->value[i];
                s->ensure_grad()[0] += acc;
            }
        }, "scale_by");
    }

    Var<T> matmul(Var<T> a, Var<T> b) {
        Tensor<T> out = matmul_plain(a->value, b->value);
        return make(std::move(out), {a, b}, [](Node<T>& self) {
            Node<T>* a = self.parents[0];
            Node<T>* b = self.parents[1];
            std::size_t m = a->value.extent(0), k = a->value.extent(1), n = b->value.extent(1);
            if (a->needs_grad) {
                Tensor<T> ga(a->value.shape());
                gemm(self.grad.data(), b->value.data(), ga.data(), m, n, k, false, true);
                a->accumulate(ga);
            }
            if (b->needs_grad) {
                Tensor<T> gb(b->value.shape());
                gemm(a->value.data(), self.grad.data(), gb.data(), k, m, n, true, false);
                b->accumulate(gb);
            }
        }, "matmul");
    }

    // Batched matmul over axis 0: a [B,m,k] @ b [B,k,n] (or b [B,n,k] when
    // trans_b) -> [B,m,n].
    Var<T> bmm(Var<T> a, Var<T> b, bool trans_b = false) {
        const Shape& sa = a->value.shape();
        const Shape& sb = b->value.shape();
        if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0])
            throw ShapeError("bmm " + shape_str(sa) + " @ " + shape_str(sb));
        std::size_t B = sa[0], m = sa[1], k = sa[2];
        std::size_t n = trans_b ? sb[1] : sb[2];
        std::size_t bk = trans_b ? sb[2] : sb[1];
        if (bk != k) throw ShapeError("bmm inner extent mismatch");
        Tensor<T> out(Shape{B, m, n});
        for (std::size_t i = 0; i < B; ++i)
            gemm(a->value.data() + i * m * k, b->value.data() + i * (trans_b ? n * k : k * n),
                 out.data() + i * m * n, m, k, n, false, trans_b);
        return make(std::move(out), {a, b}, [B, m, k, n, trans_b](Node<T>& self) {
            Node<T>* a = self.parents[0];
            Node<T>* b = self.parents[1];
            if (a->needs_grad) {
                Tensor<T> ga(a->value.shape());
                for (std::size_t i = 0; i < B; ++i) {
                    const T* g = self.grad.data() + i * m * n;
                    const T* bv = b->value.data() + i * (trans_b ? n * k : k * n);
                    // dA = G @ B^T  (plain)  |  G @ B  (trans_b)
                    gemm(g, bv, ga.data() + i * m * k, m, n, k, false, !trans_b);
                }
                a->accumulate(ga);
            }
            if (b->needs_grad) {
                Tensor<T> gb(b->value.shape());
                for (std::size_t i = 0; i < B; ++i) {
                    const T* g = self.grad.data() + i * m * n;
                    const T* av = a->value.data() + i * m * k;
                    if (!trans_b) // dB = A^T @ G
                        gemm(av, g, gb.data() + i * k * n, k, m, n, true, false);
                    else // dB = G^T @ A
                        gemm(g, av, gb.data() + i * n * k, n, m, k, true, false);
                }
                b->accumulate(gb);
            }
        }, "bmm");
    }

    // x [..., d] + bias [d]
    Var<T> add_rowvec(Var<T> x, Var<T> bias) {
        std::size_t d = bias->value.numel();
        if (x->value.numel() % d != 0 || x->value.shape().back() != d)
            throw ShapeError("add_rowvec: trailing extent mismatch");
        Tensor<T> out = x->value;
        std::size_t rows = out.numel() / d;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) out[r * d + j] += bias->value[j];
        return make(std::move(out), {x, bias}, [d](Node<T>& self) {
            Node<T>* x = self.parents[0];
            Node<T>* bias = self.parents[1];
            if (x->needs_grad) x->accumulate(self.grad);
            if (bias->needs_grad) {
                Tensor<T>& g = bias->ensure_grad();
                std::size_t rows = self.grad.numel() / d;
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j];
            }
        }, "add_rowvec");
    }

    // DiT-style affine conditioning: out = x * (1 + scale) + shift, rowwise.
    Var<T> modulate(Var<T> x, Var<T> scale_v, Var<T> shift_v) {
        std::size_t d = scale_v->value.numel();
        if (shift_v->value.numel() != d || x->value.shape().back() != d)
            throw ShapeError("modulate: extent mismatch");
        Tensor<T> out = x->value;
        std::size_t rows = out.numel() / d;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j)
                out[r * d + j] = x->value[r * d + j] * (T(1) + scale_v->value[j]) + shift_v->value[j];
        return make(std::move(out), {x, scale_v, shift_v}, [d](Node<T>& self) {
            Node<T>* x = self.parents[0];
            Node<T>* sc = self.parents[1];
            Node<T>* sh = self.parents[2];
            std::size_t rows = self.grad.numel() / d;
            if (x->needs_grad) {
                Tensor<T>& g = x->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j)
                        g[r * d + j] += self.grad[r * d + j] * (T(1) + sc->value[j]);
            }
            if (sc->needs_grad) {
                Tensor<T>& g = sc->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j)
                        g[j] += self.grad[r * d + j] * x->value[r * d + j];
            }
            if (sh->needs_grad) {
                Tensor<T>& g = sh->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j];
            }
        }, "modulate");
    }

    Var<T> softmax_last(Var<T> x) {
        Tensor<T> out = softmax_plain(x->value, x->value.rank() - 1);
        return make(std::move(out), {x}, [](Node<T>& self) {
            Node<T>* x = self.parents[0];
            if (!x->needs_grad) return;
            std::size_t d = self.value.shape().back();
            std::size_t rows = self.value.numel() / d;
            Tensor<T>& g = x->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const T* s = self.value.data() + r * d;
                const T* go = self.grad.data() + r * d;
                T dot = 0;
                for (std::size_t j = 0; j < d; ++j) dot += go[j] * s[j];
                for (std::size_t j = 0; j < d; ++j) g[r * d + j] += s[j] * (go[j] - dot);
            }
        }, "softmax");
    }

    // Layer norm over the last axis, no affine (conditioning supplies it).
    Var<T> layernorm_last(Var<T> x, T eps = T(1e-6)) {
        std::size_t d = x->value.shape().back();
        std::size_t rows = x->value.numel() / d;
        Tensor<T> out(x->value.shape());
        Tensor<T> rstd(Shape{rows});
        for (std::size_t r = 0; r < rows; ++r) {
            const T* src = x->value.data() + r * d;
            T mean = 0;
            for (std::size_t j = 0; j < d; ++j) mean += src[j];
            mean /= T(d);
            T var = 0;
            for (std::size_t j = 0; j < d; ++j) {
                T c = src[j] - mean;
                var += c * c;
            }
            var /= T(d);
            T rs = T(1) / std::sqrt(var + eps);
            rstd[r] = rs;
            for (std::size_t j = 0; j < d; ++j) out.data()[r * d + j] = (src[j] - mean) * rs;
        }
        return make(std::move(out), {x}, [d, rstd](Node<T>& self) {
            Node<T>* x = self.parents[0];
            if (!x->needs_grad) return;
            std::size_t rows = self.value.numel() / d;
            Tensor<T>& g = x->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const T* y = self.value.data() + r * d; // normalized output
                const T* go = self.grad.data() + r * d;
                T gmean = 0, gymean = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    gmean += go[j];
                    gymean += go[j] * y[j];
                }
                gmean /= T(d);
                gymean /= T(d);
                for (std::size_t j = 0; j < d; ++j)
                    g[r * d + j] += rstd[r] * (go[j] - gmean - y[j] * gymean);
            }
        }, "layernorm");
    }

    Var<T> silu(Var<T> x) {
        Tensor<T> out = x->value;
        for (auto& v : out.vec()) v = v / (T(1) + std::exp(-v));
        return make(std::move(out), {x}, [](Node<T>& self) {
            Node<T>* x = self.parents[0];
            if (!x->needs_grad) return;
            Tensor<T>& g = x->ensure_grad();
            for (std::size_t i = 0; i < g.numel(); ++i) {
                T v = x->value[i];
                T sig = T(1) / (T(1) + std::exp(-v));
                g[i] += self.grad[i] * sig * (T(1) + v * (T(1) - sig));
            }
        }, "silu");
    }

    Var<T> embedding(Var<T> table, const std::vector<int>& ids) {
        if (table->value.rank() != 2) throw ShapeError("embedding: table must be 2D");
        std::size_t v = table->value.extent(0), d = table->value.extent(1);
        Tensor<T> out(Shape{ids.size(), d});
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (ids[i] < 0 || std::size_t(ids[i]) >= v)
                throw ShapeError("embedding: id out of range");
            std::copy_n(table->value.data() + std::size_t(ids[i]) * d, d, out.data() + i * d);
        }
        return make(std::move(out), {table}, [ids, d](Node<T>& self) {
            Node<T>* table = self.parents[0];
            if (!table->needs_grad) return;
            Tensor<T>& g = table->ensure_grad();
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (std::size_t j = 0; j < d; ++j)
                    g[std::size_t(ids[i]) * d + j] += self.grad[i * d + j];
        }, "embedding");
    }

    // Concatenate along axis 0; trailing extents must agree.
    Var<T> concat0(const std::vector<Var<T>>& parts) {
        if (parts.empty()) throw ShapeError("concat0: no inputs");
        Shape s = parts[0]->value.shape();
        std::size_t rows = 0;
        std::size_t rowsz = parts[0]->value.numel() / (s[0] ? s[0] : 1);
        for (Var<T> p : parts) {
            Shape ps = p->value.shape();
            if (ps.size() != s.size()) throw ShapeError("concat0: rank mismatch");
            for (std::size_t i = 1; i < s.size(); ++i)
                if (ps[i] != s[i]) throw ShapeError("concat0: trailing extent mismatch");
            rows += ps[0];
        }
        s[0] = rows;
        Tensor<T> out(s);
        std::size_t off = 0;
        for (Var<T> p : parts) {
            std::copy_n(p->value.data(), p->value.numel(), out.data() + off);
            off += p->value.numel();
        }
        std::vector<Var<T>> parents(parts.begin(), parts.end());
        return make(std::move(out), parents, [rowsz](Node<T>& self) {
            std::size_t off = 0;
            for (Node<T>* p : self.parents) {
                std::size_t n = p->value.numel();
                if (p->needs_grad) {
                    Tensor<T>& g = p->ensure_grad();
                    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
                }
                off += n;
            }
            (void)rowsz;
        }, "concat0");
    }

    Var<T> slice0(Var<T> x, std::size_t start, std::size_t len) {
        Shape s = x->value.shape();
        if (start + len > s[0]) throw ShapeError("slice0 out of range");
        std::size_t rowsz = x->value.numel() / s[0];
        Shape os = s;
        os[0] = len;
        Tensor<T> out(os);
        std::copy_n(x->value.data() + start * rowsz, len * rowsz, out.data());
        return make(std::move(out), {x}, [start, len, rowsz](Node<T>& self) {
            Node<T>* x = self.parents[0];
            if (!x->needs_grad) return;
            Tensor<T>& g = x->ensure_grad();
            for (std::size_t i = 0; i < len * rowsz; ++i) g[start * rowsz + i] += self.grad[i];
        }, "slice0");
    }

    Var<T> reshape(Var<T> x, Shape s) {
        Tensor<T> out = x->value.reshaped(std::move(s));
        return make(std::move(out), {x}, [](Node<T>& self) {
            Node<T>* x = self.parents[0];
            if (!x->needs_grad) return;
            x->accumulate(self.grad.reshaped(x->value.shape()));
        }, "reshape");
    }

    // Tile the whole tensor `times` times along a new leading axis 0 grouping.
    Var<T> repeat0(Var<T> x, std::size_t times) {
        Shape s = x->value.shape();
        Shape os = s;
        os[0] = s[0] * times;
        Tensor<T> out(os);
        for (std::size_t r = 0; r < times; ++r)
            std::copy_n(x->value.data(), x->value.numel(), out.data() + r * x->value.numel());
        return make(std::move(out), {x}, [times](Node<T>& self) {
            Node<T>* x = self.parents[0];
            if (!x->needs_grad) return;
            Tensor<T>& g = x->ensure_grad();
            std::size_t n = x->value.numel();
            for (std::size_t r = 0; r < times; ++r)
                for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[r * n + i];
        }, "repeat0");
    }

    // [B,Tq,d] -> [B*H, Tq, d/H]: head h of batch b lands at b*H + h.
    Var<T> split_heads(Var<T> x, std::size_t heads) {
        const Shape& s = x->value.shape();
        if (s.size() != 3 || s[2] % heads != 0) throw ShapeError("split_heads");
        std::size_t B = s[0], t = s[1], d = s[2], dh = d / heads;
        Tensor<T> out(Shape{B * heads, t, dh});
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t h = 0; h < heads; ++h)
                    std::copy_n(x->value.data() + (b * t + i) * d + h * dh, dh,
                                out.data() + ((b * heads + h) * t + i) * dh);
        return make(std::move(out), {x}, [B, t, d, dh, heads](Node<T>& self) {
            Node<T>* x = self.parents[0];
            if (!x->needs_grad) return;
            Tensor<T>& g = x->ensure_grad();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t i = 0; i < t; ++i)
                    for (std::size_t h = 0; h < heads; ++h)
                        for (std::size_t j = 0; j < dh; ++j)
                            g[(b * t + i) * d + h * dh + j] +=
                                self.grad[((b * heads + h) * t + i) * dh + j];
        }, "split_heads");
    }

    // Inverse of split_heads.
    Var<T> merge_heads(Var<T> x, std::size_t heads) {
        const Shape& s = x->value.shape();
        if (s.size() != 3 || s[0] % heads != 0) throw ShapeError("merge_heads");
        std::size_t B = s[0] / heads, t = s[1], dh = s[2], d = dh * heads;
        Tensor<T> out(Shape{B, t, d});
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t h = 0; h < heads; ++h)
                    std::copy_n(x->value.data() + ((b * heads + h) * t + i) * dh, dh,
                                out.data() + (b * t + i) * d + h * dh);
        return make(std::move(out), {x}, [B, t, d, dh, heads](Node<T>& self) {
            Node<T>* x = self.parents[0];
            if (!x->needs_grad) return;
            Tensor<T>& g = x->ensure_grad();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t i = 0; i < t; ++i)
                    for (std::size_t h = 0; h < heads; ++h)
                        for (std::size_t j = 0; j < dh; ++j)
                            g[((b * heads + h) * t + i) * dh + j] +=
                                self.grad[(b * t + i) * d + h * dh + j];
        }, "merge_heads");
    }

    // Multiply each trailing-dim vector by a fixed (non-differentiated) scalar.
    // weights has one value per row, flattened over leading axes.
    Var<T> scale_rows(Var<T> x, Tensor<T> weights) {
        std::size_t d = x->value.shape().back();
        std::size_t rows = x->value.numel() / d;
        if (weights.numel() != rows) throw ShapeError("scale_rows: weight count mismatch");
        Tensor<T> out = x->value;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) out[r * d + j] *= weights[r];
        return make(std::move(out), {x}, [weights, d](Node<T>& self) {
            Node<T>* x = self.parents[0];
            if (!x->needs_grad) return;
            Tensor<T>& g = x->ensure_grad();
            std::size_t rows = g.numel() / d;
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < d; ++j)
                    g[r * d + j] += self.grad[r * d + j] * weights[r];
        }, "scale_rows");
    }

    // Pairwise rotation with fixed angles: channels (2p, 2p+1) rotate by
    // angle[row][p]. cos/sin are [rows, d/2]. Norm-preserving by construction.
    Var<T> rotate_pairs(Var<T> x, Tensor<T> cos_t, Tensor<T> sin_t) {
        std::size_t d = x->value.shape().back();
        std::size_t rows = x->value.numel() / d;
        if (d % 2 != 0 || cos_t.numel() != rows * d / 2 || sin_t.numel() != rows * d / 2)
            throw ShapeError("rotate_pairs: table mismatch");
        Tensor<T> out(x->value.shape());
        std::size_t half = d / 2;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t p = 0; p < half; ++p) {
                T c = cos_t[r * half + p], s = sin_t[r * half + p];
                T v0 = x->value[r * d + 2 * p], v1 = x->value[r * d + 2 * p + 1];
                out[r * d + 2 * p] = v0 * c - v1 * s;
                out[r * d + 2 * p + 1] = v0 * s + v1 * c;
            }
        return make(std::move(out), {x}, [cos_t, sin_t, d](Node<T>& self) {
            Node<T>* x = self.parents[0];
            if (!x->needs_grad) return;
            Tensor<T>& g = x->ensure_grad();
            std::size_t rows = g.numel() / d, half = d / 2;
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t p = 0; p < half; ++p) {
                    T c = cos_t[r * half + p], s = sin_t[r * half + p];
                    T g0 = self.grad[r * d + 2 * p], g1 = self.grad[r * d + 2 * p + 1];
                    g[r * d + 2 * p] += g0 * c + g1 * s;
                    g[r * d + 2 * p + 1] += -g0 * s + g1 * c;
                }
        }, "rotate_pairs");
    }

    Var<T> sum_all(Var<T> x) {
        T acc = 0;
        for (const T& v : x->value.vec()) acc += v;
        return make(Tensor<T>::scalar(acc), {x}, [](Node<T>& self) {
            Node<T>* x = self.parents[0];
            if (!x->needs_grad) return;
            Tensor<T>& g = x->ensure_grad();
            for (auto& v : g.vec()) v += self.grad[0];
        }, "sum_all");
    }

    Var<T> mean_all(Var<T> x) {
        T acc = 0;
        for (const T& v : x->value.vec()) acc += v;
        T n = T(x->value.numel());
        return make(Tensor<T>::scalar(acc / n), {x}, [n](Node<T>& self) {
            Node<T>* x = self.parents[0];
            if (!x->needs_grad) return;
            Tensor<T>& g = x->ensure_grad();
            for (auto& v : g.vec()) v += self.grad[0] / n;
        }, "mean_all");
    }

    // Linear layer helper: x [rows, in] @ w [in, out] + b [out].
    Var<T> linear(Var<T> x, Var<T> w, Var<T> b) { return add_rowvec(matmul(x, w), b); }

    // Mean squared error against a plain target tensor.
    Var<T> mse(Var<T> pred, const Tensor<T>& target) {
        return mean_all(square(sub(pred, constant(target))));
    }

    Var<T> square(Var<T> x) { return mul(x, x); }

  private:
    Var<T> adopt(Tensor<T> v, bool needs_grad) {
        v.require_finite("tape input");
        auto n = std::make_unique<Node<T>>();
        n->value = std::move(v);
        n->needs_grad = needs_grad;
        Node<T>* raw = n.get();
        owned_.push_back(std::move(n));
        return raw;
    }

    Var<T> make(Tensor<T> value, std::vector<Var<T>> parents,
                std::function<void(Node<T>&)> back, const char* opname) {
        value.require_finite(opname);
        auto n = std::make_unique<Node<T>>();
        n->value = std::move(value);
        n->parents = std::move(parents);
        for (Node<T>* p : n->parents)
            if (p->needs_grad) n->needs_grad = true;
        if (n->needs_grad) n->backward_fn = std::move(back);
        Node<T>* raw = n.get();
        owned_.push_back(std::move(n));
        order_.push_back(raw);
        return raw;
    }

    void require_same(Var<T> a, Var<T> b, const char* op) {
        if (!a->value.same_shape(b->value))
            throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->value.shape()) +
                             " vs " + shape_str(b->value.shape()));
    }

    std::vector<std::unique_ptr<Node<T>>> owned_;
    std::vector<Node<T>*> order_;
};

} // namespace avdt
