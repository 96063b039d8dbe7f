#include "biner/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "biner/kernels.hpp"

namespace biner::ag {

bool& grad_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->op = "const";
    return n;
}

Var param(Tensor v, const char* op) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->op = op;
    n->requires_grad = true;
    return n;
}

namespace {

Var make_node(Tensor value, std::vector<Var> parents, const char* op,
              std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    bool req = false;
    if (grad_enabled()) {
        for (const auto& p : parents)
            if (p && p->requires_grad) req = true;
    }
    n->requires_grad = req;
    if (req) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward);
    }
    return n;
}

void accum(Node* p, const Tensor& g) {
    if (!p->requires_grad) return;
    Tensor& dst = p->ensure_grad();
    const int n = dst.numel();
    for (int i = 0; i < n; ++i) dst[i] += g[i];
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->value.shape()) +
                         " vs " + shape_str(b->value.shape()));
}

}  // namespace

void backward(const Var& loss) {
    if (loss->value.numel() != 1) throw ShapeError("backward expects a scalar loss");
    if (!loss->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p && p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad();
    loss->grad[0] = real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

void zero_grad(const std::vector<Var>& params) {
    for (const auto& p : params) {
        p->ensure_grad();
        p->grad.fill(real(0));
    }
}

// ---- elementwise -----------------------------------------------------------

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    for (int i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    Node* pa = a.get();
    Node* pb = b.get();
    return make_node(std::move(out), {a, b}, "add", [pa, pb](Node& n) {
        accum(pa, n.grad);
        accum(pb, n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    for (int i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    Node* pa = a.get();
    Node* pb = b.get();
    return make_node(std::move(out), {a, b}, "sub", [pa, pb](Node& n) {
        accum(pa, n.grad);
        if (pb->requires_grad) {
            Tensor& dst = pb->ensure_grad();
            for (int i = 0; i < dst.numel(); ++i) dst[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    for (int i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    Node* pa = a.get();
    Node* pb = b.get();
    return make_node(std::move(out), {a, b}, "mul", [pa, pb](Node& n) {
        if (pa->requires_grad) {
            Tensor& dst = pa->ensure_grad();
            for (int i = 0; i < dst.numel(); ++i) dst[i] += n.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            Tensor& dst = pb->ensure_grad();
            for (int i = 0; i < dst.numel(); ++i) dst[i] += n.grad[i] * pa->value[i];
        }
    });
}

Var affine_const(const Var& a, double k, double c) {
    Tensor out = a->value;
    const real rk = static_cast<real>(k);
    const real rc = static_cast<real>(c);
    for (int i = 0; i < out.numel(); ++i) out[i] = rk * out[i] + rc;
    Node* pa = a.get();
    return make_node(std::move(out), {a}, "affine_const", [pa, rk](Node& n) {
        if (!pa->requires_grad) return;
        Tensor& dst = pa->ensure_grad();
        for (int i = 0; i < dst.numel(); ++i) dst[i] += rk * n.grad[i];
    });
}

Var scale(const Var& a, double s) { return affine_const(a, s, 0.0); }

Var mul_const(const Var& a, Tensor c) {
    if (!a->value.same_shape(c)) throw ShapeError("mul_const: shape mismatch");
    Tensor out = a->value;
    for (int i = 0; i < out.numel(); ++i) out[i] *= c[i];
    Node* pa = a.get();
    auto cc = std::make_shared<Tensor>(std::move(c));
    return make_node(std::move(out), {a}, "mul_const", [pa, cc](Node& n) {
        if (!pa->requires_grad) return;
        Tensor& dst = pa->ensure_grad();
        for (int i = 0; i < dst.numel(); ++i) dst[i] += n.grad[i] * (*cc)[i];
    });
}

Var relu(const Var& a) {
    Tensor out = a->value;
    for (int i = 0; i < out.numel(); ++i) out[i] = std::max(real(0), out[i]);
    Node* pa = a.get();
    return make_node(std::move(out), {a}, "relu", [pa](Node& n) {
        if (!pa->requires_grad) return;
        Tensor& dst = pa->ensure_grad();
        for (int i = 0; i < dst.numel(); ++i)
            if (pa->value[i] > real(0)) dst[i] += n.grad[i];
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a->value;
    for (int i = 0; i < out.numel(); ++i) out[i] = real(1) / (real(1) + std::exp(-out[i]));
    Node* pa = a.get();
    return make_node(std::move(out), {a}, "sigmoid", [pa](Node& n) {
        if (!pa->requires_grad) return;
        Tensor& dst = pa->ensure_grad();
        for (int i = 0; i < dst.numel(); ++i) {
            const real s = n.value[i];
            dst[i] += n.grad[i] * s * (real(1) - s);
        }
    });
}

Var tanh_op(const Var& a) {
    Tensor out = a->value;
    for (int i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
    Node* pa = a.get();
    return make_node(std::move(out), {a}, "tanh", [pa](Node& n) {
        if (!pa->requires_grad) return;
        Tensor& dst = pa->ensure_grad();
        for (int i = 0; i < dst.numel(); ++i) {
            const real t = n.value[i];
            dst[i] += n.grad[i] * (real(1) - t * t);
        }
    });
}

Var log_clamped(const Var& a, double eps) {
    const real e = static_cast<real>(eps);
    Tensor out = a->value;
    for (int i = 0; i < out.numel(); ++i) out[i] = std::log(std::max(out[i], e));
    Node* pa = a.get();
    return make_node(std::move(out), {a}, "log", [pa, e](Node& n) {
        if (!pa->requires_grad) return;
        Tensor& dst = pa->ensure_grad();
        for (int i = 0; i < dst.numel(); ++i)
            dst[i] += n.grad[i] / std::max(pa->value[i], e);
    });
}

Var pow_const(const Var& a, double p) {
    Tensor out = a->value;
    for (int i = 0; i < out.numel(); ++i)
        out[i] = static_cast<real>(std::pow(static_cast<double>(out[i]), p));
    Node* pa = a.get();
    return make_node(std::move(out), {a}, "pow", [pa, p](Node& n) {
        if (!pa->requires_grad) return;
        Tensor& dst = pa->ensure_grad();
        for (int i = 0; i < dst.numel(); ++i) {
            const double base = std::max(static_cast<double>(pa->value[i]), 1e-12);
            dst[i] += n.grad[i] * static_cast<real>(p * std::pow(base, p - 1.0));
        }
    });
}

Var clamp(const Var& a, double lo, double hi) {
    const real rlo = static_cast<real>(lo);
    const real rhi = static_cast<real>(hi);
    Tensor out = a->value;
    for (int i = 0; i < out.numel(); ++i) out[i] = std::min(std::max(out[i], rlo), rhi);
    Node* pa = a.get();
    return make_node(std::move(out), {a}, "clamp", [pa, rlo, rhi](Node& n) {
        if (!pa->requires_grad) return;
        Tensor& dst = pa->ensure_grad();
        for (int i = 0; i < dst.numel(); ++i) {
            const real v = pa->value[i];
            if (v > rlo && v < rhi) dst[i] += n.grad[i];
        }
    });
}

// ---- shape / selection -----------------------------------------------------

Var concat_cols(const Var& a, const Var& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(0) != b->value.dim(0))
        throw ShapeError("concat_cols: incompatible shapes");
    const int n = a->value.dim(0);
    const int da = a->value.dim(1);
    const int db = b->value.dim(1);
    Tensor out({n, da + db});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < da; ++j) out.at(i, j) = a->value.at(i, j);
        for (int j = 0; j < db; ++j) out.at(i, da + j) = b->value.at(i, j);
    }
    Node* pa = a.get();
    Node* pb = b.get();
    return make_node(std::move(out), {a, b}, "concat_cols", [pa, pb, n, da, db](Node& nd) {
        if (pa->requires_grad) {
            Tensor& dst = pa->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < da; ++j) dst.at(i, j) += nd.grad.at(i, j);
        }
        if (pb->requires_grad) {
            Tensor& dst = pb->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < db; ++j) dst.at(i, j) += nd.grad.at(i, da + j);
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
    const int d = parts[0]->value.dim(1);
    int rows = 0;
    for (const auto& p : parts) {
        if (p->value.rank() != 2 || p->value.dim(1) != d)
            throw ShapeError("concat_rows: column counts disagree");
        rows += p->value.dim(0);
    }
    Tensor out({rows, d});
    int r = 0;
    for (const auto& p : parts) {
        for (int i = 0; i < p->value.dim(0); ++i, ++r)
            for (int j = 0; j < d; ++j) out.at(r, j) = p->value.at(i, j);
    }
    std::vector<Var> parents(parts.begin(), parts.end());
    auto raw = std::make_shared<std::vector<Node*>>();
    for (const auto& p : parts) raw->push_back(p.get());
    return make_node(std::move(out), std::move(parents), "concat_rows", [raw, d](Node& nd) {
        int r = 0;
        for (Node* p : *raw) {
            const int pr = p->value.dim(0);
            if (p->requires_grad) {
                Tensor& dst = p->ensure_grad();
                for (int i = 0; i < pr; ++i)
                    for (int j = 0; j < d; ++j) dst.at(i, j) += nd.grad.at(r + i, j);
            }
            r += pr;
        }
    });
}

Var slice_cols(const Var& a, int from, int len) {
    if (a->value.rank() != 2 || from < 0 || from + len > a->value.dim(1))
        throw ShapeError("slice_cols: out of range");
    const int n = a->value.dim(0);
    Tensor out({n, len});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < len; ++j) out.at(i, j) = a->value.at(i, from + j);
    Node* pa = a.get();
    return make_node(std::move(out), {a}, "slice_cols", [pa, from, len, n](Node& nd) {
        if (!pa->requires_grad) return;
        Tensor& dst = pa->ensure_grad();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < len; ++j) dst.at(i, from + j) += nd.grad.at(i, j);
    });
}

Var gather_rows(const Var& a, std::vector<int> ids) {
    if (a->value.rank() != 2) throw ShapeError("gather_rows: expects a matrix");
    const int rows = a->value.dim(0);
    const int d = a->value.dim(1);
    for (int id : ids)
        if (id < 0 || id >= rows) throw ShapeError("gather_rows: row index out of range");
    Tensor out({static_cast<int>(ids.size()), d});
    for (size_t m = 0; m < ids.size(); ++m)
        for (int j = 0; j < d; ++j) out.at(static_cast<int>(m), j) = a->value.at(ids[m], j);
    Node* pa = a.get();
    auto idv = std::make_shared<std::vector<int>>(std::move(ids));
    return make_node(std::move(out), {a}, "gather_rows", [pa, idv, d](Node& nd) {
        if (!pa->requires_grad) return;
        Tensor& dst = pa->ensure_grad();
        for (size_t m = 0; m < idv->size(); ++m)
            for (int j = 0; j < d; ++j)
                dst.at((*idv)[m], j) += nd.grad.at(static_cast<int>(m), j);
    });
}

Var reverse_rows(const Var& a) {
    if (a->value.rank() != 2) throw ShapeError("reverse_rows: expects a matrix");
    const int n = a->value.dim(0);
    const int d = a->value.dim(1);
    Tensor out({n, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) = a->value.at(n - 1 - i, j);
    Node* pa = a.get();
    return make_node(std::move(out), {a}, "reverse_rows", [pa, n, d](Node& nd) {
        if (!pa->requires_grad) return;
        Tensor& dst = pa->ensure_grad();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) dst.at(n - 1 - i, j) += nd.grad.at(i, j);
    });
}

Var reshape(const Var& a, std::vector<int> shape) {
    Tensor out = a->value.reshaped(std::move(shape));
    Node* pa = a.get();
    return make_node(std::move(out), {a}, "reshape", [pa](Node& nd) {
        if (!pa->requires_grad) return;
        Tensor& dst = pa->ensure_grad();
        for (int i = 0; i < dst.numel(); ++i) dst[i] += nd.grad[i];
    });
}

// ---- reductions / contractions ----------------------------------------------

Var sum(const Var& a) {
    real s = 0;
    for (int i = 0; i < a->value.numel(); ++i) s += a->value[i];
    Node* pa = a.get();
    return make_node(Tensor::scalar(s), {a}, "sum", [pa](Node& nd) {
        if (!pa->requires_grad) return;
        Tensor& dst = pa->ensure_grad();
        const real g = nd.grad[0];
        for (int i = 0; i < dst.numel(); ++i) dst[i] += g;
    });
}

Var dot_lastdim(const Var& a, const Var& b) {
    check_same_shape(a, b, "dot_lastdim");
    if (a->value.rank() != 2) throw ShapeError("dot_lastdim: expects matrices");
    const int n = a->value.dim(0);
    const int d = a->value.dim(1);
    Tensor out({n});
    for (int i = 0; i < n; ++i) {
        real s = 0;
        for (int j = 0; j < d; ++j) s += a->value.at(i, j) * b->value.at(i, j);
        out[i] = s;
    }
    Node* pa = a.get();
    Node* pb = b.get();
    return make_node(std::move(out), {a, b}, "dot_lastdim", [pa, pb, n, d](Node& nd) {
        for (int i = 0; i < n; ++i) {
            const real g = nd.grad[i];
            if (pa->requires_grad) {
                Tensor& dst = pa->ensure_grad();
                for (int j = 0; j < d; ++j) dst.at(i, j) += g * pb->value.at(i, j);
            }
            if (pb->requires_grad) {
                Tensor& dst = pb->ensure_grad();
                for (int j = 0; j < d; ++j) dst.at(i, j) += g * pa->value.at(i, j);
            }
        }
    });
}

Var matmul(const Var& a, bool trans_a, const Var& b, bool trans_b) {
    if (a->value.rank() != 2 || b->value.rank() != 2)
        throw ShapeError("matmul: expects matrices");
    const int m = trans_a ? a->value.dim(1) : a->value.dim(0);
    const int ka = trans_a ? a->value.dim(0) : a->value.dim(1);
    const int kb = trans_b ? b->value.dim(1) : b->value.dim(0);
    const int n = trans_b ? b->value.dim(0) : b->value.dim(1);
    if (ka != kb)
        throw ShapeError("matmul: inner dimensions disagree (" + std::to_string(ka) + " vs " +
                         std::to_string(kb) + ")");
    Tensor out({m, n});
    kernels::matmul(a->value.data(), trans_a, b->value.data(), trans_b, out.data(), m, n, ka);
    Node* pa = a.get();
    Node* pb = b.get();
    return make_node(std::move(out), {a, b}, "matmul",
                     [pa, pb, trans_a, trans_b, m, n, ka](Node& nd) {
        const real* g = nd.grad.data();
        if (pa->requires_grad) {
            Tensor& da = pa->ensure_grad();
            if (!trans_a) {
                // dA = dC * B_eff^T
                kernels::matmul(g, false, pb->value.data(), !trans_b, da.data(), m, ka, n, true);
            } else {
                // stored A is [k,m]; dA_storage = B_eff * dC^T
                kernels::matmul(pb->value.data(), trans_b, g, true, da.data(), ka, m, n, true);
            }
        }
        if (pb->requires_grad) {
            Tensor& db = pb->ensure_grad();
            if (!trans_b) {
                // dB = A_eff^T * dC
                kernels::matmul(pa->value.data(), !trans_a, g, false, db.data(), ka, n, m, true);
            } else {
                // stored B is [n,k]; dB_storage = dC^T * A_eff
                kernels::matmul(g, true, pa->value.data(), trans_a, db.data(), n, ka, m, true);
            }
        }
    });
}

// ---- rows & masks ------------------------------------------------------------

Var add_rowvec(const Var& x, const Var& bias) {
    if (x->value.rank() != 2 || bias->value.rank() != 1 || x->value.dim(1) != bias->value.dim(0))
        throw ShapeError("add_rowvec: incompatible shapes");
    const int n = x->value.dim(0);
    const int d = x->value.dim(1);
    Tensor out = x->value;
    kernels::add_bias_rows(out.data(), bias->value.data(), n, d);
    Node* px = x.get();
    Node* pbias = bias.get();
    return make_node(std::move(out), {x, bias}, "add_rowvec", [px, pbias, n, d](Node& nd) {
        if (px->requires_grad) accum(px, nd.grad);
        if (pbias->requires_grad) {
            Tensor& dst = pbias->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) dst[j] += nd.grad.at(i, j);
        }
    });
}

Var mul_rowmask(const Var& a, std::vector<uint8_t> keep) {
    if (a->value.rank() != 2 || static_cast<int>(keep.size()) != a->value.dim(0))
        throw ShapeError("mul_rowmask: mask length mismatch");
    const int n = a->value.dim(0);
    const int d = a->value.dim(1);
    Tensor out = a->value;
    for (int i = 0; i < n; ++i)
        if (!keep[i])
            for (int j = 0; j < d; ++j) out.at(i, j) = real(0);
    Node* pa = a.get();
    auto km = std::make_shared<std::vector<uint8_t>>(std::move(keep));
    return make_node(std::move(out), {a}, "mul_rowmask", [pa, km, n, d](Node& nd) {
        if (!pa->requires_grad) return;
        Tensor& dst = pa->ensure_grad();
        for (int i = 0; i < n; ++i)
            if ((*km)[i])
                for (int j = 0; j < d; ++j) dst.at(i, j) += nd.grad.at(i, j);
    });
}

Var softmax_rows_masked(const Var& a, const std::vector<uint8_t>& mask,
                        std::vector<uint8_t>* empty_rows) {
    if (a->value.rank() != 2) throw ShapeError("softmax_rows_masked: expects a matrix");
    const int n = a->value.dim(0);
    const int d = a->value.dim(1);
    if (static_cast<int>(mask.size()) != n * d)
        throw ShapeError("softmax_rows_masked: mask size mismatch");
    if (empty_rows) empty_rows->assign(static_cast<size_t>(n), 0);

    Tensor out({n, d});
    for (int i = 0; i < n; ++i) {
        real mx = -std::numeric_limits<real>::infinity();
        bool any = false;
        for (int j = 0; j < d; ++j) {
            if (mask[static_cast<size_t>(i) * d + j]) {
                any = true;
                mx = std::max(mx, a->value.at(i, j));
            }
        }
        if (!any) {
            if (empty_rows) (*empty_rows)[static_cast<size_t>(i)] = 1;
            continue;  // row stays all zero
        }
        real denom = 0;
        for (int j = 0; j < d; ++j) {
            if (mask[static_cast<size_t>(i) * d + j]) {
                const real e = std::exp(a->value.at(i, j) - mx);
                out.at(i, j) = e;
                denom += e;
            }
        }
        for (int j = 0; j < d; ++j) out.at(i, j) /= denom;
    }
    Node* pa = a.get();
    // The saved weights encode the mask: masked-out entries carry weight 0
    // and therefore receive zero gradient.
    return make_node(std::move(out), {a}, "softmax_masked", [pa, n, d](Node& nd) {
        if (!pa->requires_grad) return;
        Tensor& dst = pa->ensure_grad();
        for (int i = 0; i < n; ++i) {
            real gdotw = 0;
            for (int j = 0; j < d; ++j) gdotw += nd.grad.at(i, j) * nd.value.at(i, j);
            for (int j = 0; j < d; ++j) {
                const real w = nd.value.at(i, j);
                if (w != real(0)) dst.at(i, j) += w * (nd.grad.at(i, j) - gdotw);
            }
        }
    });
}

Var dropout(const Var& a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
    Tensor m(a->value.shape());
    const real keep_scale = static_cast<real>(1.0 / (1.0 - rate));
    for (int i = 0; i < m.numel(); ++i) m[i] = rng.bernoulli(rate) ? real(0) : keep_scale;
    return mul_const(a, std::move(m));
}

// ---- parameter bundles --------------------------------------------------------

void collect(ParamList& out, const std::string& prefix, const MlpParams& p) {
    out.emplace_back(prefix + ".w1", p.w1);
    out.emplace_back(prefix + ".b1", p.b1);
    out.emplace_back(prefix + ".w2", p.w2);
    out.emplace_back(prefix + ".b2", p.b2);
}

void collect(ParamList& out, const std::string& prefix, const GruParams& p) {
    out.emplace_back(prefix + ".wz", p.wz);
    out.emplace_back(prefix + ".wr", p.wr);
    out.emplace_back(prefix + ".wh", p.wh);
    out.emplace_back(prefix + ".uz", p.uz);
    out.emplace_back(prefix + ".ur", p.ur);
    out.emplace_back(prefix + ".uh", p.uh);
    out.emplace_back(prefix + ".bz", p.bz);
    out.emplace_back(prefix + ".br", p.br);
    out.emplace_back(prefix + ".bh", p.bh);
}

void collect(ParamList& out, const std::string& prefix, const AttnParams& p) {
    out.emplace_back(prefix + ".wq", p.wq);
    out.emplace_back(prefix + ".bq", p.bq);
    out.emplace_back(prefix + ".wk", p.wk);
    out.emplace_back(prefix + ".bk", p.bk);
    out.emplace_back(prefix + ".wv", p.wv);
    out.emplace_back(prefix + ".bv", p.bv);
    out.emplace_back(prefix + ".wo", p.wo);
    out.emplace_back(prefix + ".bo", p.bo);
}

Tensor init_affine(int fan_in, int fan_out, Rng& rng) {
    Tensor w({fan_in, fan_out});
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int i = 0; i < w.numel(); ++i) w[i] = static_cast<real>(rng.uniform(-bound, bound));
    return w;
}

Tensor init_embedding(int rows, int dim, Rng& rng) {
    Tensor w({rows, dim});
    for (int i = 0; i < w.numel(); ++i) w[i] = static_cast<real>(rng.normal(0.0, 0.02));
    return w;
}

MlpParams make_mlp(int in_dim, int hidden_dim, int out_dim, Rng& rng, const char* name) {
    MlpParams p;
    p.w1 = param(init_affine(in_dim, hidden_dim, rng), name);
    p.b1 = param(Tensor({hidden_dim}), name);
    p.w2 = param(init_affine(hidden_dim, out_dim, rng), name);
    p.b2 = param(Tensor({out_dim}), name);
    return p;
}

Var affine(const Var& x, const Var& w, const Var& b) {
    return add_rowvec(matmul(x, false, w, false), b);
}

Var two_layer_mlp(const Var& x, const MlpParams& p, double dropout_rate, Rng* rng) {
    Var h = relu(affine(x, p.w1, p.b1));
    if (dropout_rate > 0.0 && rng) h = dropout(h, dropout_rate, *rng);
    return affine(h, p.w2, p.b2);
}

GruParams make_gru(int in_dim, int hidden_dim, Rng& rng) {
    GruParams p;
    p.wz = param(init_affine(in_dim, hidden_dim, rng), "gru");
    p.wr = param(init_affine(in_dim, hidden_dim, rng), "gru");
    p.wh = param(init_affine(in_dim, hidden_dim, rng), "gru");
    p.uz = param(init_affine(hidden_dim, hidden_dim, rng), "gru");
    p.ur = param(init_affine(hidden_dim, hidden_dim, rng), "gru");
    p.uh = param(init_affine(hidden_dim, hidden_dim, rng), "gru");
    p.bz = param(Tensor({hidden_dim}), "gru");
    p.br = param(Tensor({hidden_dim}), "gru");
    p.bh = param(Tensor({hidden_dim}), "gru");
    return p;
}

namespace {

struct GruTrace {
    Tensor z, r, hc, h, rh;  // [L,D] each
};

}  // namespace

Var gru(const Var& x, const GruParams& p) {
    if (x->value.rank() != 2) throw ShapeError("gru: expects [L,Din] input");
    const int len = x->value.dim(0);
    const int din = x->value.dim(1);
    const int d = p.hidden_dim();
    if (din != p.in_dim()) throw ShapeError("gru: input dim mismatch");
    if (len == 0) throw ShapeError("gru: empty sequence");

    // Input-side projections for all steps at once.
    Tensor pre_z({len, d}), pre_r({len, d}), pre_h({len, d});
    kernels::matmul(x->value.data(), false, p.wz->value.data(), false, pre_z.data(), len, d, din);
    kernels::matmul(x->value.data(), false, p.wr->value.data(), false, pre_r.data(), len, d, din);
    kernels::matmul(x->value.data(), false, p.wh->value.data(), false, pre_h.data(), len, d, din);
    kernels::add_bias_rows(pre_z.data(), p.bz->value.data(), len, d);
    kernels::add_bias_rows(pre_r.data(), p.br->value.data(), len, d);
    kernels::add_bias_rows(pre_h.data(), p.bh->value.data(), len, d);

    auto trace = std::make_shared<GruTrace>();
    trace->z = Tensor({len, d});
    trace->r = Tensor({len, d});
    trace->hc = Tensor({len, d});
    trace->h = Tensor({len, d});
    trace->rh = Tensor({len, d});

    std::vector<real> zpre(d), rpre(d), hcpre(d);
    const real* uz = p.uz->value.data();
    const real* ur = p.ur->value.data();
    const real* uh = p.uh->value.data();
    for (int t = 0; t < len; ++t) {
        const real* hprev = t > 0 ? &trace->h.at(t - 1, 0) : nullptr;
        for (int j = 0; j < d; ++j) {
            zpre[j] = pre_z.at(t, j);
            rpre[j] = pre_r.at(t, j);
        }
        if (hprev) {
            kernels::matmul(hprev, false, uz, false, zpre.data(), 1, d, d, true);
            kernels::matmul(hprev, false, ur, false, rpre.data(), 1, d, d, true);
        }
        for (int j = 0; j < d; ++j) {
            const real z = real(1) / (real(1) + std::exp(-zpre[j]));
            const real r = real(1) / (real(1) + std::exp(-rpre[j]));
            trace->z.at(t, j) = z;
            trace->r.at(t, j) = r;
            trace->rh.at(t, j) = hprev ? r * hprev[j] : real(0);
            hcpre[j] = pre_h.at(t, j);
        }
        kernels::matmul(&trace->rh.at(t, 0), false, uh, false, hcpre.data(), 1, d, d, true);
        for (int j = 0; j < d; ++j) {
            const real hc = std::tanh(hcpre[j]);
            trace->hc.at(t, j) = hc;
            const real hp = hprev ? hprev[j] : real(0);
            trace->h.at(t, j) = (real(1) - trace->z.at(t, j)) * hp + trace->z.at(t, j) * hc;
        }
    }

    Node* px = x.get();
    GruParams pp = p;
    return make_node(trace->h, {x, p.wz, p.wr, p.wh, p.uz, p.ur, p.uh, p.bz, p.br, p.bh}, "gru",
                     [px, pp, trace, len, din, d](Node& nd) {
        std::vector<real> carry(static_cast<size_t>(d), real(0));
        std::vector<real> g(d), dzpre(d), drpre(d), dhcpre(d), drh(d), tmp(d);
        Tensor dzpre_all({len, d}), drpre_all({len, d}), dhcpre_all({len, d});

        const real* uz = pp.uz->value.data();
        const real* ur = pp.ur->value.data();
        const real* uh = pp.uh->value.data();

        for (int t = len - 1; t >= 0; --t) {
            const real* hprev = t > 0 ? &trace->h.at(t - 1, 0) : nullptr;
            for (int j = 0; j < d; ++j) g[j] = nd.grad.at(t, j) + carry[j];
            for (int j = 0; j < d; ++j) {
                const real z = trace->z.at(t, j);
                const real hc = trace->hc.at(t, j);
                const real hp = hprev ? hprev[j] : real(0);
                const real dz = g[j] * (hc - hp);
                dzpre[j] = dz * z * (real(1) - z);
                dhcpre[j] = g[j] * z * (real(1) - hc * hc);
            }
            // d(r*hprev) = dhcpre * Uh^T
            kernels::matmul(dhcpre.data(), false, uh, true, drh.data(), 1, d, d);
            for (int j = 0; j < d; ++j) {
                const real r = trace->r.at(t, j);
                const real hp = hprev ? hprev[j] : real(0);
                drpre[j] = drh[j] * hp * r * (real(1) - r);
            }
            // carry for the previous step
            for (int j = 0; j < d; ++j)
                carry[j] = g[j] * (real(1) - trace->z.at(t, j)) + drh[j] * trace->r.at(t, j);
            kernels::matmul(dzpre.data(), false, uz, true, tmp.data(), 1, d, d);
            for (int j = 0; j < d; ++j) carry[j] += tmp[j];
            kernels::matmul(drpre.data(), false, ur, true, tmp.data(), 1, d, d);
            for (int j = 0; j < d; ++j) carry[j] += tmp[j];

            for (int j = 0; j < d; ++j) {
                dzpre_all.at(t, j) = dzpre[j];
                drpre_all.at(t, j) = drpre[j];
                dhcpre_all.at(t, j) = dhcpre[j];
            }
            if (hprev) {
                if (pp.uz->requires_grad)
                    kernels::outer_accum(hprev, dzpre.data(), pp.uz->ensure_grad().data(), d, d);
                if (pp.ur->requires_grad)
                    kernels::outer_accum(hprev, drpre.data(), pp.ur->ensure_grad().data(), d, d);
            }
            if (pp.uh->requires_grad)
                kernels::outer_accum(&trace->rh.at(t, 0), dhcpre.data(),
                                     pp.uh->ensure_grad().data(), d, d);
        }

        // Batched input-side gradients.
        if (pp.wz->requires_grad)
            kernels::matmul(px->value.data(), true, dzpre_all.data(), false,
                            pp.wz->ensure_grad().data(), din, d, len, true);
        if (pp.wr->requires_grad)
            kernels::matmul(px->value.data(), true, drpre_all.data(), false,
                            pp.wr->ensure_grad().data(), din, d, len, true);
        if (pp.wh->requires_grad)
            kernels::matmul(px->value.data(), true, dhcpre_all.data(), false,
                            pp.wh->ensure_grad().data(), din, d, len, true);
        if (px->requires_grad) {
            Tensor& dx = px->ensure_grad();
            kernels::matmul(dzpre_all.data(), false, pp.wz->value.data(), true, dx.data(), len,
                            din, d, true);
            kernels::matmul(drpre_all.data(), false, pp.wr->value.data(), true, dx.data(), len,
                            din, d, true);
            kernels::matmul(dhcpre_all.data(), false, pp.wh->value.data(), true, dx.data(), len,
                            din, d, true);
        }
        auto bias_accum = [&](const Var& bv, const Tensor& pre) {
            if (!bv->requires_grad) return;
            Tensor& dst = bv->ensure_grad();
            for (int t = 0; t < len; ++t)
                for (int j = 0; j < d; ++j) dst[j] += pre.at(t, j);
        };
        bias_accum(pp.bz, dzpre_all);
        bias_accum(pp.br, drpre_all);
        bias_accum(pp.bh, dhcpre_all);
    });
}

AttnParams make_attn(int dim, Rng& rng) {
    AttnParams p;
    p.wq = param(init_affine(dim, dim, rng), "attn");
    p.bq = param(Tensor({dim}), "attn");
    p.wk = param(init_affine(dim, dim, rng), "attn");
    p.bk = param(Tensor({dim}), "attn");
    p.wv = param(init_affine(dim, dim, rng), "attn");
    p.bv = param(Tensor({dim}), "attn");
    p.wo = param(init_affine(dim, dim, rng), "attn");
    p.bo = param(Tensor({dim}), "attn");
    return p;
}

Var multi_head_attention(const Var& q, const Var& k, const Var& v,
                         const std::vector<uint8_t>& mask, int heads, const AttnParams& p,
                         std::vector<uint8_t>* empty_rows) {
    const int lq = q->value.dim(0);
    const int lk = k->value.dim(0);
    const int d = q->value.dim(1);
    if (k->value.dim(1) != d || v->value.dim(1) != d || v->value.dim(0) != lk)
        throw ShapeError("multi_head_attention: dimension mismatch");
    if (heads < 1 || d % heads != 0)
        throw ShapeError("multi_head_attention: head count must divide dim");
    if (static_cast<int>(mask.size()) != lq * lk)
        throw ShapeError("multi_head_attention: mask size mismatch");
    const int dh = d / heads;

    Var qp = affine(q, p.wq, p.bq);
    Var kp = affine(k, p.wk, p.bk);
    Var vp = affine(v, p.wv, p.bv);

    std::vector<uint8_t> empties;
    Var ctx;
    for (int h = 0; h < heads; ++h) {
        Var qh = slice_cols(qp, h * dh, dh);
        Var kh = slice_cols(kp, h * dh, dh);
        Var vh = slice_cols(vp, h * dh, dh);
        Var scores = scale(matmul(qh, false, kh, true), 1.0 / std::sqrt(static_cast<double>(dh)));
        Var attn = softmax_rows_masked(scores, mask, h == 0 ? &empties : nullptr);
        Var ch = matmul(attn, false, vh, false);
        ctx = h == 0 ? ch : concat_cols(ctx, ch);
    }
    Var out = affine(ctx, p.wo, p.bo);

    bool any_empty = false;
    for (uint8_t e : empties) any_empty = any_empty || e;
    if (any_empty) {
        std::vector<uint8_t> keep(empties.size());
        for (size_t i = 0; i < empties.size(); ++i) keep[i] = empties[i] ? 0 : 1;
        out = mul_rowmask(out, std::move(keep));
    }
    if (empty_rows) *empty_rows = std::move(empties);
    return out;
}

double grad_check(const std::function<Var()>& f, const std::vector<Var>& params,
                  double epsilon) {
    zero_grad(params);
    Var loss = f();
    backward(loss);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(p->ensure_grad());

    auto eval = [&f]() {
        NoGradGuard ng;
        return static_cast<double>(f()->value[0]);
    };

    double max_rel = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& val = params[pi]->value;
        for (int i = 0; i < val.numel(); ++i) {
            const real orig = val[i];
            val[i] = orig + static_cast<real>(epsilon);
            const double fp = eval();
            val[i] = orig - static_cast<real>(epsilon);
            const double fm = eval();
            val[i] = orig;
            const double fd = (fp - fm) / (2.0 * epsilon);
            const double ad = static_cast<double>(analytic[pi][i]);
            const double denom = std::max({std::fabs(fd), std::fabs(ad), 1e-3});
            max_rel = std::max(max_rel, std::fabs(fd - ad) / denom);
        }
    }
    return max_rel;
}

}  // namespace biner::ag
