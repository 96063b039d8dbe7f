#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "biner/tensor.hpp"

namespace biner::ag {

struct Node;
using Var = std::shared_ptr<Node>;

/// One value in the computation graph. Gradients accumulate into `grad`,
/// which is allocated lazily on first use and zeroed by zero_grad().
struct Node {
    Tensor value;
    Tensor grad;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;
    bool requires_grad = false;
    const char* op = "leaf";

    Tensor& ensure_grad() {
        if (grad.numel() != value.numel()) grad = Tensor::zeros(value.shape());
        return grad;
    }
};

/// Gradient recording is on by default; eval paths switch it off to skip
/// tape construction entirely. Thread-local so document-parallel inference
/// does not race.
bool& grad_enabled();

struct NoGradGuard {
    NoGradGuard() : prev_(grad_enabled()) { grad_enabled() = false; }
    ~NoGradGuard() { grad_enabled() = prev_; }

private:
    bool prev_;
};

Var constant(Tensor v);
Var param(Tensor v, const char* op = "param");

/// Reverse pass from a scalar loss. Seeds d(loss)/d(loss)=1 and walks the
/// graph in reverse topological order.
void backward(const Var& loss);

void zero_grad(const std::vector<Var>& params);

// ---- elementwise -----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// k*a + c, elementwise with scalar constants.
Var affine_const(const Var& a, double k, double c);
/// Elementwise product with a non-differentiable tensor (masks, targets).
Var mul_const(const Var& a, Tensor c);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh_op(const Var& a);
/// log(max(a, eps)); the clamp keeps losses finite near 0.
Var log_clamped(const Var& a, double eps = 1e-7);
Var pow_const(const Var& a, double p);
Var clamp(const Var& a, double lo, double hi);

// ---- shape / selection -----------------------------------------------------
Var concat_cols(const Var& a, const Var& b);
/// Stack matrices with equal column counts along the row axis.
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& a, int from, int len);
/// rows of a selected by ids; backward scatter-adds. Doubles as embedding
/// lookup and first-subtoken extraction.
Var gather_rows(const Var& a, std::vector<int> ids);
Var reverse_rows(const Var& a);
Var reshape(const Var& a, std::vector<int> shape);

// ---- reductions / contractions ---------------------------------------------
Var sum(const Var& a);
/// [N,D] x [N,D] -> [N], dot along the last dimension.
Var dot_lastdim(const Var& a, const Var& b);
Var matmul(const Var& a, bool trans_a, const Var& b, bool trans_b);

// ---- rows & masks -----------------------------------------------------------
/// x[N,D] + bias[D] broadcast over rows.
Var add_rowvec(const Var& x, const Var& bias);
/// Zero out rows where keep[i]==0; backward applies the same mask.
Var mul_rowmask(const Var& a, std::vector<uint8_t> keep);
/// Row-wise softmax over permitted entries; masked-out entries get weight 0
/// and permitted entries sum to 1. A fully masked row yields all-zero
/// weights (never NaN) and is reported through empty_rows when requested.
Var softmax_rows_masked(const Var& a, const std::vector<uint8_t>& mask,
                        std::vector<uint8_t>* empty_rows = nullptr);
/// Inverted dropout, train-mode only: callers skip it in eval paths.
Var dropout(const Var& a, double rate, Rng& rng);

// ---- parameter bundles ------------------------------------------------------
struct MlpParams {
    Var w1, b1, w2, b2;
    int in_dim() const { return w1->value.dim(0); }
    int out_dim() const { return w2->value.dim(1); }
};

MlpParams make_mlp(int in_dim, int hidden_dim, int out_dim, Rng& rng,
                   const char* name = "mlp");

Var affine(const Var& x, const Var& w, const Var& b);

/// affine -> ReLU -> affine. Dropout (if rate>0 and rng given) sits after
/// the ReLU.
Var two_layer_mlp(const Var& x, const MlpParams& p, double dropout_rate = 0.0,
                  Rng* rng = nullptr);

struct GruParams {
    // update / reset / candidate gates; x-side [Din,D], h-side [D,D].
    Var wz, wr, wh, uz, ur, uh, bz, br, bh;
    int in_dim() const { return wz->value.dim(0); }
    int hidden_dim() const { return wz->value.dim(1); }
};

GruParams make_gru(int in_dim, int hidden_dim, Rng& rng);

/// Gated recurrence over rows of x, left to right, h0 = 0. Single tape node
/// with a hand-written backward-through-time.
Var gru(const Var& x, const GruParams& p);

struct AttnParams {
    Var wq, bq, wk, bk, wv, bv, wo, bo;
};

AttnParams make_attn(int dim, Rng& rng);

/// Standard multi-head scaled dot-product attention with an output
/// projection. mask is row-major [Lq,Lk], true where attention is permitted.
/// Queries whose permitted set is empty produce exactly-zero output rows and
/// are flagged via empty_rows.
Var multi_head_attention(const Var& q, const Var& k, const Var& v,
                         const std::vector<uint8_t>& mask, int heads,
                         const AttnParams& p,
                         std::vector<uint8_t>* empty_rows = nullptr);

// ---- parameter naming ---------------------------------------------------------
using ParamList = std::vector<std::pair<std::string, Var>>;

void collect(ParamList& out, const std::string& prefix, const MlpParams& p);
void collect(ParamList& out, const std::string& prefix, const GruParams& p);
void collect(ParamList& out, const std::string& prefix, const AttnParams& p);

// ---- initialization ---------------------------------------------------------
/// Zero-mean uniform scaled by 1/sqrt(fan_in).
Tensor init_affine(int fan_in, int fan_out, Rng& rng);
/// N(0, 0.02^2) for embedding tables.
Tensor init_embedding(int rows, int dim, Rng& rng);

/// Max relative error between reverse-mode gradients and central finite
/// differences, over every coordinate of every listed parameter. `f` must
/// rebuild its graph on each call and be deterministic.
double grad_check(const std::function<Var()>& f, const std::vector<Var>& params,
                  double epsilon);

}  // namespace biner::ag
