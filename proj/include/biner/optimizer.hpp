#pragma once

#include "biner/autograd.hpp"

namespace biner {

/// AdamW with decoupled weight decay and bias-corrected moments. Moment
/// state is keyed by parameter order, which must stay stable across steps.
class AdamW {
public:
    AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    /// One update from the gradients currently stored on the parameters.
    /// lr and weight_decay are per-parameter (parallel to params).
    void step(const std::vector<ag::Var>& params, const std::vector<double>& lr,
              const std::vector<double>& weight_decay);

    void step(const std::vector<ag::Var>& params, double lr, double weight_decay);

    long step_count() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Tensor> m_, v_;
};

/// Linear warmup to lr_max over ceil(warmup_ratio*total) steps, then cosine
/// decay to zero at the final step. Step index is 0-based; the first step
/// runs at lr_max/warmup_steps.
double cosine_warmup_lr(long step, long total_steps, double warmup_ratio, double lr_max);

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
double clip_global_norm(const std::vector<ag::Var>& params, double max_norm);

}  // namespace biner
