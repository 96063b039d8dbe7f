#include "biner/loss.hpp"

#include <algorithm>

namespace biner {

using ag::Var;

Reduction reduction_from_string(const std::string& s) {
    if (s == "sum") return Reduction::sum;
    if (s == "mean") return Reduction::mean;
    throw ConfigError("unknown reduction: " + s);
}

MaskStrategy mask_strategy_from_string(const std::string& s) {
    if (s == "global") return MaskStrategy::global;
    if (s == "label_wise") return MaskStrategy::label_wise;
    if (s == "span_wise") return MaskStrategy::span_wise;
    throw ConfigError("unknown mask strategy: " + s);
}

void LossConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("focal alpha must lie in (0,1)");
    if (gamma < 0.0) throw ConfigError("focal gamma must be >= 0");
    if (neg_rate < 0.0 || neg_rate > 1.0) throw ConfigError("neg_rate must lie in [0,1]");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
        throw ConfigError("label_smoothing must lie in [0,1)");
}

Var focal_loss(const Var& logits, const Tensor& targets, const Tensor& mask,
               const LossConfig& cfg) {
    cfg.validate();
    if (!logits->value.same_shape(targets) || !logits->value.same_shape(mask))
        throw ShapeError("focal_loss: logits/targets/mask shapes disagree");

    const int n = targets.numel();
    Tensor y = targets;
    if (cfg.label_smoothing > 0.0) {
        const real ls = static_cast<real>(cfg.label_smoothing);
        for (int i = 0; i < n; ++i) y[i] = y[i] * (real(1) - ls) + real(0.5) * ls;
    }

    // alpha on positives, (1-alpha) on negatives, folded with the mask into
    // one constant weight tensor.
    Tensor weight(targets.shape());
    double mask_count = 0.0;
    for (int i = 0; i < n; ++i) {
        const double a = targets[i] > real(0.5) ? cfg.alpha : 1.0 - cfg.alpha;
        weight[i] = static_cast<real>(a) * mask[i];
        mask_count += static_cast<double>(mask[i]);
    }

    Tensor one_minus_y = y;
    for (int i = 0; i < n; ++i) one_minus_y[i] = real(1) - one_minus_y[i];

    Var s = ag::sigmoid(logits);
    // p_t = y*s + (1-y)*(1-s)
    Var p_t = ag::add(ag::mul_const(s, std::move(y)),
                      ag::mul_const(ag::affine_const(s, -1.0, 1.0), std::move(one_minus_y)));
    p_t = ag::clamp(p_t, 1e-7, 1.0 - 1e-7);
    Var focal_w = ag::pow_const(ag::affine_const(p_t, -1.0, 1.0), cfg.gamma);
    Var cell = ag::mul_const(ag::mul(focal_w, ag::log_clamped(p_t)), std::move(weight));
    Var loss = ag::scale(ag::sum(cell), -1.0);
    if (cfg.reduction == Reduction::mean) loss = ag::scale(loss, 1.0 / std::max(1.0, mask_count));
    return loss;
}

double focal_loss_value(const Tensor& logits, const Tensor& targets, const Tensor& mask,
                        const LossConfig& cfg) {
    ag::NoGradGuard ng;
    return static_cast<double>(focal_loss(ag::constant(logits), targets, mask, cfg)->value[0]);
}

Tensor negative_mask(const Tensor& targets, double rho, MaskStrategy strategy, uint64_t seed) {
    if (rho < 0.0 || rho > 1.0) throw ConfigError("rho must lie in [0,1]");
    if (targets.rank() != 2 && targets.rank() != 3)
        throw ShapeError("negative_mask: expects [positions,classes] or [positions,classes,ch]");

    const int positions = targets.dim(0);
    const int classes = targets.dim(1);
    Rng rng(seed);
    Tensor mask(targets.shape());

    std::vector<uint8_t> keep;
    switch (strategy) {
        case MaskStrategy::global:
            break;
        case MaskStrategy::label_wise:
            keep.resize(static_cast<size_t>(classes));
            for (int c = 0; c < classes; ++c) keep[c] = rng.bernoulli(rho);
            break;
        case MaskStrategy::span_wise:
            keep.resize(static_cast<size_t>(positions));
            for (int p = 0; p < positions; ++p) keep[p] = rng.bernoulli(rho);
            break;
    }

    const int channels = targets.rank() == 3 ? targets.dim(2) : 1;
    for (int p = 0; p < positions; ++p) {
        for (int c = 0; c < classes; ++c) {
            for (int ch = 0; ch < channels; ++ch) {
                const int idx = (p * classes + c) * channels + ch;
                if (targets[idx] > real(0.5)) {
                    mask[idx] = real(1);  // positives are always kept
                    continue;
                }
                bool kept = false;
                switch (strategy) {
                    case MaskStrategy::global: kept = rng.bernoulli(rho); break;
                    case MaskStrategy::label_wise: kept = keep[c]; break;
                    case MaskStrategy::span_wise: kept = keep[p]; break;
                }
                mask[idx] = kept ? real(1) : real(0);
            }
        }
    }
    return mask;
}

}  // namespace biner
