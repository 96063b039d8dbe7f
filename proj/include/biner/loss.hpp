#pragma once

#include "biner/autograd.hpp"

namespace biner {

enum class Reduction { sum, mean };
enum class MaskStrategy { global, label_wise, span_wise };

Reduction reduction_from_string(const std::string& s);
MaskStrategy mask_strategy_from_string(const std::string& s);

struct LossConfig {
    double alpha = 0.7;   // positive-class weight; negatives get 1-alpha
    double gamma = 2.0;
    Reduction reduction = Reduction::sum;
    double neg_rate = 0.5;  // rho: probability of keeping a negative cell
    MaskStrategy mask_strategy = MaskStrategy::global;
    double label_smoothing = 0.0;

    void validate() const;
};

/// Focal loss over independent binary cells:
///   L = -alpha_t * (1 - p_t)^gamma * log(p_t),
/// p_t = sigmoid(o) on positives and 1-sigmoid(o) on negatives, clamped
/// away from {0,1} by 1e-7. Cells with mask==0 contribute exactly zero.
/// Reduction is a sum, or a mean over the masked cells.
ag::Var focal_loss(const ag::Var& logits, const Tensor& targets, const Tensor& mask,
                   const LossConfig& cfg);

/// Convenience wrapper returning the loss value without building a graph.
double focal_loss_value(const Tensor& logits, const Tensor& targets, const Tensor& mask,
                        const LossConfig& cfg);

/// Stochastic negative masking: positives are always kept; negatives are
/// kept with probability rho, drawn per cell (global), per class
/// (label_wise) or per position (span_wise). Layout: rank-2 tensors are
/// [positions, classes]; rank-3 are [positions, classes, channels].
/// Deterministic for a fixed seed.
Tensor negative_mask(const Tensor& targets, double rho, MaskStrategy strategy, uint64_t seed);

}  // namespace biner
