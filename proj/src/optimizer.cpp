#include "biner/optimizer.hpp"

#include <cmath>

namespace biner {

void AdamW::step(const std::vector<ag::Var>& params, const std::vector<double>& lr,
                 const std::vector<double>& weight_decay) {
    if (lr.size() != params.size() || weight_decay.size() != params.size())
        throw ConfigError("AdamW: lr/decay lists must match the parameter list");
    if (m_.empty()) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const auto& p : params) {
            m_.push_back(Tensor::zeros(p->value.shape()));
            v_.push_back(Tensor::zeros(p->value.shape()));
        }
    }
    if (m_.size() != params.size()) throw ConfigError("AdamW: parameter list changed size");

    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        ag::Node& p = *params[i];
        p.ensure_grad();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        const int n = p.value.numel();
        for (int j = 0; j < n; ++j) {
            const double g = static_cast<double>(p.grad[j]);
            const double mj = beta1_ * m[j] + (1.0 - beta1_) * g;
            const double vj = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            m[j] = static_cast<real>(mj);
            v[j] = static_cast<real>(vj);
            const double m_hat = mj / bc1;
            const double v_hat = vj / bc2;
            // Decoupled decay: applied to the weight, never to the moments.
            const double update = m_hat / (std::sqrt(v_hat) + eps_) + weight_decay[i] * p.value[j];
            p.value[j] = static_cast<real>(p.value[j] - lr[i] * update);
        }
    }
}

void AdamW::step(const std::vector<ag::Var>& params, double lr, double weight_decay) {
    step(params, std::vector<double>(params.size(), lr),
         std::vector<double>(params.size(), weight_decay));
}

double cosine_warmup_lr(long step, long total_steps, double warmup_ratio, double lr_max) {
    if (total_steps <= 0) throw ConfigError("total_steps must be positive");
    if (warmup_ratio < 0.0 || warmup_ratio >= 1.0) throw ConfigError("warmup_ratio must lie in [0,1)");
    const long warmup = warmup_ratio > 0.0
                            ? std::max<long>(1, static_cast<long>(warmup_ratio * total_steps))
                            : 0;
    if (step < warmup) return lr_max * static_cast<double>(step + 1) / static_cast<double>(warmup);
    const long span = std::max<long>(1, total_steps - 1 - warmup);
    const double progress = static_cast<double>(step - warmup) / static_cast<double>(span);
    return lr_max * 0.5 * (1.0 + std::cos(M_PI * std::min(1.0, progress)));
}

double clip_global_norm(const std::vector<ag::Var>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        p->ensure_grad();
        for (int j = 0; j < p->grad.numel(); ++j) {
            const double g = static_cast<double>(p->grad[j]);
            sq += g * g;
        }
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const real scale = static_cast<real>(max_norm / norm);
        for (const auto& p : params)
            for (int j = 0; j < p->grad.numel(); ++j) p->grad[j] *= scale;
    }
    return norm;
}

}  // namespace biner
