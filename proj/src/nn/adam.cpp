#include "histo/nn/adam.hpp"

#include <cmath>

namespace histo::nn {

Adam::Adam(std::vector<Param*> params, AdamParams hp) : params_(std::move(params)), hp_(hp) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Param* p : params_) {
        m_.emplace_back(p->value.numel(), 0.0f);
        v_.emplace_back(p->value.numel(), 0.0f);
    }
}

void Adam::zero_grad() {
    for (Param* p : params_) {
        p->ensure_grad();
        std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0f);
    }
}

void Adam::step() {
    ++t_;
    const double b1 = hp_.beta1, b2 = hp_.beta2;
    // bias-corrected step size folded into the learning rate
    const float lr_t = static_cast<float>(hp_.learning_rate *
                                          std::sqrt(1.0 - std::pow(b2, double(t_))) /
                                          (1.0 - std::pow(b1, double(t_))));
    const float f_b1 = float(b1), f_b2 = float(b2), eps = float(hp_.epsilon);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Param* p = params_[k];
        if (p->grad.numel() != p->value.numel())
            continue; // never received a gradient
        float* w = p->value.ptr();
        const float* g = p->grad.ptr();
        float* m = m_[k].data();
        float* v = v_[k].data();
        const std::size_t n = p->value.numel();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = f_b1 * m[i] + (1.0f - f_b1) * g[i];
            v[i] = f_b2 * v[i] + (1.0f - f_b2) * g[i] * g[i];
            w[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps);
        }
    }
}

} // namespace histo::nn
