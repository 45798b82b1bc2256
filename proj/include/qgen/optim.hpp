#pragma once

#include <cmath>
#include <vector>

#include "qgen/kernels.hpp"
#include "qgen/tensor.hpp"

namespace qgen {

inline double global_grad_norm(const std::vector<Tensor>& grads) {
    double sq = 0.0;
    for (const Tensor& g : grads) sq += kernels::active().dot(g.data(), g.data(), g.size());
    return std::sqrt(sq);
}

// Scales gradients in place so their global norm is at most `clip`.
// Non-positive clip disables clipping. Returns the pre-clip norm.
inline double clip_global_norm(std::vector<Tensor>& grads, double clip) {
    const double norm = global_grad_norm(grads);
    if (clip > 0.0 && norm > clip) {
        const double s = clip / norm;
        for (Tensor& g : grads) kernels::active().scal(s, g.data(), g.size());
    }
    return norm;
}

inline void sgd_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                     double lr) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        kernels::active().axpy(-lr, grads[i].data(), params[i]->data(), params[i]->size());
    }
}

}  // namespace qgen
