#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "qgen/tape.hpp"
#include "qgen/tensor.hpp"

namespace qgen {

struct GradCheckResult {
    double max_rel_err = 0.0;
    int worst_tensor = -1;
    int worst_index = -1;
};

// Central-difference check of analytic gradients against a scalar function of
// the input tensors. Relative error per coordinate uses the denominator
// max(|analytic|, |numeric|, 1e-8).
inline GradCheckResult grad_check(const std::function<double(const std::vector<Tensor>&)>& f,
                                  std::vector<Tensor> point,
                                  const std::vector<Tensor>& analytic, double h = 1e-5) {
    GradCheckResult res;
    for (std::size_t t = 0; t < point.size(); ++t) {
        for (int i = 0; i < point[t].size(); ++i) {
            const double orig = point[t][i];
            point[t][i] = orig + h;
            const double fp = f(point);
            point[t][i] = orig - h;
            const double fm = f(point);
            point[t][i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[t][i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_tensor = static_cast<int>(t);
                res.worst_index = i;
            }
        }
    }
    return res;
}

// Convenience wrapper: `build` assembles a scalar loss on a fresh tape from
// leaves created at `point`. Analytic gradients come from one backward pass;
// the same builder serves as the forward function for finite differences.
inline GradCheckResult grad_check_tape(
    const std::function<Var(Tape&, const std::vector<Var>&)>& build,
    const std::vector<Tensor>& point, double h = 1e-5) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(point.size());
    for (const Tensor& t : point) leaves.push_back(tape.leaf(t));
    Var loss = build(tape, leaves);
    tape.backward(loss);
    std::vector<Tensor> analytic;
    analytic.reserve(point.size());
    for (Var v : leaves) analytic.push_back(tape.grad(v));

    auto f = [&build](const std::vector<Tensor>& xs) {
        Tape t;
        std::vector<Var> ls;
        ls.reserve(xs.size());
        for (const Tensor& x : xs) ls.push_back(t.leaf(x));
        return t.val(build(t, ls)).scalar_value();
    };
    return grad_check(f, point, analytic, h);
}

}  // namespace qgen
