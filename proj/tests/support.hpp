#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "qgen/gradcheck.hpp"
#include "qgen/rng.hpp"
#include "qgen/tape.hpp"
#include "qgen/tensor.hpp"

namespace qgen::testsupport {

// Draws random parameter points for finite-difference gradient checking.
//
// At step h=1e-5 the central difference carries rounding noise around
// 1e-10 times the loss magnitude, so a coordinate whose true gradient is
// tiny-but-nonzero (attenuated paths, first-order softmax cancellations)
// measures noise rather than the derivative. Draws where any coordinate's
// analytic gradient falls in (0, 1e-6) are therefore skipped. Exact zeros
// stay: structurally unused parameters perturb nothing, so the numeric
// difference is exactly zero as well — and a severed-path bug (analytic zero
// against a nonzero numeric) is still caught.
inline std::vector<std::vector<Tensor>> conditioned_points(
    const std::function<Var(Tape&, const std::vector<Var>&)>& build,
    const std::vector<Tensor>& shapes, double scale, int n_points,
    std::uint64_t seed0 = 1) {
    std::vector<std::vector<Tensor>> points;
    const int max_attempts = 20 * n_points;
    for (int attempt = 0; attempt < max_attempts && static_cast<int>(points.size()) < n_points;
         ++attempt) {
        Rng rng(seed0 + 100 * static_cast<std::uint64_t>(attempt) + 7);
        std::vector<Tensor> point;
        point.reserve(shapes.size());
        for (const Tensor& s : shapes) {
            Tensor c = s;
            for (int i = 0; i < c.size(); ++i) c[i] = rng.normal() * scale;
            point.push_back(std::move(c));
        }
        Tape tape;
        std::vector<Var> leaves;
        leaves.reserve(point.size());
        for (const Tensor& p : point) leaves.push_back(tape.leaf(p));
        Var loss = build(tape, leaves);
        tape.backward(loss);
        bool clean = true;
        for (Var v : leaves) {
            const Tensor& g = tape.grad(v);
            for (int i = 0; i < g.size() && clean; ++i) {
                const double a = std::fabs(g[i]);
                if (a > 0.0 && a < 1e-6) clean = false;
            }
            if (!clean) break;
        }
        if (clean) points.push_back(std::move(point));
    }
    if (static_cast<int>(points.size()) < n_points) {
        throw std::runtime_error(
            "conditioned_points: could not find enough well-conditioned draws");
    }
    return points;
}

// Worst relative gradient error across conditioned points.
inline double max_grad_error(const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                             const std::vector<Tensor>& shapes, double scale, int n_points,
                             std::uint64_t seed0 = 1) {
    double worst = 0.0;
    for (const auto& point : conditioned_points(build, shapes, scale, n_points, seed0)) {
        const GradCheckResult r = grad_check_tape(build, point);
        if (r.max_rel_err > worst) worst = r.max_rel_err;
    }
    return worst;
}

}  // namespace qgen::testsupport
