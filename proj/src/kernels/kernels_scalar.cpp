#include "qgen/kernels.hpp"

namespace qgen::kernels {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

double sum_scalar(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scal_scalar(double a, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void vadd_scalar(const double* x, const double* y, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void vmul_scalar(const double* x, const double* y, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void matvec_scalar(const double* a, const double* x, double* y, std::size_t m, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) y[i] = dot_scalar(a + i * n, x, n);
}

void matvec_t_acc_scalar(const double* a, const double* x, double* y, std::size_t m,
                         std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) axpy_scalar(x[i], a + i * n, y, n);
}

void ger_acc_scalar(double alpha, const double* x, const double* y, double* a, std::size_t m,
                    std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) axpy_scalar(alpha * x[i], y, a + i * n, n);
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table = {
        "scalar",       dot_scalar,    sum_scalar,          axpy_scalar,    scal_scalar,
        vadd_scalar,    vmul_scalar,   matvec_scalar,       matvec_t_acc_scalar,
        ger_acc_scalar,
    };
    return table;
}

}  // namespace qgen::kernels
