#pragma once

#include <cstddef>
#include <string>

namespace qgen::kernels {

// Double-precision kernels behind the tensor ops. Matrices are row-major.
// Two implementations exist: a scalar reference and an AVX2 variant compiled
// on x86-64. The active table is picked at startup from CPU features and can
// be overridden with select() or the QGEN_KERNELS environment variable.
struct KernelTable {
    const char* name;

    double (*dot)(const double* x, const double* y, std::size_t n);
    double (*sum)(const double* x, std::size_t n);
    // y += a * x
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    // x *= a
    void (*scal)(double a, double* x, std::size_t n);
    void (*vadd)(const double* x, const double* y, double* out, std::size_t n);
    void (*vmul)(const double* x, const double* y, double* out, std::size_t n);
    // y = A x, A is m x n
    void (*matvec)(const double* a, const double* x, double* y, std::size_t m, std::size_t n);
    // y += A^T x, A is m x n, x has m entries, y has n
    void (*matvec_t_acc)(const double* a, const double* x, double* y, std::size_t m, std::size_t n);
    // A += alpha * x y^T, A is m x n
    void (*ger_acc)(double alpha, const double* x, const double* y, double* a, std::size_t m,
                    std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the build or the running CPU has no AVX2+FMA.
const KernelTable* avx2_table();

const KernelTable& active();

// name: "auto", "scalar" or "avx2". Throws std::runtime_error for unknown or
// unavailable implementations.
void select(const std::string& name);

// Reads QGEN_KERNELS if set, otherwise keeps the automatic choice.
void select_from_env();

}  // namespace qgen::kernels
