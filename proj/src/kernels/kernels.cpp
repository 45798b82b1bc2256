#include "qgen/kernels.hpp"

#include <cstdlib>
#include <stdexcept>

namespace qgen::kernels {

const KernelTable* avx2_table_impl();

const KernelTable* avx2_table() { return avx2_table_impl(); }

namespace {
const KernelTable* g_active = nullptr;

const KernelTable* pick_auto() {
    if (const KernelTable* t = avx2_table()) return t;
    return &scalar_table();
}
}  // namespace

const KernelTable& active() {
    if (!g_active) g_active = pick_auto();
    return *g_active;
}

void select(const std::string& name) {
    if (name == "auto") {
        g_active = pick_auto();
    } else if (name == "scalar") {
        g_active = &scalar_table();
    } else if (name == "avx2") {
        const KernelTable* t = avx2_table();
        if (!t) throw std::runtime_error("kernels: avx2 not available on this machine");
        g_active = t;
    } else {
        throw std::runtime_error("kernels: unknown implementation '" + name + "'");
    }
}

void select_from_env() {
    if (const char* v = std::getenv("QGEN_KERNELS")) select(v);
}

}  // namespace qgen::kernels
