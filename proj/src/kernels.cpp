#include "biner/kernels.hpp"

#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace biner::kernels {

namespace {
// Below this many multiply-adds the parallel fork costs more than it saves.
constexpr long kParallelCutoff = 1 << 16;
}  // namespace

void matmul(const real* a, bool trans_a, const real* b, bool trans_b, real* c,
            int m, int n, int k, bool accumulate) {
    const long work = static_cast<long>(m) * n * k;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
    for (int i = 0; i < m; ++i) {
        real* crow = c + static_cast<size_t>(i) * n;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) crow[j] = real(0);
        }
        if (!trans_b) {
            // Accumulate along k with j innermost; per output cell the
            // k-order is ascending, matching the reference exactly.
            for (int p = 0; p < k; ++p) {
                const real aip = trans_a ? a[static_cast<size_t>(p) * m + i]
                                         : a[static_cast<size_t>(i) * k + p];
                const real* brow = b + static_cast<size_t>(p) * n;
                for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
            }
        } else {
            for (int j = 0; j < n; ++j) {
                const real* brow = b + static_cast<size_t>(j) * k;
                real acc = crow[j];
                if (!trans_a) {
                    const real* arow = a + static_cast<size_t>(i) * k;
                    for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
                } else {
                    for (int p = 0; p < k; ++p) acc += a[static_cast<size_t>(p) * m + i] * brow[p];
                }
                crow[j] = acc;
            }
        }
    }
}

void add_bias_rows(real* x, const real* bias, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        real* row = x + static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) row[j] += bias[j];
    }
}

void outer_accum(const real* a, const real* b, real* dst, int m, int n) {
    for (int i = 0; i < m; ++i) {
        real* row = dst + static_cast<size_t>(i) * n;
        const real ai = a[i];
        for (int j = 0; j < n; ++j) row[j] += ai * b[j];
    }
}

namespace reference {

void matmul(const real* a, bool trans_a, const real* b, bool trans_b, real* c,
            int m, int n, int k, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            real acc = accumulate ? c[static_cast<size_t>(i) * n + j] : real(0);
            for (int p = 0; p < k; ++p) {
                const real av = trans_a ? a[static_cast<size_t>(p) * m + i]
                                        : a[static_cast<size_t>(i) * k + p];
                const real bv = trans_b ? b[static_cast<size_t>(j) * k + p]
                                        : b[static_cast<size_t>(p) * n + j];
                acc += av * bv;
            }
            c[static_cast<size_t>(i) * n + j] = acc;
        }
    }
}

}  // namespace reference

}  // namespace biner::kernels
