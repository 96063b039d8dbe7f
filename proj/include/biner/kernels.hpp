#pragma once

#include "biner/common.hpp"

namespace biner::kernels {

// C[m,n] = op_a(A) * op_b(B), optionally accumulating into C.
//
// The OpenMP version partitions *output cells* across threads and every cell
// accumulates its k-products in ascending k, so the result is bit-identical
// to the serial reference for any thread count.
void matmul(const real* a, bool trans_a, const real* b, bool trans_b, real* c,
            int m, int n, int k, bool accumulate = false);

void add_bias_rows(real* x, const real* bias, int rows, int cols);

// dst[i,j] += a[i] * b[j]
void outer_accum(const real* a, const real* b, real* dst, int m, int n);

namespace reference {
// Naive triple loop, serial. Kept as the oracle for the OpenMP kernels and
// as the baseline side of the kernel benchmark.
void matmul(const real* a, bool trans_a, const real* b, bool trans_b, real* c,
            int m, int n, int k, bool accumulate = false);
}  // namespace reference

}  // namespace biner::kernels
