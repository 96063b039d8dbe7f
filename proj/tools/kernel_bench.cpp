// Compares the OpenMP matmul kernel against the serial reference across a
// few shapes: throughput for both, speedup, and a bitwise equality check
// (the parallel kernel partitions output cells, so results must match the
// reference exactly).

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#include "biner/common.hpp"
#include "biner/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace biner;

namespace {

double time_runs(const std::function<void()>& fn, int runs) {
    fn();  // warmup
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < runs; ++i) fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / runs;
}

}  // namespace

int main() {
    struct Shape {
        int m, n, k;
    };
    const Shape shapes[] = {{64, 64, 64},    {256, 256, 256}, {768, 64, 512},
                            {1024, 256, 64}, {512, 512, 512}};

#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (built without OpenMP)\n");
#endif
    std::printf("%-18s %-14s %-14s %-9s %s\n", "m x n x k", "serial GF/s", "parallel GF/s",
                "speedup", "bitwise");

    Rng rng(42);
    for (const auto& s : shapes) {
        std::vector<real> a(static_cast<size_t>(s.m) * s.k);
        std::vector<real> b(static_cast<size_t>(s.k) * s.n);
        std::vector<real> c_ref(static_cast<size_t>(s.m) * s.n);
        std::vector<real> c_par(c_ref.size());
        for (auto& x : a) x = static_cast<real>(rng.uniform(-1.0, 1.0));
        for (auto& x : b) x = static_cast<real>(rng.uniform(-1.0, 1.0));

        const double flops = 2.0 * s.m * s.n * s.k;
        const int runs = std::max(1, static_cast<int>(2e8 / flops));
        const double t_ref = time_runs(
            [&] {
                kernels::reference::matmul(a.data(), false, b.data(), false, c_ref.data(), s.m,
                                           s.n, s.k);
            },
            runs);
        const double t_par = time_runs(
            [&] { kernels::matmul(a.data(), false, b.data(), false, c_par.data(), s.m, s.n, s.k); },
            runs);
        const bool same =
            std::memcmp(c_ref.data(), c_par.data(), c_ref.size() * sizeof(real)) == 0;

        char label[32];
        std::snprintf(label, sizeof(label), "%dx%dx%d", s.m, s.n, s.k);
        std::printf("%-18s %-14.2f %-14.2f %-9.2f %s\n", label, flops / t_ref / 1e9,
                    flops / t_par / 1e9, t_ref / t_par, same ? "ok" : "MISMATCH");
        if (!same) return 1;
    }
    return 0;
}
