// Compares the OpenMP kernels against their serial reference implementations:
// wall-clock speedup plus a bitwise equality check (the parallel kernels must
// never change a single bit of the result).

#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "eeml/kernels.hpp"
#include "eeml/mask.hpp"
#include "eeml/matrix.hpp"

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
double best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = Clock::now();
        fn();
        const double s = std::chrono::duration<double>(Clock::now() - t0).count();
        if (s < best) best = s;
    }
    return best;
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
    std::printf("openmp: not enabled\n");
#endif
    std::printf("%-28s %12s %12s %8s %10s\n", "kernel", "serial_s", "parallel_s", "speedup",
                "bit_equal");

    eeml::Prng rng(7);
    const struct {
        std::size_t m, n, p;
    } shapes[] = {{256, 256, 256}, {512, 512, 512}, {2048, 64, 2048}, {2048, 2048, 64}};

    for (const auto& s : shapes) {
        const eeml::Matrix a = eeml::uniform_init(rng, s.m, s.n, -1.0, 1.0);
        const eeml::Matrix b = eeml::uniform_init(rng, s.n, s.p, -1.0, 1.0);
        eeml::Matrix serial, parallel;
        const double ts = best_of(3, [&] { serial = eeml::serial_ref::matmul(a, b); });
        const double tp = best_of(3, [&] { parallel = eeml::matmul(a, b); });
        const bool equal = eeml::approx_equal(serial, parallel, 0.0).max_abs_diff == 0.0;
        char name[64];
        std::snprintf(name, sizeof(name), "matmul %zux%zux%zu", s.m, s.n, s.p);
        std::printf("%-28s %12.4f %12.4f %8.2fx %10s\n", name, ts, tp, ts / tp,
                    equal ? "yes" : "NO");
    }

    {
        const std::size_t n = 2048;
        const eeml::Matrix scores = eeml::uniform_init(rng, n, n, -5.0, 5.0);
        const eeml::AttentionMask mask = eeml::build_causal_mask(n);
        eeml::Matrix serial, parallel;
        const double ts = best_of(3, [&] { serial = eeml::serial_ref::softmax_rows_masked(scores, mask); });
        const double tp = best_of(3, [&] { parallel = eeml::softmax_rows_masked(scores, mask); });
        const bool equal = eeml::approx_equal(serial, parallel, 0.0).max_abs_diff == 0.0;
        std::printf("%-28s %12.4f %12.4f %8.2fx %10s\n", "softmax_rows_masked 2048", ts, tp,
                    ts / tp, equal ? "yes" : "NO");
    }

    {
        const eeml::Matrix x = eeml::uniform_init(rng, 2048, 1024, -3.0, 3.0);
        eeml::Matrix serial, parallel;
        const double ts = best_of(3, [&] { serial = eeml::serial_ref::gelu(x); });
        const double tp = best_of(3, [&] { parallel = eeml::gelu(x); });
        const bool equal = eeml::approx_equal(serial, parallel, 0.0).max_abs_diff == 0.0;
        std::printf("%-28s %12.4f %12.4f %8.2fx %10s\n", "gelu 2048x1024", ts, tp, ts / tp,
                    equal ? "yes" : "NO");
    }
    return 0;
}
