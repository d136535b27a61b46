// Timing comparison of the OpenMP kernels against their serial references
// on the shapes the networks actually use. Also reports the largest
// elementwise deviation between the two paths.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rl4seg/kernels.hpp"
#include "rl4seg/rng.hpp"

using namespace rl4seg;

namespace {

std::vector<float> random_vec(size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = float(rng.uniform(-1.0, 1.0));
    return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm-up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

double max_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
    return m;
}

void report(const std::string& name, double serial_ms, double omp_ms, double diff,
            double mflop) {
    std::printf("%-26s %9.3f ms %9.3f ms  %6.2fx  %8.1f Mflop/s  max|d|=%.2e\n",
                name.c_str(), serial_ms, omp_ms, serial_ms / omp_ms,
                mflop / omp_ms * 1e3 / 1e6, diff);
}

}  // namespace

int main(int argc, char** argv) {
    int reps = 20;
    if (argc > 1) reps = std::max(1, std::atoi(argv[1]));
#ifdef _OPENMP
    std::printf("threads: %d, reps: %d\n", omp_get_max_threads(), reps);
#else
    std::printf("threads: 1 (no OpenMP), reps: %d\n", reps);
#endif
    std::printf("%-26s %12s %12s %8s %15s\n", "kernel", "serial", "omp", "speedup", "rate");

    // conv shapes from the 64x64 width-8 encoder-decoder
    struct ConvCase {
        int cin, h, w, cout, k, pad;
    };
    for (const ConvCase c : {ConvCase{8, 64, 64, 8, 3, 1}, ConvCase{16, 32, 32, 16, 3, 1},
                             ConvCase{24, 64, 64, 8, 3, 1}}) {
        const int oh = c.h + 2 * c.pad - c.k + 1, ow = c.w + 2 * c.pad - c.k + 1;
        const auto x = random_vec(size_t(c.cin) * c.h * c.w, 1);
        const auto wt = random_vec(size_t(c.cout) * c.cin * c.k * c.k, 2);
        const auto b = random_vec(size_t(c.cout), 3);
        std::vector<float> y_s(size_t(c.cout) * oh * ow), y_p(y_s.size());
        const double flops = 2.0 * c.cout * oh * ow * c.cin * c.k * c.k;

        const double ts = time_ms(
            [&] {
                kernels::serial::conv2d_forward(x.data(), c.cin, c.h, c.w, wt.data(),
                                                c.cout, c.k, c.k, c.pad, b.data(),
                                                y_s.data());
            },
            reps);
        const double tp = time_ms(
            [&] {
                kernels::conv2d_forward(x.data(), c.cin, c.h, c.w, wt.data(), c.cout, c.k,
                                        c.k, c.pad, b.data(), y_p.data());
            },
            reps);
        char name[64];
        std::snprintf(name, sizeof name, "conv_fwd %dx%dx%d->%d", c.cin, c.h, c.w, c.cout);
        report(name, ts, tp, max_diff(y_s, y_p), flops / 1e6);

        // input gradient
        const auto dy = random_vec(y_s.size(), 4);
        std::vector<float> dx_s(x.size(), 0.f), dx_p(x.size(), 0.f);
        const double ts2 = time_ms(
            [&] {
                std::fill(dx_s.begin(), dx_s.end(), 0.f);
                kernels::serial::conv2d_backward_input(dy.data(), c.cout, wt.data(), c.cin,
                                                       c.k, c.k, c.pad, c.h, c.w,
                                                       dx_s.data());
            },
            reps);
        const double tp2 = time_ms(
            [&] {
                std::fill(dx_p.begin(), dx_p.end(), 0.f);
                kernels::conv2d_backward_input(dy.data(), c.cout, wt.data(), c.cin, c.k,
                                               c.k, c.pad, c.h, c.w, dx_p.data());
            },
            reps);
        std::snprintf(name, sizeof name, "conv_bwd_in %dx%dx%d", c.cin, c.h, c.w);
        report(name, ts2, tp2, max_diff(dx_s, dx_p), flops / 1e6);

        // parameter gradient
        std::vector<float> dw_s(wt.size(), 0.f), dw_p(wt.size(), 0.f);
        std::vector<float> db_s(b.size(), 0.f), db_p(b.size(), 0.f);
        const double ts3 = time_ms(
            [&] {
                std::fill(dw_s.begin(), dw_s.end(), 0.f);
                std::fill(db_s.begin(), db_s.end(), 0.f);
                kernels::serial::conv2d_backward_params(dy.data(), c.cout, x.data(), c.cin,
                                                        c.h, c.w, c.k, c.k, c.pad,
                                                        dw_s.data(), db_s.data());
            },
            reps);
        const double tp3 = time_ms(
            [&] {
                std::fill(dw_p.begin(), dw_p.end(), 0.f);
                std::fill(db_p.begin(), db_p.end(), 0.f);
                kernels::conv2d_backward_params(dy.data(), c.cout, x.data(), c.cin, c.h,
                                                c.w, c.k, c.k, c.pad, dw_p.data(),
                                                db_p.data());
            },
            reps);
        std::snprintf(name, sizeof name, "conv_bwd_par %dx%dx%d", c.cin, c.h, c.w);
        report(name, ts3, tp3, max_diff(dw_s, dw_p), flops / 1e6);
    }

    for (const int n : {128, 256}) {
        const auto a = random_vec(size_t(n) * n, 10);
        const auto b2 = random_vec(size_t(n) * n, 11);
        std::vector<float> c_s(size_t(n) * n), c_p(c_s.size());
        const double flops = 2.0 * n * double(n) * n;
        const double ts = time_ms(
            [&] {
                kernels::serial::gemm(a.data(), b2.data(), c_s.data(), n, n, n, false,
                                      false, false);
            },
            reps);
        const double tp = time_ms(
            [&] {
                kernels::gemm(a.data(), b2.data(), c_p.data(), n, n, n, false, false, false);
            },
            reps);
        char name[64];
        std::snprintf(name, sizeof name, "gemm %dx%d", n, n);
        report(name, ts, tp, max_diff(c_s, c_p), flops / 1e6);
    }
    return 0;
}
