// Times each OpenMP kernel against its serial reference and verifies the two
// produce bit-identical output while doing so. Run with OMP_NUM_THREADS set to
// taste; on a single hardware thread the two columns should roughly match.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "sdmae/kernels.hpp"
#include "sdmae/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace sdmae;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int iters) {
    fn();  // warm-up
    const auto t0 = Clock::now();
    for (int i = 0; i < iters; ++i) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / iters;
}

std::vector<double> random_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

struct Row {
    std::string name;
    double ref_ms;
    double omp_ms;
    bool exact;
};

}  // namespace

int main(int argc, char** argv) {
    int iters = 20;
    if (argc > 1) iters = std::max(1, std::atoi(argv[1]));

#ifdef _OPENMP
    std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
    std::printf("openmp: disabled at compile time\n");
#endif

    Rng rng(42);
    std::vector<Row> rows;

    {
        const int m = 256, k = 256, n = 256;
        auto a = random_vec(static_cast<size_t>(m) * k, rng);
        auto b = random_vec(static_cast<size_t>(k) * n, rng);
        std::vector<double> c1(static_cast<size_t>(m) * n), c2(c1.size());
        const double t_ref = time_ms(
            [&] { kernels::ref::matmul(a.data(), b.data(), c1.data(), m, k, n, false, false, false); },
            iters);
        const double t_omp = time_ms(
            [&] { kernels::matmul(a.data(), b.data(), c2.data(), m, k, n, false, false, false); },
            iters);
        rows.push_back({"matmul 256^3 NN", t_ref, t_omp, c1 == c2});

        const double t_ref_t = time_ms(
            [&] { kernels::ref::matmul(a.data(), b.data(), c1.data(), m, k, n, false, true, false); },
            iters);
        const double t_omp_t = time_ms(
            [&] { kernels::matmul(a.data(), b.data(), c2.data(), m, k, n, false, true, false); },
            iters);
        rows.push_back({"matmul 256^3 NT", t_ref_t, t_omp_t, c1 == c2});
    }

    {
        const int r = 4096, c = 256;
        auto x = random_vec(static_cast<size_t>(r) * c, rng);
        auto gamma = random_vec(c, rng);
        auto beta = random_vec(c, rng);
        std::vector<double> y1(x.size()), y2(x.size()), xh1(x.size()), xh2(x.size());
        std::vector<double> is1(r), is2(r);
        const double t_ref = time_ms(
            [&] {
                kernels::ref::layer_norm_forward(x.data(), gamma.data(), beta.data(), y1.data(),
                                                 xh1.data(), is1.data(), r, c, 1e-6);
            },
            iters);
        const double t_omp = time_ms(
            [&] {
                kernels::layer_norm_forward(x.data(), gamma.data(), beta.data(), y2.data(),
                                            xh2.data(), is2.data(), r, c, 1e-6);
            },
            iters);
        rows.push_back({"layer_norm 4096x256 fwd", t_ref, t_omp, y1 == y2 && xh1 == xh2});
    }

    {
        const int r = 4096, c = 256;
        auto x = random_vec(static_cast<size_t>(r) * c, rng);
        std::vector<double> y1(x.size()), y2(x.size());
        const double t_ref =
            time_ms([&] { kernels::ref::softmax_rows_forward(x.data(), y1.data(), r, c); }, iters);
        const double t_omp =
            time_ms([&] { kernels::softmax_rows_forward(x.data(), y2.data(), r, c); }, iters);
        rows.push_back({"softmax 4096x256 fwd", t_ref, t_omp, y1 == y2});
    }

    {
        const size_t n = 1 << 22;
        auto x = random_vec(n, rng);
        std::vector<double> y1(n), y2(n);
        const double t_ref =
            time_ms([&] { kernels::ref::gelu_forward(x.data(), y1.data(), n); }, iters);
        const double t_omp = time_ms([&] { kernels::gelu_forward(x.data(), y2.data(), n); }, iters);
        rows.push_back({"gelu 4M fwd", t_ref, t_omp, y1 == y2});
    }

    std::printf("%-26s %12s %12s %9s %7s\n", "kernel", "serial (ms)", "openmp (ms)", "speedup",
                "exact");
    bool all_exact = true;
    for (const auto& r : rows) {
        std::printf("%-26s %12.3f %12.3f %8.2fx %7s\n", r.name.c_str(), r.ref_ms, r.omp_ms,
                    r.ref_ms / r.omp_ms, r.exact ? "yes" : "NO");
        all_exact = all_exact && r.exact;
    }
    if (!all_exact) {
        std::fprintf(stderr, "error: openmp kernel diverged from serial reference\n");
        return 1;
    }
    return 0;
}
