// Compares the OpenMP matmul kernel against the serial reference and checks
// they agree bitwise at each size.

#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "lifelora/mat.hpp"
#include "lifelora/rng.hpp"

using namespace lifelora;

namespace {

Mat random_mat(Rng& rng, int r, int c) {
    Mat m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
    return m;
}

template <typename F>
double time_best_of(F&& fn, int reps) {
    double best = 1e100;
    for (int r = 0; r < reps; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

} // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP: compiled out\n");
#endif
    std::printf("%8s %14s %14s %9s %8s\n", "n", "serial (s)", "parallel (s)", "speedup", "match");

    Rng rng(20240501);
    for (int n : {64, 128, 256, 384, 512, 768}) {
        Mat a = random_mat(rng, n, n);
        Mat b = random_mat(rng, n, n);
        Mat out_p, out_s;
        const int reps = n <= 256 ? 5 : 3;
        const double ts = time_best_of([&] { out_s = matmul_serial(a, b); }, reps);
        const double tp = time_best_of([&] { out_p = matmul(a, b); }, reps);
        std::printf("%8d %14.6f %14.6f %8.2fx %8s\n", n, ts, tp, ts / tp,
                    out_p == out_s ? "yes" : "NO");
        if (!(out_p == out_s)) return 1;
    }
    return 0;
}
