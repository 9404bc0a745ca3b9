#include "lifelora/mat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lifelora {

namespace {

// Below this many multiply-adds the OpenMP fork costs more than it saves.
constexpr long kParallelFlopThreshold = 1 << 18;

void check_matmul_shapes(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + ")");
    }
}

void matmul_rows(const Mat& a, const Mat& b, Mat& out, int row_begin, int row_end) {
    const int n = b.cols();
    const int inner = a.cols();
    for (int i = row_begin; i < row_end; ++i) {
        const double* arow = a.data() + static_cast<std::size_t>(i) * inner;
        double* orow = out.data() + static_cast<std::size_t>(i) * n;
        for (int k = 0; k < inner; ++k) {
            const double aik = arow[k];
            const double* brow = b.data() + static_cast<std::size_t>(k) * n;
            for (int j = 0; j < n; ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
}

} // namespace

Mat::Mat(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {
    if (rows < 0 || cols < 0) throw UsageError("Mat: negative dimensions");
}

Mat::Mat(int rows, int cols, std::vector<double> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows < 0 || cols < 0) throw UsageError("Mat: negative dimensions");
    if (data_.size() != static_cast<std::size_t>(rows) * cols) {
        throw UsageError("Mat: data length does not match rows*cols");
    }
}

Mat Mat::identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const int r = static_cast<int>(rows.size());
    const int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
    Mat m(r, c);
    int i = 0;
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != c) throw UsageError("Mat::from_rows: ragged rows");
        int j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

bool Mat::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Mat matmul(const Mat& a, const Mat& b) {
    check_matmul_shapes(a, b);
    Mat out(a.rows(), b.cols());
    const long flops = static_cast<long>(a.rows()) * a.cols() * b.cols();
#ifdef _OPENMP
    if (flops >= kParallelFlopThreshold) {
        // Rows are independent; each output element still accumulates in
        // ascending k, so the result is bitwise equal to the serial kernel.
#pragma omp parallel for schedule(static)
        for (int i = 0; i < a.rows(); ++i) {
            matmul_rows(a, b, out, i, i + 1);
        }
        return out;
    }
#endif
    (void)flops;
    matmul_rows(a, b, out, 0, a.rows());
    return out;
}

Mat matmul_serial(const Mat& a, const Mat& b) {
    check_matmul_shapes(a, b);
    Mat out(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols(); ++k) {
                acc += a(i, k) * b(k, j);
            }
            out(i, j) = acc;
        }
    }
    return out;
}

double frobenius_norm(const Mat& m) {
    double acc = 0.0;
    const double* p = m.data();
    for (int i = 0; i < m.size(); ++i) acc += p[i] * p[i];
    return std::sqrt(acc);
}

double trace_product(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) throw ShapeError("trace_product: shape mismatch");
    double acc = 0.0;
    const double* pa = a.data();
    const double* pb = b.data();
    for (int i = 0; i < a.size(); ++i) acc += pa[i] * pb[i];
    return acc;
}

double dot(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw ShapeError("dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
    return acc;
}

double norm2(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw ShapeError("cosine: length mismatch");
    const double nu = norm2(u);
    const double nv = norm2(v);
    if (nu < 1e-12 || nv < 1e-12) return 0.0; // degenerate projection rule
    double c = dot(u, v) / (nu * nv);
    return std::clamp(c, -1.0, 1.0);
}

Mat add(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
    Mat out = a;
    double* po = out.data();
    const double* pb = b.data();
    for (int i = 0; i < out.size(); ++i) po[i] += pb[i];
    return out;
}

Mat sub(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) throw ShapeError("sub: shape mismatch");
    Mat out = a;
    double* po = out.data();
    const double* pb = b.data();
    for (int i = 0; i < out.size(); ++i) po[i] -= pb[i];
    return out;
}

Mat scale(const Mat& a, double alpha) {
    Mat out = a;
    double* po = out.data();
    for (int i = 0; i < out.size(); ++i) po[i] *= alpha;
    return out;
}

Mat hadamard(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) throw ShapeError("hadamard: shape mismatch");
    Mat out = a;
    double* po = out.data();
    const double* pb = b.data();
    for (int i = 0; i < out.size(); ++i) po[i] *= pb[i];
    return out;
}

Mat transpose(const Mat& a) {
    Mat out(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    }
    return out;
}

std::vector<double> mat_vec(const Mat& a, std::span<const double> v) {
    if (static_cast<std::size_t>(a.cols()) != v.size()) throw ShapeError("mat_vec: shape mismatch");
    std::vector<double> out(a.rows(), 0.0);
    for (int i = 0; i < a.rows(); ++i) {
        double acc = 0.0;
        for (int j = 0; j < a.cols(); ++j) acc += a(i, j) * v[j];
        out[i] = acc;
    }
    return out;
}

std::vector<double> vec_mat(std::span<const double> v, const Mat& a) {
    if (static_cast<std::size_t>(a.rows()) != v.size()) throw ShapeError("vec_mat: shape mismatch");
    std::vector<double> out(a.cols(), 0.0);
    for (int i = 0; i < a.rows(); ++i) {
        const double vi = v[i];
        for (int j = 0; j < a.cols(); ++j) out[j] += vi * a(i, j);
    }
    return out;
}

namespace {

constexpr int kJacobiSweepCap = 100;
constexpr double kJacobiTol = 1e-12;

// One-sided Jacobi on a tall matrix (m >= n). Rotates column pairs of the
// working copy until all pairs are numerically orthogonal, accumulating the
// right singular vectors in v.
struct JacobiCore {
    Mat w;       // m x n working copy, columns converge to u_j * s_j
    Mat v;       // n x n accumulated right singular vectors (columns)
    int sweeps = 0;
};

JacobiCore one_sided_jacobi(const Mat& x) {
    const int m = x.rows();
    const int n = x.cols();
    JacobiCore core{x, Mat::identity(n), 0};
    Mat& w = core.w;
    Mat& v = core.v;

    for (int sweep = 0; sweep < kJacobiSweepCap; ++sweep) {
        core.sweeps = sweep + 1;
        bool rotated = false;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (int i = 0; i < m; ++i) {
                    const double wp = w(i, p);
                    const double wq = w(i, q);
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) continue;
                rotated = true;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;

                for (int i = 0; i < m; ++i) {
                    const double wp = w(i, p);
                    const double wq = w(i, q);
                    w(i, p) = c * wp - s * wq;
                    w(i, q) = s * wp + c * wq;
                }
                for (int i = 0; i < n; ++i) {
                    const double vp = v(i, p);
                    const double vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) return core;
    }
    throw NumericError("svd: one-sided Jacobi did not converge within " +
                       std::to_string(kJacobiSweepCap) + " sweeps");
}

// Fill u columns for zero singular values with an orthonormal completion,
// Gram-Schmidt over standard basis vectors in index order.
void complete_u_column(Mat& u, int col, int m) {
    for (int cand = 0; cand < m; ++cand) {
        std::vector<double> e(m, 0.0);
        e[cand] = 1.0;
        for (int j = 0; j < u.cols(); ++j) {
            if (j == col) continue;
            double proj = 0.0;
            for (int i = 0; i < m; ++i) proj += e[i] * u(i, j);
            if (proj != 0.0) {
                for (int i = 0; i < m; ++i) e[i] -= proj * u(i, j);
            }
        }
        const double nrm = norm2(e);
        if (nrm > 1e-6) {
            for (int i = 0; i < m; ++i) u(i, col) = e[i] / nrm;
            return;
        }
    }
    throw NumericError("svd: failed to complete orthonormal basis for u");
}

SvdResult svd_tall(const Mat& x) {
    const int m = x.rows();
    const int n = x.cols();
    JacobiCore core = one_sided_jacobi(x);

    std::vector<double> sv(n);
    for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) acc += core.w(i, j) * core.w(i, j);
        sv[j] = std::sqrt(acc);
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return sv[a] > sv[b]; });

    SvdResult r;
    r.u = Mat(m, n);
    r.s.resize(n);
    r.vt = Mat(n, n);
    for (int j = 0; j < n; ++j) {
        const int src = order[j];
        r.s[j] = sv[src];
        if (sv[src] > 0.0) {
            const double inv = 1.0 / sv[src];
            for (int i = 0; i < m; ++i) r.u(i, j) = core.w(i, src) * inv;
        }
        for (int i = 0; i < n; ++i) r.vt(j, i) = core.v(i, src);
    }
    for (int j = 0; j < n; ++j) {
        if (r.s[j] == 0.0) complete_u_column(r.u, j, m);
    }
    return r;
}

void apply_sign_convention(SvdResult& r) {
    const int k = static_cast<int>(r.s.size());
    for (int j = 0; j < k; ++j) {
        double lead = 0.0;
        for (int i = 0; i < r.vt.cols(); ++i) {
            if (r.vt(j, i) != 0.0) {
                lead = r.vt(j, i);
                break;
            }
        }
        if (lead < 0.0) {
            for (int i = 0; i < r.vt.cols(); ++i) r.vt(j, i) = -r.vt(j, i);
            for (int i = 0; i < r.u.rows(); ++i) r.u(i, j) = -r.u(i, j);
        }
    }
}

} // namespace

SvdResult svd(const Mat& x) {
    if (x.rows() < 1 || x.cols() < 1) throw UsageError("svd: empty matrix");
    if (!x.all_finite()) throw UsageError("svd: non-finite entries");

    SvdResult r;
    if (x.rows() >= x.cols()) {
        r = svd_tall(x);
    } else {
        SvdResult t = svd_tall(transpose(x));
        r.u = transpose(t.vt);
        r.s = std::move(t.s);
        r.vt = transpose(t.u);
    }
    apply_sign_convention(r);
    return r;
}

} // namespace lifelora
