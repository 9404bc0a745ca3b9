#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lifelora/mat.hpp"
#include "lifelora/rng.hpp"
#include "oracles.hpp"

using namespace lifelora;

TEST_CASE("matmul identity") {
    Rng rng(1);
    Mat m = oracle::random_mat(rng, 3, 5);
    Mat out = matmul(Mat::identity(3), m);
    CHECK(out == m);
}

TEST_CASE("matmul hand case") {
    Mat a = Mat::from_rows({{1, 2}, {3, 4}});
    Mat b = Mat::from_rows({{0}, {1}});
    Mat c = matmul(a, b);
    CHECK(c(0, 0) == 2.0);
    CHECK(c(1, 0) == 4.0);
}

TEST_CASE("matmul vs naive oracle") {
    Rng rng(2);
    Mat a = oracle::random_mat(rng, 5, 4);
    Mat b = oracle::random_mat(rng, 4, 3);
    Mat got = matmul(a, b);
    Mat want = oracle::naive_matmul(a, b);
    for (int i = 0; i < got.rows(); ++i)
        for (int j = 0; j < got.cols(); ++j) CHECK(std::abs(got(i, j) - want(i, j)) <= 1e-12);
}

TEST_CASE("matmul parallel kernel bitwise equals serial reference") {
    Rng rng(3);
    for (auto [m, k, n] : {std::tuple{17, 9, 23}, std::tuple{64, 64, 64}, std::tuple{128, 200, 96}}) {
        Mat a = oracle::random_mat(rng, m, k);
        Mat b = oracle::random_mat(rng, k, n);
        CHECK(matmul(a, b) == matmul_serial(a, b));
    }
}

TEST_CASE("matmul shape error") {
    Mat a(2, 3), b(2, 3);
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("svd identity") {
    SvdResult r = svd(Mat::identity(3));
    REQUIRE(r.s.size() == 3);
    for (double s : r.s) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("svd diagonal with zero") {
    SvdResult r = svd(Mat::from_rows({{3, 0}, {0, 0}}));
    REQUIRE(r.s.size() == 2);
    CHECK(r.s[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(r.s[1] == doctest::Approx(0.0).epsilon(1e-12));
    // u must still be orthonormal despite the zero singular value
    double d01 = r.u(0, 0) * r.u(0, 1) + r.u(1, 0) * r.u(1, 1);
    CHECK(std::abs(d01) < 1e-10);
}

static void check_svd_contract(const Mat& x) {
    SvdResult r = svd(x);
    const int k = static_cast<int>(r.s.size());
    REQUIRE(k == std::min(x.rows(), x.cols()));

    for (int j = 0; j + 1 < k; ++j) CHECK(r.s[j] >= r.s[j + 1]);
    for (int j = 0; j < k; ++j) CHECK(r.s[j] >= 0.0);

    // column orthonormality of u, row orthonormality of vt
    for (int a = 0; a < k; ++a)
        for (int b = a; b < k; ++b) {
            double du = 0.0, dv = 0.0;
            for (int i = 0; i < x.rows(); ++i) du += r.u(i, a) * r.u(i, b);
            for (int i = 0; i < x.cols(); ++i) dv += r.vt(a, i) * r.vt(b, i);
            const double want = (a == b) ? 1.0 : 0.0;
            CHECK(std::abs(du - want) < 1e-8);
            CHECK(std::abs(dv - want) < 1e-8);
        }

    // reconstruction
    Mat rec(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t) acc += r.u(i, t) * r.s[t] * r.vt(t, j);
            rec(i, j) = acc;
        }
    CHECK(frobenius_norm(sub(rec, x)) <= 1e-6 * std::max(frobenius_norm(x), 1e-12));

    // sign convention: first nonzero entry of each right singular vector >= 0
    for (int j = 0; j < k; ++j) {
        for (int i = 0; i < x.cols(); ++i) {
            if (r.vt(j, i) != 0.0) {
                CHECK(r.vt(j, i) > 0.0);
                break;
            }
        }
    }
}

TEST_CASE("svd singular values vs eigen-oracle on X^T X") {
    Rng rng(4);
    Mat x = oracle::random_mat(rng, 8, 5);
    SvdResult r = svd(x);
    Mat xtx = matmul(transpose(x), x);
    auto ev = oracle::jacobi_eigenvalues(xtx);
    for (int j = 0; j < 5; ++j) {
        CHECK(oracle::rel_err(r.s[j] * r.s[j], std::max(ev[j], 0.0)) <= 1e-8);
    }
    check_svd_contract(x);
}

TEST_CASE("svd contract on random shapes incl wide") {
    Rng rng(5);
    for (auto [m, n] : {std::pair{6, 6}, std::pair{9, 4}, std::pair{4, 9}, std::pair{1, 7}, std::pair{7, 1}}) {
        check_svd_contract(oracle::random_mat(rng, m, n));
    }
}

TEST_CASE("svd deterministic across calls") {
    Rng rng(6);
    Mat x = oracle::random_mat(rng, 12, 7);
    SvdResult a = svd(x);
    SvdResult b = svd(x);
    CHECK(a.u == b.u);
    CHECK(a.s == b.s);
    CHECK(a.vt == b.vt);
}

TEST_CASE("singular values of X equal those of X^T") {
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        const int m = 2 + static_cast<int>(rng.below(31));
        const int n = 2 + static_cast<int>(rng.below(31));
        Mat x = oracle::random_mat(rng, m, n);
        auto s1 = svd(x).s;
        auto s2 = svd(transpose(x)).s;
        REQUIRE(s1.size() == s2.size());
        for (std::size_t j = 0; j < s1.size(); ++j) {
            CHECK(std::abs(s1[j] - s2[j]) <= 1e-8 * std::max(1.0, s1[0]));
        }
    }
}

TEST_CASE("svd rejects bad input") {
    CHECK_THROWS_AS(svd(Mat()), UsageError);
    Mat bad(2, 2);
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(svd(bad), UsageError);
}

TEST_CASE("frobenius norm") {
    CHECK(frobenius_norm(Mat(4, 3)) == 0.0);
    CHECK(frobenius_norm(Mat::from_rows({{3, 4}})) == doctest::Approx(5.0).epsilon(1e-15));
    Rng rng(8);
    Mat m = oracle::random_mat(rng, 6, 6);
    double acc = 0.0;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) acc += m(i, j) * m(i, j);
    CHECK(oracle::rel_err(frobenius_norm(m), std::sqrt(acc)) <= 1e-14);
}

TEST_CASE("trace product") {
    CHECK(trace_product(Mat::identity(4), Mat::identity(4)) == doctest::Approx(4.0));
    Mat unit = scale(Mat::from_rows({{1, 1}, {1, 1}}), 0.5); // Frobenius norm 1
    CHECK(trace_product(unit, unit) == doctest::Approx(1.0).epsilon(1e-14));

    Rng rng(9);
    Mat a = oracle::random_mat(rng, 5, 7);
    Mat b = oracle::random_mat(rng, 5, 7);
    // explicit matmul-then-trace oracle
    Mat atb = oracle::naive_matmul(transpose(a), b);
    double tr = 0.0;
    for (int i = 0; i < atb.rows(); ++i) tr += atb(i, i);
    CHECK(std::abs(trace_product(a, b) - tr) <= 1e-12);
    CHECK(trace_product(a, b) == trace_product(b, a));
    CHECK_THROWS_AS(trace_product(Mat(2, 2), Mat(2, 3)), ShapeError);
}

TEST_CASE("cosine") {
    std::vector<double> e1{1, 0}, e2{0, 1}, d{1, 1};
    CHECK(cosine(e1, e1) == doctest::Approx(1.0));
    CHECK(cosine(e1, e2) == doctest::Approx(0.0));
    CHECK(cosine(d, e1) == doctest::Approx(0.7071067811865475).epsilon(1e-14));

    std::vector<double> z{0, 0};
    CHECK(cosine(z, e1) == 0.0); // degenerate rule

    // scale invariance
    Rng rng(10);
    std::vector<double> u(9), v(9);
    for (auto& x : u) x = rng.uniform(-1, 1);
    for (auto& x : v) x = rng.uniform(-1, 1);
    std::vector<double> u3 = u;
    for (auto& x : u3) x *= 3.25;
    CHECK(std::abs(cosine(u3, v) - cosine(u, v)) <= 1e-12);

    std::vector<double> shorter{1.0};
    CHECK_THROWS_AS(cosine(shorter, e1), ShapeError);
}

TEST_CASE("svd handles zero matrix") {
    Mat z(4, 3);
    SvdResult r = svd(z);
    for (double s : r.s) CHECK(s == 0.0);
    check_svd_contract(z);
}
