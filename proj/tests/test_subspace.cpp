#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lifelora/subspace.hpp"
#include "lifelora/rng.hpp"
#include "oracles.hpp"

using namespace lifelora;

namespace {

void check_projector_contract(const SubspaceProjection& psi) {
    // basis^T basis = I
    Mat btb = matmul(transpose(psi.basis), psi.basis);
    CHECK(frobenius_norm(sub(btb, Mat::identity(psi.rank))) <= 1e-8);

    Mat p = psi.materialize();
    CHECK(frobenius_norm(sub(p, transpose(p))) <= 1e-10);          // symmetric
    CHECK(frobenius_norm(sub(matmul(p, p), p)) <= 1e-8);           // idempotent
    double tr = 0.0;
    for (int i = 0; i < p.rows(); ++i) tr += p(i, i);
    CHECK(std::abs(tr - psi.rank) <= 1e-6);                        // trace = rank
}

} // namespace

TEST_CASE("axis-aligned span gives a diagonal projector") {
    Mat x = Mat::from_rows({{1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {2, -1, 0}});
    SubspaceProjection psi = build_subspace(x, 2);
    Mat p = psi.materialize();
    Mat want = Mat::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 0}});
    CHECK(frobenius_norm(sub(p, want)) <= 1e-10);
    check_projector_contract(psi);
}

TEST_CASE("full-rank corpus gives the identity projector") {
    Rng rng(21);
    Mat x = oracle::random_mat(rng, 6, 4);
    SubspaceProjection psi = build_subspace(x, 4);
    CHECK(frobenius_norm(sub(psi.materialize(), Mat::identity(4))) <= 1e-8);
}

TEST_CASE("subspace basis agrees with eigen-oracle of x^T x") {
    Rng rng(22);
    Mat x = oracle::random_mat(rng, 8, 16);
    SubspaceProjection psi = build_subspace(x, 3, 7);
    CHECK(psi.skill_id == 7);
    check_projector_contract(psi);

    // top-3 eigenvalues of x^T x = squared top-3 singular values captured by
    // the basis: for v in the basis span, psi v = v
    for (int j = 0; j < 3; ++j) {
        std::vector<double> v(16);
        for (int i = 0; i < 16; ++i) v[i] = psi.basis(i, j);
        auto pv = project_query(v, psi);
        double diff = 0.0;
        for (int i = 0; i < 16; ++i) diff += (pv[i] - v[i]) * (pv[i] - v[i]);
        CHECK(std::sqrt(diff) <= 1e-8);
    }

    // eigen-oracle cross-check on the captured spectrum
    auto ev = oracle::jacobi_eigenvalues(matmul(transpose(x), x));
    auto s = svd(x).s;
    for (int j = 0; j < 3; ++j) CHECK(oracle::rel_err(s[j] * s[j], ev[j]) <= 1e-8);
}

TEST_CASE("project_query matches the materialized projector") {
    Rng rng(23);
    Mat x = oracle::random_mat(rng, 8, 16);
    SubspaceProjection psi = build_subspace(x, 3);
    Mat p = psi.materialize();
    std::vector<double> e(16);
    for (auto& v : e) v = rng.uniform(-1, 1);
    auto fast = project_query(e, psi);
    auto slow = mat_vec(p, e);
    for (int i = 0; i < 16; ++i) CHECK(std::abs(fast[i] - slow[i]) <= 1e-10);
}

TEST_CASE("projection of in- and out-of-subspace vectors") {
    Mat x = Mat::from_rows({{1, 0, 0, 0}, {0, 1, 0, 0}});
    SubspaceProjection psi = build_subspace(x, 2);

    std::vector<double> inside{0.6, -0.8, 0, 0};
    auto pi = project_query(inside, psi);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(pi[i] - inside[i]) <= 1e-8);
    CHECK(skill_similarity(inside, psi) == doctest::Approx(1.0).epsilon(1e-10));

    std::vector<double> outside{0, 0, 1, 0};
    auto po = project_query(outside, psi);
    CHECK(norm2(po) <= 1e-8);
    CHECK(skill_similarity(outside, psi) == 0.0); // degenerate rule

    std::vector<double> wrong{1.0, 0.0};
    CHECK_THROWS_AS(project_query(wrong, psi), ShapeError);
}

TEST_CASE("45-degree query has cosine 1/sqrt(2)") {
    Mat x = Mat::from_rows({{1, 0, 0, 0}, {0, 1, 0, 0}});
    SubspaceProjection psi = build_subspace(x, 2);
    const double r = 1.0 / std::sqrt(2.0);
    std::vector<double> e{r, 0, r, 0}; // half in-plane, half orthogonal
    CHECK(skill_similarity(e, psi) == doctest::Approx(0.7071067811865475).epsilon(1e-12));
}

TEST_CASE("aggregation weights") {
    auto eq = aggregation_weights({0.4, 0.4, 0.4}, 5.0);
    for (double w : eq.weights) CHECK(w == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    auto hard = aggregation_weights({1.0, 0.0}, 5.0);
    CHECK(hard.weights[0] == doctest::Approx(1.0));
    CHECK(hard.weights[1] == doctest::Approx(0.0));

    auto hand = aggregation_weights({0.9, 0.6}, 5.0);
    CHECK(hand.weights[0] == doctest::Approx(0.8836).epsilon(2e-4));
    CHECK(hand.weights[1] == doctest::Approx(0.1164).epsilon(2e-3));
    CHECK(std::abs(hand.weights[0] - 0.59049 / (0.59049 + 0.07776)) <= 1e-12);

    auto fallback = aggregation_weights({0.0, 0.0, 0.0, 0.0}, 5.0);
    for (double w : fallback.weights) CHECK(w == doctest::Approx(0.25));

    auto clipped = aggregation_weights({-0.3, 0.5}, 3.0);
    CHECK(clipped.weights[0] == 0.0);
    CHECK(clipped.weights[1] == doctest::Approx(1.0));

    CHECK_THROWS_AS(aggregation_weights({}, 5.0), UsageError);
}

TEST_CASE("weights lie on the simplex and preserve the argmax") {
    Rng rng(24);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(8));
        std::vector<double> sims(n);
        for (auto& s : sims) s = rng.uniform();
        for (double gamma : {1.0, 2.0, 5.0}) {
            auto w = aggregation_weights(sims, gamma);
            double total = 0.0;
            for (double x : w.weights) {
                CHECK(x >= 0.0);
                total += x;
            }
            CHECK(std::abs(total - 1.0) <= 1e-10);
            auto am_s = std::max_element(sims.begin(), sims.end()) - sims.begin();
            auto am_w = std::max_element(w.weights.begin(), w.weights.end()) - w.weights.begin();
            CHECK(am_s == am_w);
        }
    }
}

TEST_CASE("larger gamma concentrates the max weight") {
    Rng rng(25);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(6));
        std::vector<double> sims(n);
        for (auto& s : sims) s = rng.uniform(0.05, 1.0);
        // ensure a unique max
        auto mx = std::max_element(sims.begin(), sims.end());
        *mx = std::min(1.0, *mx + 0.05);
        double prev = 0.0;
        for (double gamma : {1.0, 2.0, 5.0, 9.0}) {
            auto w = aggregation_weights(sims, gamma);
            const double peak = *std::max_element(w.weights.begin(), w.weights.end());
            CHECK(peak >= prev - 1e-12);
            prev = peak;
        }
    }
}

TEST_CASE("build_subspace invariant to corpus row permutation") {
    Rng rng(26);
    Mat x = oracle::random_mat(rng, 6, 10);
    Mat perm(6, 10);
    const int order[6] = {3, 0, 5, 1, 4, 2};
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 10; ++j) perm(i, j) = x(order[i], j);
    SubspaceProjection a = build_subspace(x, 3);
    SubspaceProjection b = build_subspace(perm, 3);
    CHECK(frobenius_norm(sub(a.basis, b.basis)) <= 1e-9);
}

TEST_CASE("build_subspace rank validation") {
    Mat x(4, 8);
    CHECK_THROWS_AS(build_subspace(x, 0), UsageError);
    CHECK_THROWS_AS(build_subspace(x, 5), UsageError);
}
