#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lifelora/tape.hpp"
#include "lifelora/rng.hpp"
#include "oracles.hpp"

using namespace lifelora;

TEST_CASE("record is append-only with stored values and parents") {
    Tape t;
    Mat x = Mat::from_rows({{1, 2}, {3, 4}});
    NodeId a = t.constant(x);
    NodeId two_x = t.record("add", {a, a}, scale(x, 2.0));
    CHECK(two_x == a + 1);
    CHECK(t.value(two_x)(1, 1) == 8.0);

    NodeId b = t.constant(Mat::identity(2));
    NodeId ab = t.record("matmul", {a, b}, x);
    CHECK(ab > b);

    std::size_t before = t.node_count();
    for (int i = 0; i < 5; ++i) t.add(a, b);
    CHECK(t.node_count() == before + 5);

    CHECK_THROWS_AS(t.record("conv2d", {a}, x), UsageError);
    CHECK_THROWS_AS(t.add(a, 999), UsageError);
}

TEST_CASE("backward of quadratic form tr(A^T A)/2 is A") {
    Rng rng(11);
    Mat a = oracle::random_mat(rng, 3, 4);
    Tape t;
    NodeId pa = t.param(a);
    NodeId loss = t.const_mul(0.5, t.trace_product_op(pa, pa));
    auto grads = t.backward(loss);
    const Mat& g = grads.at(pa);
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) CHECK(g(i, j) == doctest::Approx(a(i, j)).epsilon(1e-14));
}

TEST_CASE("backward of sum(alpha*X) is alpha*ones") {
    Rng rng(12);
    Mat x = oracle::random_mat(rng, 2, 5);
    const double alpha = 1.75;
    Tape t;
    NodeId px = t.param(x);
    Mat ones(2, 5);
    for (int i = 0; i < ones.size(); ++i) ones.data()[i] = 1.0;
    NodeId loss = t.const_mul(alpha, t.trace_product_op(px, t.constant(ones)));
    auto grads = t.backward(loss);
    for (int i = 0; i < x.size(); ++i) CHECK(grads.at(px).data()[i] == doctest::Approx(alpha).epsilon(1e-14));
}

TEST_CASE("unreachable params get zero gradient") {
    Tape t;
    NodeId used = t.param(Mat::identity(2));
    NodeId unused = t.param(Mat::identity(3));
    NodeId loss = t.trace_product_op(used, used);
    auto grads = t.backward(loss);
    CHECK(frobenius_norm(grads.at(unused)) == 0.0);
    CHECK(grads.at(unused).rows() == 3);
}

TEST_CASE("loss must be scalar and backward needs reset") {
    Tape t;
    NodeId p = t.param(Mat::identity(2));
    CHECK_THROWS_AS(t.backward(p), UsageError);

    Tape t2;
    NodeId p2 = t2.param(Mat::from_rows({{1.0, 2.0}}));
    NodeId loss = t2.trace_product_op(p2, p2);
    auto g1 = t2.backward(loss);
    CHECK_THROWS_AS(t2.backward(loss), UsageError);
    t2.reset();
    auto g2 = t2.backward(loss);
    CHECK(g1.at(p2) == g2.at(p2));
}

// builds a loss touching every differentiable op
static double composite_loss(const std::vector<Mat>& params, Mat* c1, Mat* c2,
                             std::unordered_map<NodeId, Mat>* out_grads = nullptr,
                             std::vector<NodeId>* out_ids = nullptr) {
    Tape t;
    NodeId a = t.param(params[0]); // 3x3
    NodeId b = t.param(params[1]); // 3x3
    NodeId w = t.param(params[2]); // 1x2 logits for the gumbel soft path
    NodeId k1 = t.constant(*c1);   // 3x3
    NodeId k2 = t.constant(*c2);   // 3x3

    NodeId m = t.matmul(a, b);
    NodeId h = t.hadamard(m, k1);
    NodeId s = t.tanh_op(t.add(h, k2));
    NodeId nb = t.frob_normalize(b, 0.01);
    NodeId reg = t.trace_product_op(t.constant(scale(*c1, 0.5)), nb);
    NodeId xent = t.softmax_xent(s, {{0, 1}, {2, 0}});

    // soft gumbel gate scales part of the loss
    auto gate = t.st_gumbel_gate(w, 0.3, -0.2, 0.7);
    NodeId gated = t.scalar_mat(gate.soft, t.add(xent, t.const_mul(0.25, reg)));
    NodeId loss = t.add(gated, t.const_mul(0.1, xent));

    if (out_grads) {
        *out_grads = t.backward(loss);
        *out_ids = {a, b, w};
    }
    return t.value(loss)(0, 0);
}

TEST_CASE("composite loss matches central finite differences") {
    Rng rng(13);
    for (int seed = 0; seed < 5; ++seed) {
        std::vector<Mat> params{oracle::random_mat(rng, 3, 3), oracle::random_mat(rng, 3, 3),
                                oracle::random_mat(rng, 1, 2)};
        Mat c1 = oracle::random_mat(rng, 3, 3);
        Mat c2 = oracle::random_mat(rng, 3, 3);

        std::unordered_map<NodeId, Mat> grads;
        std::vector<NodeId> ids;
        composite_loss(params, &c1, &c2, &grads, &ids);
        std::vector<Mat> analytic;
        for (NodeId id : ids) analytic.push_back(grads.at(id));

        auto res = oracle::grad_check(
            [&](const std::vector<Mat>& p) { return composite_loss(p, &c1, &c2); }, params, analytic);
        CHECK(res.checked == 9 + 9 + 2);
        CHECK(res.max_rel <= 1e-4);
    }
}

TEST_CASE("gumbel gate symmetric tie goes to no-injection") {
    Tape t;
    NodeId logits = t.param(Mat(1, 2));
    auto gate = t.st_gumbel_gate(logits, 0.0, 0.0, 1.0);
    CHECK(t.value(gate.soft)(0, 0) == doctest::Approx(0.5));
    CHECK(gate.hard == 0);
    CHECK(t.value(gate.gate)(0, 0) == 0.0);
}

TEST_CASE("gumbel gate strong logit") {
    Tape t;
    NodeId logits = t.param(Mat(1, 2, {0.0, 10.0}));
    auto gate = t.st_gumbel_gate(logits, 0.0, 0.0, 1.0);
    const double want = 1.0 / (1.0 + std::exp(-10.0));
    CHECK(t.value(gate.soft)(0, 0) == doctest::Approx(want).epsilon(1e-12));
    CHECK(t.value(gate.soft)(0, 0) == doctest::Approx(0.9999546).epsilon(1e-7));
    CHECK(gate.hard == 1);
    CHECK_THROWS_AS(t.st_gumbel_gate(logits, 0.0, 0.0, 0.0), UsageError);
}

TEST_CASE("gumbel gate gradient matches finite differences") {
    Rng rng(14);
    auto build = [&](const std::vector<Mat>& p, std::unordered_map<NodeId, Mat>* g = nullptr,
                     NodeId* id = nullptr) {
        Tape t;
        NodeId logits = t.param(p[0]);
        auto gate = t.st_gumbel_gate(logits, 0.45, -0.8, 1.3);
        // loss = (soft - 0.2)^2 realized with the available ops
        NodeId shifted = t.add(gate.soft, t.constant(Mat(1, 1, {-0.2})));
        NodeId loss = t.trace_product_op(shifted, shifted);
        if (g) {
            *g = t.backward(loss);
            *id = logits;
        }
        return t.value(loss)(0, 0);
    };
    std::vector<Mat> params{oracle::random_mat(rng, 1, 2)};
    std::unordered_map<NodeId, Mat> grads;
    NodeId id;
    build(params, &grads, &id);
    auto res = oracle::grad_check([&](const std::vector<Mat>& p) { return build(p); }, params,
                                  {grads.at(id)});
    CHECK(res.max_rel <= 1e-4);
}

TEST_CASE("straight-through gate equals soft-plus-constant construction bitwise") {
    Rng rng(15);
    Mat logits = oracle::random_mat(rng, 1, 2);
    Mat delta = oracle::random_mat(rng, 2, 2);
    Mat probe = oracle::random_mat(rng, 2, 2);
    const double n0 = 0.9, n1 = -0.4, tau = 0.8;

    auto run = [&](bool use_st_node) {
        Tape t;
        NodeId lg = t.param(logits);
        NodeId d = t.param(delta);
        auto gate = t.st_gumbel_gate(lg, n0, n1, tau);
        NodeId gate_node;
        if (use_st_node) {
            gate_node = gate.gate;
        } else {
            // value = hard, gradient = soft path, built from primitive ops
            const double hard = t.value(gate.gate)(0, 0);
            const double soft = t.value(gate.soft)(0, 0);
            gate_node = t.add(gate.soft, t.constant(Mat(1, 1, {hard - soft})));
        }
        NodeId gated = t.scalar_mat(gate_node, d);
        NodeId loss = t.trace_product_op(gated, t.constant(probe));
        auto grads = t.backward(loss);
        return std::pair{grads.at(lg), grads.at(d)};
    };

    auto [gl_a, gd_a] = run(true);
    auto [gl_b, gd_b] = run(false);
    CHECK(gl_a == gl_b);
    CHECK(gd_a == gd_b);
}

TEST_CASE("per-op gradients vs finite differences") {
    Rng rng(16);
    // matmul + add + tanh path
    auto f1 = [&](const std::vector<Mat>& p, std::unordered_map<NodeId, Mat>* g = nullptr,
                  std::vector<NodeId>* ids = nullptr) {
        Tape t;
        NodeId a = t.param(p[0]);
        NodeId b = t.param(p[1]);
        NodeId y = t.tanh_op(t.matmul(a, b));
        NodeId loss = t.trace_product_op(y, y);
        if (g) {
            *g = t.backward(loss);
            *ids = {a, b};
        }
        return t.value(loss)(0, 0);
    };
    std::vector<Mat> p1{oracle::random_mat(rng, 2, 3), oracle::random_mat(rng, 3, 2)};
    std::unordered_map<NodeId, Mat> g1;
    std::vector<NodeId> ids1;
    f1(p1, &g1, &ids1);
    CHECK(oracle::grad_check([&](const std::vector<Mat>& p) { return f1(p); }, p1,
                             {g1.at(ids1[0]), g1.at(ids1[1])})
              .max_rel <= 1e-4);

    // frob_normalize path incl. trace against constant
    auto f2 = [&](const std::vector<Mat>& p, std::unordered_map<NodeId, Mat>* g = nullptr,
                  NodeId* id = nullptr) {
        Tape t;
        NodeId b = t.param(p[0]);
        Mat probe = Mat::from_rows({{0.3, -0.7}, {0.2, 0.9}});
        NodeId loss = t.trace_product_op(t.constant(probe), t.frob_normalize(b, 0.01));
        if (g) {
            *g = t.backward(loss);
            *id = b;
        }
        return t.value(loss)(0, 0);
    };
    std::vector<Mat> p2{oracle::random_mat(rng, 2, 2)};
    std::unordered_map<NodeId, Mat> g2;
    NodeId id2;
    f2(p2, &g2, &id2);
    CHECK(oracle::grad_check([&](const std::vector<Mat>& p) { return f2(p); }, p2, {g2.at(id2)})
              .max_rel <= 1e-4);

    // softmax cross-entropy path
    auto f3 = [&](const std::vector<Mat>& p, std::unordered_map<NodeId, Mat>* g = nullptr,
                  NodeId* id = nullptr) {
        Tape t;
        NodeId logits = t.param(p[0]);
        NodeId loss = t.softmax_xent(logits, {{0, 2}, {1, 0}, {2, 3}});
        if (g) {
            *g = t.backward(loss);
            *id = logits;
        }
        return t.value(loss)(0, 0);
    };
    std::vector<Mat> p3{oracle::random_mat(rng, 4, 3, -2.0, 2.0)};
    std::unordered_map<NodeId, Mat> g3;
    NodeId id3;
    f3(p3, &g3, &id3);
    CHECK(oracle::grad_check([&](const std::vector<Mat>& p) { return f3(p); }, p3, {g3.at(id3)})
              .max_rel <= 1e-4);
}

TEST_CASE("adam converges on a quadratic") {
    Mat x(1, 4, {5.0, -3.0, 2.0, 0.5});
    Adam opt({.lr = 0.05});
    for (int i = 0; i < 2000; ++i) {
        Tape t;
        NodeId p = t.param(x);
        NodeId loss = t.trace_product_op(p, p);
        auto grads = t.backward(loss);
        opt.step({&x}, {grads.at(p)});
    }
    CHECK(frobenius_norm(x) < 1e-3);
}

TEST_CASE("softmax_xent rejects out-of-range targets") {
    Tape t;
    NodeId logits = t.param(Mat(4, 2));
    CHECK_THROWS_AS(t.softmax_xent(logits, {{0, 7}}), UsageError);
    CHECK_THROWS_AS(t.softmax_xent(logits, {{5, 0}}), UsageError);
}
