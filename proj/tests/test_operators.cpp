#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sfbp/operators.hpp"

using namespace sfbp;

namespace {

Vector vec(std::initializer_list<double> vals) {
    Vector v(static_cast<Eigen::Index>(vals.size()));
    Eigen::Index i = 0;
    for (double x : vals) v[i++] = x;
    return v;
}

Vector random_vec(Rng& rng, Eigen::Index d, double lo, double hi) {
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = rng.uniform(lo, hi);
    return v;
}

// independent 1-d oracle: argmin over a fine grid of
//   (1/2)(u - x)^2 + lambda * w * |u - s| + indicator([lo, hi])
double grid_prox_1d(double x, double lambda, double w, double s, double lo, double hi) {
    double best_u = lo, best_val = std::numeric_limits<double>::infinity();
    const int n = 2000000;
    for (int k = 0; k <= n; ++k) {
        const double u = lo + (hi - lo) * static_cast<double>(k) / n;
        const double val = 0.5 * (u - x) * (u - x) + lambda * w * std::abs(u - s);
        if (val < best_val) {
            best_val = val;
            best_u = u;
        }
    }
    return best_u;
}

}  // namespace

TEST_CASE("resolvent of the zero operator is the identity") {
    const Vector x = vec({3.0, -1.0});
    CHECK(resolvent(MonotoneOp::zero(), 0.7, x) == x);
}

TEST_CASE("l1 resolvent soft-thresholds") {
    const Vector p = resolvent(MonotoneOp::l1(), 1.0, vec({2.0, -0.5, 0.0}));
    CHECK(p[0] == doctest::Approx(1.0));
    CHECK(p[1] == doctest::Approx(0.0));
    CHECK(p[2] == doctest::Approx(0.0));
}

TEST_CASE("box normal cone resolvent is the projection") {
    const auto op = MonotoneOp::box_normal_cone(vec({0.0, 0.0}), vec({1.0, 1.0}));
    const Vector p = resolvent(op, 2.0, vec({2.0, -1.0}));
    CHECK(p[0] == doctest::Approx(1.0));
    CHECK(p[1] == doctest::Approx(0.0));
}

TEST_CASE("weighted and translated l1 resolvents match the grid oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const double x = rng.uniform(-4.0, 4.0);
        const double lambda = rng.uniform(0.1, 2.0);
        const double w = rng.uniform(0.0, 2.0);
        const double s = rng.uniform(-2.0, 2.0);
        {
            const auto op = MonotoneOp::weighted_l1(vec({w}));
            const double got = resolvent(op, lambda, vec({x}))[0];
            CHECK(std::abs(got - grid_prox_1d(x, lambda, w, 0.0, -10.0, 10.0)) < 2e-5);
        }
        {
            const auto op = MonotoneOp::translated_l1(vec({s}));
            const double got = resolvent(op, lambda, vec({x}))[0];
            CHECK(std::abs(got - grid_prox_1d(x, lambda, 1.0, s, -10.0, 10.0)) < 2e-5);
        }
    }
}

TEST_CASE("separable sum resolvent matches the constrained grid oracle") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const double x = rng.uniform(-4.0, 4.0);
        const double lambda = rng.uniform(0.1, 2.0);
        const double s = rng.uniform(-1.0, 1.0);
        const double lo = rng.uniform(-3.0, 0.0), hi = rng.uniform(0.5, 3.0);
        const auto op = MonotoneOp::sum(
            {MonotoneOp::translated_l1(vec({s})), MonotoneOp::box_normal_cone(vec({lo}), vec({hi}))});
        const double got = resolvent(op, lambda, vec({x}))[0];
        CHECK(std::abs(got - grid_prox_1d(x, lambda, 1.0, s, lo, hi)) < 2e-5);
    }
}

TEST_CASE("affine resolvent solves the linear system") {
    Rng rng(13);
    Matrix m(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = rng.normal();
    m = (m * m.transpose()).eval();  // symmetric positive semidefinite
    const Vector q = random_vec(rng, 3, -1.0, 1.0);
    const auto op = MonotoneOp::affine(m, q);
    const Vector x = random_vec(rng, 3, -2.0, 2.0);
    const double lambda = 0.6;
    const Vector p = resolvent(op, lambda, x);
    CHECK((p + lambda * (m * p + q) - x).norm() < 1e-10);
}

TEST_CASE("affine factory rejects non-monotone maps") {
    Matrix m = -Matrix::Identity(2, 2);
    CHECK_THROWS_AS(MonotoneOp::affine(m, Vector::Zero(2)), std::invalid_argument);
}

TEST_CASE("resolvent rejects bad inputs") {
    CHECK_THROWS_AS(resolvent(MonotoneOp::l1(), 0.0, vec({1.0})), std::invalid_argument);
    CHECK_THROWS_AS(resolvent(MonotoneOp::l1(), -1.0, vec({1.0})), std::invalid_argument);
    Vector bad(1);
    bad[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(resolvent(MonotoneOp::l1(), 1.0, bad), std::invalid_argument);
}

TEST_CASE("firm nonexpansiveness holds across kinds over many random pairs") {
    Rng rng(14);
    std::vector<MonotoneOp> ops;
    ops.push_back(MonotoneOp::zero());
    ops.push_back(MonotoneOp::l1());
    ops.push_back(MonotoneOp::weighted_l1(vec({0.5, 2.0, 0.0, 1.0, 3.0})));
    ops.push_back(MonotoneOp::translated_l1(vec({1.0, -2.0, 0.0, 4.0, 0.5})));
    ops.push_back(MonotoneOp::box_normal_cone(vec({-1, -1, -1, -1, -1}), vec({1, 2, 3, 4, 5})));
    {
        Matrix m(5, 5);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) m(i, j) = rng.normal();
        m = (m * m.transpose() + Matrix::Identity(5, 5)).eval();
        ops.push_back(MonotoneOp::affine(m, random_vec(rng, 5, -1, 1)));
    }
    ops.push_back(MonotoneOp::sum(
        {MonotoneOp::l1(), MonotoneOp::box_normal_cone(vec({-2, -2, -2, -2, -2}), vec({2, 2, 2, 2, 2}))}));
    for (const auto& op : ops) {
        std::vector<std::pair<Vector, Vector>> pairs;
        for (int k = 0; k < 1500; ++k)
            pairs.emplace_back(random_vec(rng, 5, -5, 5), random_vec(rng, 5, -5, 5));
        const auto report = check_firm_nonexpansive(op, rng.uniform(0.1, 3.0), pairs);
        CHECK(report.max_violation <= 1e-9);
    }
}

TEST_CASE("firm nonexpansiveness on a coincident pair is exactly zero") {
    const Vector x = vec({1.0, 2.0});
    const auto report = check_firm_nonexpansive(MonotoneOp::l1(), 0.5, {{x, x}});
    CHECK(report.max_violation == doctest::Approx(0.0));
}

TEST_CASE("resolvent consistency: (x - Jx)/lambda is a subgradient at Jx") {
    Rng rng(15);
    const auto op = MonotoneOp::weighted_l1(vec({1.0, 0.3, 2.0}));
    for (int trial = 0; trial < 50; ++trial) {
        const double lambda = rng.uniform(0.2, 2.0);
        const Vector x = random_vec(rng, 3, -5, 5);
        const Vector p = resolvent(op, lambda, x);
        const Vector u = (x - p) / lambda;
        double f_p = 0.0;
        REQUIRE(potential_value(op, p, f_p));
        for (int k = 0; k < 64; ++k) {
            const Vector z = random_vec(rng, 3, -5, 5);
            double f_z = 0.0;
            potential_value(op, z, f_z);
            CHECK(f_z - f_p >= u.dot(z - p) - 1e-8);
        }
    }
}

TEST_CASE("monotone pair test through the resolvent") {
    Rng rng(16);
    const auto op = MonotoneOp::sum(
        {MonotoneOp::l1(), MonotoneOp::box_normal_cone(vec({-3, -3}), vec({3, 3}))});
    for (int trial = 0; trial < 1000; ++trial) {
        const double lambda = rng.uniform(0.1, 2.0);
        const Vector x = random_vec(rng, 2, -5, 5), y = random_vec(rng, 2, -5, 5);
        const Vector jx = resolvent(op, lambda, x), jy = resolvent(op, lambda, y);
        const Vector u = (x - jx) / lambda, v = (y - jy) / lambda;
        CHECK((u - v).dot(jx - jy) >= -1e-9);
    }
}

TEST_CASE("operator element sampling respects the subdifferential") {
    Rng rng(17);
    const auto op = MonotoneOp::l1();
    const Vector y = vec({2.0, -1.0, 0.0});
    for (int k = 0; k < 100; ++k) {
        const Vector v = sample_operator_element(op, y, rng);
        CHECK(v[0] == doctest::Approx(1.0));
        CHECK(v[1] == doctest::Approx(-1.0));
        CHECK(std::abs(v[2]) <= 1.0);
    }
}

TEST_CASE("box normal cone sampling points outward and rejects exterior points") {
    Rng rng(18);
    const auto op = MonotoneOp::box_normal_cone(vec({0.0, 0.0}), vec({1.0, 1.0}));
    const Vector y = vec({1.0, 0.5});
    for (int k = 0; k < 50; ++k) {
        const Vector v = sample_operator_element(op, y, rng);
        CHECK(v[0] >= 0.0);
        CHECK(v[1] == doctest::Approx(0.0));
        // normal cone inequality against box probes
        for (int j = 0; j < 8; ++j) {
            Vector z(2);
            z[0] = rng.uniform(0.0, 1.0);
            z[1] = rng.uniform(0.0, 1.0);
            CHECK(v.dot(z - y) <= 1e-12);
        }
    }
    CHECK_THROWS_AS(sample_operator_element(op, vec({2.0, 0.5}), rng), std::invalid_argument);
}
