#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sfbp/problems.hpp"
#include "sfbp/solver.hpp"

using namespace sfbp;

namespace {

Vector vec(std::initializer_list<double> vals) {
    Vector v(static_cast<Eigen::Index>(vals.size()));
    Eigen::Index i = 0;
    for (double x : vals) v[i++] = x;
    return v;
}

}  // namespace

TEST_CASE("zero operator with quadratic penalty is explicit gradient descent") {
    const Vector c = vec({2.0, -1.0});
    const auto psi = PenaltyFn::least_squares(Matrix::Identity(2, 2), c);
    const auto schedule = Schedule::constant(0.3, 1.0, 1.0);  // lambda*beta = 0.3
    SolverState state = make_state(vec({5.0, 5.0}));
    detail::StepWorkspace ws;
    Rng rng(51);
    step(MonotoneOp::zero(), psi, schedule, NoiseModel::off(2), state, rng, {}, ws);
    const Vector expect = vec({5.0, 5.0}) - 0.3 * (vec({5.0, 5.0}) - c);
    CHECK((state.x - expect).norm() < 1e-14);
}

TEST_CASE("single soft-threshold step from a feasible start") {
    // box contains the start, so the penalty gradient vanishes there
    const auto psi = PenaltyFn::half_sq_dist_box(vec({0.0}), vec({10.0}));
    const auto schedule = Schedule::constant(1.0, 1.0, 1.0);
    SolverState state = make_state(vec({5.0}));
    detail::StepWorkspace ws;
    Rng rng(52);
    step(MonotoneOp::l1(), psi, schedule, NoiseModel::off(1), state, rng, {}, ws);
    CHECK(state.x[0] == doctest::Approx(4.0));
}

TEST_CASE("solutions are fixed points of the deterministic iteration") {
    // x = 0 satisfies 0 in A(x) for the l1 subdifferential and grad Psi(0) = 0
    const auto psi = PenaltyFn::half_sq_dist_box(vec({-1.0, -1.0}), vec({1.0, 1.0}));
    const auto schedule = Schedule::power_product(0.75, 10.0, 1.0, 1.0);
    SolverState state = make_state(Vector::Zero(2));
    detail::StepWorkspace ws;
    Rng rng(53);
    for (int k = 0; k < 100; ++k) step(MonotoneOp::l1(), psi, schedule, NoiseModel::off(2), state, rng, {}, ws);
    CHECK(state.x.norm() == doctest::Approx(0.0));
}

TEST_CASE("cesaro averaging") {
    SolverState s = make_state(vec({1.0, 0.0}));
    s.sum_lambda = 0.0;
    s.x_bar = vec({1.0, 0.0});
    cesaro_update(s, vec({1.0, 0.0}), 1.0);
    cesaro_update(s, vec({5.0, 4.0}), 3.0);
    CHECK(s.x_bar[0] == doctest::Approx(4.0));  // (1 + 3*5)/4
    CHECK(s.x_bar[1] == doctest::Approx(3.0));

    // from-scratch recomputation over many random updates
    Rng rng(54);
    SolverState t = make_state(Vector::Zero(3));
    t.sum_lambda = 0.0;
    Vector weighted_sum = Vector::Zero(3);
    double wsum = 0.0;
    for (int k = 0; k < 1000; ++k) {
        Vector x(3);
        for (int i = 0; i < 3; ++i) x[i] = rng.uniform(-5, 5);
        const double w = rng.uniform(0.01, 2.0);
        cesaro_update(t, x, w);
        weighted_sum += w * x;
        wsum += w;
    }
    CHECK((t.x_bar - weighted_sum / wsum).norm() < 1e-12);
    CHECK_THROWS_AS(cesaro_update(t, Vector::Zero(3), 0.0), std::invalid_argument);
}

TEST_CASE("bilevel quadratic converges without noise") {
    auto prob = make_bilevel_quadratic(5, 2);
    const auto schedule = Schedule::power_product(0.75, 10.0, 1.0, prob.psi.l_spectral);
    Rng rng(55);
    // elapsed time sum(lambda_n) must exceed 50 so the drift-free coordinates
    // can reach the l1 center at 50; with lambda_n = (n+10)^{-0.75} that needs
    // roughly 42k steps
    const auto traj = run(prob.op, prob.psi, schedule, NoiseModel::off(5), prob.x0, 60000, rng, {});
    CHECK(!traj.diverged);
    CHECK((traj.final_state.x - *prob.known_solution).norm() < 0.1);
}

TEST_CASE("run bookkeeping at tiny step counts") {
    auto prob = make_bilevel_quadratic(4, 1);
    const auto schedule = Schedule::power_product(0.75, 10.0, 1.0, prob.psi.l_spectral);
    Rng rng(56);
    CHECK_THROWS_AS(run(prob.op, prob.psi, schedule, NoiseModel::off(4), prob.x0, 0, rng, {}),
                    std::invalid_argument);
    Rng rng2(56);
    const auto traj = run(prob.op, prob.psi, schedule, NoiseModel::off(4), prob.x0, 1, rng2, {});
    CHECK(traj.records.size() == 1);
    CHECK(traj.records.front().n == 1);
    CHECK(traj.x0 == prob.x0);
}

TEST_CASE("records are strictly increasing and keep the last step") {
    auto prob = make_bilevel_quadratic(4, 1);
    const auto schedule = Schedule::power_product(0.75, 10.0, 1.0, prob.psi.l_spectral);
    Rng rng(57);
    const auto traj = run(prob.op, prob.psi, schedule, NoiseModel::off(4), prob.x0, 5000, rng, {});
    for (std::size_t i = 1; i < traj.records.size(); ++i) CHECK(traj.records[i].n > traj.records[i - 1].n);
    CHECK(traj.records.back().n == 5000);
}

TEST_CASE("noisy runs are bit-reproducible per seed") {
    auto prob = make_bilevel_quadratic(6, 2);
    const auto schedule = Schedule::power_product(0.75, 10.0, 1.0, prob.psi.l_spectral);
    const auto noise = NoiseModel::asv(0.5, 0.75, 6);
    Rng r1(99, 0), r2(99, 0), r3(99, 1);
    const auto t1 = run(prob.op, prob.psi, schedule, noise, prob.x0, 2000, r1, {});
    const auto t2 = run(prob.op, prob.psi, schedule, noise, prob.x0, 2000, r2, {});
    const auto t3 = run(prob.op, prob.psi, schedule, noise, prob.x0, 2000, r3, {});
    CHECK(t1.final_state.x == t2.final_state.x);
    CHECK(t1.final_state.z_aux == t2.final_state.z_aux);
    CHECK(t1.final_state.x != t3.final_state.x);
}

TEST_CASE("divergence is recorded, not thrown") {
    // step rule disabled and lambda*beta = 4 > 2/L: the quadratic iteration
    // x <- x - 4x expands without bound
    const auto psi = PenaltyFn::least_squares(Matrix::Identity(2, 2), Vector::Zero(2));
    Schedule s;
    s.kind = Schedule::Kind::Constant;
    s.const_lambda = 1.0;
    s.const_beta = 4.0;
    s.l_psi = 1.0;
    s.enforce_step_rule = false;
    Rng rng(58);
    const auto traj = run(MonotoneOp::zero(), psi, s, NoiseModel::off(2), vec({1.0, 1.0}), 200, rng, {});
    CHECK(traj.diverged);
    CHECK(traj.final_state.n < 200);
}

TEST_CASE("deterministic energy inequality along the bilevel run") {
    // Fejer-type descent toward the known solution with its stored witness,
    // using c2 = 4 (1 + eta0) / eta0 at eta0 = 1
    auto prob = make_bilevel_quadratic(8, 3);
    const auto schedule = Schedule::power_product(0.75, 10.0, 1.0, prob.psi.l_spectral);
    const Vector z = *prob.known_solution;
    const Vector v = *prob.witness;
    const double c2 = 8.0;
    SolverState state = make_state(prob.x0);
    detail::StepWorkspace ws;
    Rng rng(59);
    double prev_sq = (state.x - z).squaredNorm();
    for (long n = 0; n < 3000; ++n) {
        const double lambda_n = schedule.lambda(n);
        const Vector x_prev = state.x;
        step(prob.op, prob.psi, schedule, NoiseModel::off(8), state, rng, {}, ws);
        const double cur_sq = (state.x - z).squaredNorm();
        const double bound = 2.0 * lambda_n * v.dot(z - x_prev) + c2 * lambda_n * lambda_n * v.squaredNorm();
        CHECK(cur_sq - prev_sq <= bound + 1e-8 * (1.0 + prev_sq));
        prev_sq = cur_sq;
    }
}

TEST_CASE("penalty residual collapses across seeds under decaying noise") {
    auto prob = make_bilevel_quadratic(10, 3);
    const auto schedule = Schedule::power_product(0.75, 10.0, 1.0, prob.psi.l_spectral);
    const auto noise = NoiseModel::asv(0.5, 0.75, 10);
    const double psi0 = eval_penalty(prob.psi, prob.x0);
    int ok = 0;
    const int seeds = 50;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(777, static_cast<std::uint64_t>(s));
        const auto traj = run(prob.op, prob.psi, schedule, noise, prob.x0, 10000, rng, {});
        if (!traj.diverged && eval_penalty(prob.psi, traj.final_state.x) < psi0 / 100.0) ++ok;
    }
    CHECK(ok >= 45);  // >= 90% of seeds
}

TEST_CASE("euler-maruyama ODE limit and degenerate partition") {
    const auto psi = PenaltyFn::least_squares(Matrix::Identity(1, 1), Vector::Zero(1));
    const auto schedule = Schedule::constant(0.1, 1.0, 1.0);  // beta(t) = 1
    Rng rng(60);
    const Vector x0 = vec({2.0});
    // single step over [0, 1]: x1 = x0 - 1 * x0 = 0
    const auto one = euler_maruyama_path(MonotoneOp::zero(), psi, schedule, NoiseModel::off(1), x0, 1.0, 1, rng);
    CHECK(one.back()[0] == doctest::Approx(0.0));
    // refinement toward e^{-1} x0
    double prev_err = -1.0;
    for (int k = 4; k <= 10; ++k) {
        const long n = 1L << k;
        const auto path =
            euler_maruyama_path(MonotoneOp::zero(), psi, schedule, NoiseModel::off(1), x0, 1.0, n, rng);
        const double err = std::abs(path.back()[0] - std::exp(-1.0) * x0[0]);
        if (prev_err > 0) {
            CHECK(err < prev_err);
            CHECK(err / prev_err == doctest::Approx(0.5).epsilon(0.2));
        }
        prev_err = err;
    }
}

TEST_CASE("coupled meshes contract under shared Brownian increments") {
    auto prob = make_bilevel_quadratic(6, 2);
    Schedule s;
    s.kind = Schedule::Kind::Constant;
    s.const_lambda = 1.0;  // unused by the path builder
    s.const_beta = 1.0;
    s.l_psi = prob.psi.l_spectral;
    s.enforce_step_rule = false;
    const auto noise = NoiseModel::ubv(0.5, 6);
    const double horizon_t = 4.0;
    const long finest = 1L << 9;
    std::vector<double> level_err(3, 0.0);
    const int seeds = 50;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(321, static_cast<std::uint64_t>(seed));
        std::vector<Vector> fine_inc;
        for (long k = 0; k < finest; ++k)
            fine_inc.push_back(brownian_increment(rng, horizon_t / static_cast<double>(finest), 6));
        const auto aggregate = [&](long n_steps) {
            std::vector<Vector> inc(n_steps, Vector::Zero(6));
            const long ratio = finest / n_steps;
            for (long k = 0; k < finest; ++k) inc[k / ratio] += fine_inc[k];
            return inc;
        };
        Rng dummy(0);
        for (int level = 0; level < 3; ++level) {
            const long coarse = 1L << (6 + level);
            const auto inc_c = aggregate(coarse);
            const auto inc_f = aggregate(2 * coarse);
            const auto pc = euler_maruyama_path(prob.op, prob.psi, s, noise, prob.x0, horizon_t, coarse, dummy, &inc_c);
            const auto pf =
                euler_maruyama_path(prob.op, prob.psi, s, noise, prob.x0, horizon_t, 2 * coarse, dummy, &inc_f);
            double sup = 0.0;
            for (long k = 0; k <= coarse; ++k) sup = std::max(sup, (pc[k] - pf[2 * k]).squaredNorm());
            level_err[level] += sup / seeds;
        }
    }
    CHECK(level_err[1] < level_err[0]);
    CHECK(level_err[2] < level_err[1]);
}
