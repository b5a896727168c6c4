#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sfbp/operators.hpp"
#include "sfbp/penalty.hpp"
#include "sfbp/rng.hpp"
#include "sfbp/schedule.hpp"
#include "sfbp/stochastic.hpp"

namespace sfbp {

constexpr double kDivergenceNorm = 1e12;

struct StepOptions {
    bool beta_scales_noise = false;  // multiply the noise term by beta_n as well as the gradient
    bool uniform_cesaro = false;     // plain iterate average instead of lambda-weighted
    int minibatch = 0;               // 0 = exact gradient; otherwise rows per stochastic gradient
    bool enforce_step_rule = true;
};

/// Full state of the iteration, including the auxiliary martingale shadow
/// Z_{n+1} = Z_n - sigma(t_n, X_n) dW and the accumulators feeding the
/// concentration certificate.
struct SolverState {
    long n = 0;
    double t = 0.0;  // sum of step sizes so far
    Vector x;
    Vector x_bar;
    Vector z_aux;
    double sum_lambda = 0.0;
    double c_acc = 0.0;      // integral of (1/2)||sigma||_F^2
    double delta_acc = 0.0;  // integral of ||sigma||_F^2 ||Z - X||^2
};

inline SolverState make_state(const Vector& x0) {
    SolverState s;
    s.x = x0;
    s.x_bar = x0;
    s.z_aux = x0;
    return s;
}

/// lambda-weighted running average of the iterates (or uniform when asked);
/// the average is over X_1..X_n with the step size as weight.
inline void cesaro_update(SolverState& state, const Vector& x_new, double weight) {
    if (weight <= 0) throw std::invalid_argument("cesaro_update: weight must be positive");
    const double total = state.sum_lambda + weight;
    state.x_bar += (weight / total) * (x_new - state.x_bar);
    state.sum_lambda = total;
}

namespace detail {

struct StepWorkspace {
    Vector grad, dw, arg, x_next;
};

}  // namespace detail

/// One iteration of the penalized forward-backward scheme:
///   X_{n+1} = J_{lambda_n A}( X_n - lambda_n ( beta_n grad Psi(X_n) + dB ) ),
/// with dB = sigma(t_n, X_n) dW, dW ~ N(0, lambda_n Id).
inline void step(const MonotoneOp& op, const PenaltyFn& psi, const Schedule& schedule, const NoiseModel& noise,
                 SolverState& state, Rng& rng, const StepOptions& opts, detail::StepWorkspace& ws) {
    const auto [lambda_n, beta_n] = schedule_eval(schedule, state.n);
    if (opts.minibatch > 0) {
        const std::int64_t m_rows = psi.sparse_mat ? psi.sparse_mat->rows : psi.dense_mat.rows();
        ws.grad = minibatch_gradient(psi, state.x, draw_batch(rng, m_rows, opts.minibatch));
    } else {
        grad_penalty_inplace(psi, state.x, ws.grad);
    }
    ws.arg = state.x;
    ws.arg.noalias() -= (lambda_n * beta_n) * ws.grad;
    if (noise.regime != NoiseModel::Regime::Off) {
        const double sd = std::sqrt(lambda_n);
        ws.dw.resize(noise.m);
        for (Eigen::Index i = 0; i < noise.m; ++i) ws.dw[i] = sd * rng.normal();
        const double sigma = noise.scale(state.t);
        const double noise_gain = opts.beta_scales_noise ? beta_n : 1.0;
        ws.arg.noalias() -= (lambda_n * noise_gain * sigma) * ws.dw;
        state.z_aux.noalias() -= sigma * ws.dw;
        const double frob2 = sigma * sigma * static_cast<double>(noise.m);
        state.c_acc += 0.5 * frob2 * lambda_n;
        state.delta_acc += frob2 * (state.z_aux - state.x).squaredNorm() * lambda_n;
    }
    resolvent_inplace(op, lambda_n, ws.arg, ws.x_next);
    state.x.swap(ws.x_next);
    state.t += lambda_n;
    state.n += 1;
    cesaro_update(state, state.x, opts.uniform_cesaro ? 1.0 : lambda_n);
}

struct TrajectoryRecord {
    long n = 0;
    double t = 0.0;
    double psi_value = 0.0;
    double objective = std::numeric_limits<double>::quiet_NaN();
    double dist = std::numeric_limits<double>::quiet_NaN();
    double gap_estimate = std::numeric_limits<double>::quiet_NaN();
    double x_bar_objective = std::numeric_limits<double>::quiet_NaN();
};

struct Snapshot {
    long n = 0;
    double t = 0.0;
    Vector x;
    Vector x_bar;
};

struct Trajectory {
    Vector x0;
    SolverState final_state;
    std::vector<TrajectoryRecord> records;
    std::vector<Snapshot> snapshots;
    bool diverged = false;
    std::uint64_t seed = 0;
};

struct RunHooks {
    std::function<double(const Vector&)> objective;  // Phi, recorded when set
    std::function<double(const Vector&)> gap;        // merit evaluator, recorded when set
    std::optional<Vector> x_star;                    // distance target
    std::vector<long> snapshot_steps;                // sorted, iteration counts
    std::vector<double> snapshot_times;              // sorted, continuous times
    long record_stride = 0;                          // 0 = log-spaced records
};

/// Runs n_steps iterations from x0. Divergence (non-finite or huge iterates)
/// sets the flag and stops the run instead of throwing.
inline Trajectory run(const MonotoneOp& op, const PenaltyFn& psi, const Schedule& schedule, const NoiseModel& noise,
                      const Vector& x0, long n_steps, Rng& rng, const StepOptions& opts, const RunHooks& hooks = {}) {
    if (n_steps < 1) throw std::invalid_argument("run: n_steps must be positive");
    require_finite(x0, "run");
    Trajectory traj;
    traj.x0 = x0;
    SolverState state = make_state(x0);
    detail::StepWorkspace ws;

    std::size_t snap_step_i = 0, snap_time_i = 0;
    long next_record = 1;
    const auto record = [&]() {
        TrajectoryRecord r;
        r.n = state.n;
        r.t = state.t;
        r.psi_value = eval_penalty(psi, state.x);
        if (hooks.objective) {
            r.objective = hooks.objective(state.x);
            r.x_bar_objective = hooks.objective(state.x_bar);
        }
        if (hooks.gap) r.gap_estimate = hooks.gap(state.x);
        if (hooks.x_star) r.dist = (state.x - *hooks.x_star).norm();
        traj.records.push_back(r);
    };

    for (long k = 0; k < n_steps; ++k) {
        step(op, psi, schedule, noise, state, rng, opts, ws);
        if (!state.x.allFinite() || state.x.norm() > kDivergenceNorm) {
            traj.diverged = true;
            break;
        }
        while (snap_step_i < hooks.snapshot_steps.size() && state.n >= hooks.snapshot_steps[snap_step_i]) {
            traj.snapshots.push_back({state.n, state.t, state.x, state.x_bar});
            ++snap_step_i;
        }
        while (snap_time_i < hooks.snapshot_times.size() && state.t >= hooks.snapshot_times[snap_time_i]) {
            traj.snapshots.push_back({state.n, state.t, state.x, state.x_bar});
            ++snap_time_i;
        }
        if (state.n >= next_record || k + 1 == n_steps) {
            record();
            if (hooks.record_stride > 0)
                next_record = state.n + hooks.record_stride;
            else
                next_record = std::max(state.n + 1, static_cast<long>(static_cast<double>(state.n) * 1.2));
        }
    }
    traj.final_state = std::move(state);
    return traj;
}

/// Euler-Maruyama discretization of the continuous dynamics on a uniform grid
/// over [0, T]:
///   X_{k+1} = J_{dt A}( X_k - dt beta(t_k) grad Psi(X_k) + sigma(t_k) dW_k ).
/// Increments may be supplied (n_steps rows, coupling runs on nested grids
/// share a Brownian path by summing fine increments) or drawn from rng.
inline std::vector<Vector> euler_maruyama_path(const MonotoneOp& op, const PenaltyFn& psi, const Schedule& schedule,
                                               const NoiseModel& noise, const Vector& x0, double horizon_t,
                                               long n_steps, Rng& rng,
                                               const std::vector<Vector>* increments = nullptr) {
    if (n_steps < 1 || horizon_t <= 0) throw std::invalid_argument("euler_maruyama_path: bad grid");
    if (increments && static_cast<long>(increments->size()) != n_steps)
        throw std::invalid_argument("euler_maruyama_path: increment count mismatch");
    const double dt = horizon_t / static_cast<double>(n_steps);
    std::vector<Vector> path;
    path.reserve(n_steps + 1);
    path.push_back(x0);
    Vector x = x0, g, arg, x_next;
    for (long k = 0; k < n_steps; ++k) {
        const double t_k = dt * static_cast<double>(k);
        grad_penalty_inplace(psi, x, g);
        arg = x - (dt * schedule.beta_continuous(t_k)) * g;
        if (noise.regime != NoiseModel::Regime::Off) {
            const Vector dw = increments ? (*increments)[k] : brownian_increment(rng, dt, noise.m);
            arg.noalias() += noise.scale(t_k) * dw;
        }
        resolvent_inplace(op, dt, arg, x_next);
        x.swap(x_next);
        path.push_back(x);
    }
    return path;
}

}  // namespace sfbp
