#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sfbp/graph.hpp"
#include "sfbp/penalty.hpp"
#include "sfbp/solver.hpp"

namespace sfbp {

struct GapEstimate {
    double value = 0.0;  // max over graph samples of <y*, x - y>
    int n_samples = 0;
    double delta = 0.0;
    Vector anchor;
};

/// Finite-sample lower estimate of the restricted merit
///   Theta_delta(x) = sup { <y*, x - y> : y in C, ||y - anchor|| <= delta,
///                          y* in (A + N_C)(y) }.
/// Zero at solutions inside the ball; the estimate never claims exactness and
/// is monotone in the sample set.
inline GapEstimate restricted_gap(const Vector& x, const std::vector<GraphSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("restricted_gap: empty sample list");
    GapEstimate est;
    est.n_samples = static_cast<int>(samples.size());
    est.value = -std::numeric_limits<double>::infinity();
    for (const auto& s : samples) {
        est.value = std::max(est.value, s.value.dot(x - s.point));
        est.delta = std::max(est.delta, s.anchor_distance);
    }
    return est;
}

/// Convenience wrapper drawing a fresh sample set around the anchor.
inline GapEstimate restricted_gap(const MonotoneOp& op, const ConstraintSpec& constraint, const Vector& x,
                                  const Vector& anchor, double delta, int samples, Rng& rng) {
    GapEstimate est = restricted_gap(x, sample_graph(op, constraint, anchor, delta, samples, rng));
    est.delta = delta;
    est.anchor = anchor;
    return est;
}

/// Phi(x) - min_C Phi; signed, may be negative for infeasible x.
inline double objective_gap(double phi_x, double phi_min) { return phi_x - phi_min; }

struct RateFit {
    double rate = 0.0;       // exponent in value ~ t^rate
    double log_coeff = 0.0;  // intercept of the log-log fit
    double r_squared = 0.0;
    int points = 0;
};

/// Log-log regression of positive (t, value) pairs, restricted to the last
/// 80% of the points so transients do not pollute the slope.
inline RateFit rate_fit(const std::vector<double>& times, const std::vector<double>& values) {
    if (times.size() != values.size()) throw std::invalid_argument("rate_fit: length mismatch");
    std::vector<double> lx, ly;
    const std::size_t skip = times.size() / 5;
    for (std::size_t i = skip; i < times.size(); ++i) {
        if (times[i] <= 0 || values[i] <= 0) continue;
        lx.push_back(std::log(times[i]));
        ly.push_back(std::log(values[i]));
    }
    if (lx.size() < 10) throw std::invalid_argument("rate_fit: fewer than 10 positive points");
    const auto fit = detail::least_squares_line(lx, ly);
    RateFit out;
    out.rate = fit.slope;
    out.log_coeff = fit.intercept;
    out.r_squared = fit.r_squared;
    out.points = fit.n;
    return out;
}

struct ConcentrationRow {
    double epsilon = 0.0;
    double empirical_exceedance = 0.0;
    double bound = 0.0;  // exp(-epsilon^2 / 4), exact
    int n_replicates = 0;
};

struct ReplicateConcentration {
    double q0 = 0.0;  // (c(t) + 2 E_z(0)) / t with E_z(0) = ||X_0 - z||^2 / 2
    double q1 = 0.0;  // sqrt(delta(t)) / t
    double delta_phi_bar = 0.0;
    double t = 0.0;
};

struct ConcentrationReport {
    std::vector<ReplicateConcentration> replicates;
    std::vector<ConcentrationRow> rows;
};

/// Deviation certificate for the averaged objective gap: for each eps the
/// fraction of replicates with Phi(x_bar) - Phi(z_ref) >= Q0 + eps Q1 is
/// reported against the bound exp(-eps^2 / 4).
inline ConcentrationReport concentration_report(const std::vector<Trajectory>& trajectories,
                                                const std::vector<double>& epsilons,
                                                const std::function<double(const Vector&)>& phi,
                                                const Vector& z_ref) {
    if (trajectories.empty()) throw std::invalid_argument("concentration_report: no trajectories");
    if (!phi) throw std::invalid_argument("concentration_report: objective required");
    ConcentrationReport report;
    const double phi_ref = phi(z_ref);
    for (const auto& traj : trajectories) {
        const SolverState& s = traj.final_state;
        if (s.t <= 0) throw std::invalid_argument("concentration_report: trajectory with zero elapsed time");
        ReplicateConcentration r;
        r.t = s.t;
        r.q0 = (s.c_acc + (traj.x0 - z_ref).squaredNorm()) / s.t;
        r.q1 = std::sqrt(std::max(s.delta_acc, 0.0)) / s.t;
        r.delta_phi_bar = phi(s.x_bar) - phi_ref;
        report.replicates.push_back(r);
    }
    for (double eps : epsilons) {
        ConcentrationRow row;
        row.epsilon = eps;
        row.bound = std::exp(-0.25 * eps * eps);
        row.n_replicates = static_cast<int>(report.replicates.size());
        int exceed = 0;
        for (const auto& r : report.replicates)
            if (r.delta_phi_bar >= r.q0 + eps * r.q1) ++exceed;
        row.empirical_exceedance = static_cast<double>(exceed) / row.n_replicates;
        report.rows.push_back(row);
    }
    return report;
}

/// The penalty value itself is the feasibility merit (zero exactly on C).
inline double feasibility_residual(const PenaltyFn& psi, const Vector& x) { return eval_penalty(psi, x); }

inline double dist_to_solution(const Vector& x, const Vector& x_star) {
    if (x.size() != x_star.size()) throw std::invalid_argument("dist_to_solution: dimension mismatch");
    return (x - x_star).norm();
}

}  // namespace sfbp
