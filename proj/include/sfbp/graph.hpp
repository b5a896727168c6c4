#pragma once

#include <stdexcept>
#include <vector>

#include "sfbp/operators.hpp"
#include "sfbp/penalty.hpp"
#include "sfbp/rng.hpp"

namespace sfbp {

/// A point y in C within distance delta of the anchor together with an
/// element y* of (A + N_C)(y).
struct GraphSample {
    Vector point;
    Vector value;
    double anchor_distance = 0.0;
};

/// Draws points of the restricted graph used by the gap functional: sample a
/// random direction, project onto C, then shrink toward the anchor until the
/// point lies inside the ball of radius delta. The value combines an operator
/// element with a normal cone element of C at the point.
inline std::vector<GraphSample> sample_graph(const MonotoneOp& op, const ConstraintSpec& constraint,
                                             const Vector& anchor, double delta, int count, Rng& rng) {
    if (delta <= 0) throw std::invalid_argument("sample_graph: delta must be positive");
    if (count < 1) throw std::invalid_argument("sample_graph: count must be positive");
    if (!constraint.contains(anchor, 1e-9))
        throw std::invalid_argument("sample_graph: anchor must lie in the constraint set");
    std::vector<GraphSample> samples;
    samples.reserve(count);
    const Eigen::Index d = anchor.size();
    for (int k = 0; k < count; ++k) {
        Vector dir(d);
        for (Eigen::Index i = 0; i < d; ++i) dir[i] = rng.normal();
        const double radius = delta * rng.uniform();
        Vector y = constraint.project(anchor + radius * dir.normalized());
        // projection may leave the ball; shrink toward the anchor (C is convex,
        // so the segment stays in C)
        double dist = (y - anchor).norm();
        if (dist > delta) {
            y = anchor + (delta / dist) * (y - anchor);
            y = constraint.project(y);  // guard against roundoff drift
            dist = (y - anchor).norm();
        }
        GraphSample s;
        s.value = sample_operator_element(op, y, rng) + constraint.sample_normal_element(y, rng);
        s.point = std::move(y);
        s.anchor_distance = dist;
        samples.push_back(std::move(s));
    }
    return samples;
}

/// Probe-based validity test for a graph sample of A + N_C when A is a plain
/// subdifferential: for feasible probes z the subgradient inequality
///   Phi(z) >= Phi(y) + <v, z - y>
/// must hold (the normal-cone part of v only weakens the right-hand side).
inline bool verify_graph_sample(const MonotoneOp& op, const ConstraintSpec& constraint, const GraphSample& sample,
                                const std::vector<Vector>& probes, double tol = 1e-8) {
    double phi_y = 0.0;
    if (!potential_value(op, sample.point, phi_y))
        throw std::invalid_argument("verify_graph_sample: operator is not a plain subdifferential");
    for (const Vector& z : probes) {
        if (!constraint.contains(z, 1e-9))
            throw std::invalid_argument("verify_graph_sample: probe outside the constraint set");
        double phi_z = 0.0;
        potential_value(op, z, phi_z);
        if (phi_z - phi_y < sample.value.dot(z - sample.point) - tol * (1.0 + std::abs(phi_z))) return false;
    }
    return true;
}

}  // namespace sfbp
