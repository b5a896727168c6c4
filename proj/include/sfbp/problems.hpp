#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "sfbp/diagnostics.hpp"
#include "sfbp/graph.hpp"
#include "sfbp/operators.hpp"
#include "sfbp/penalty.hpp"
#include "sfbp/radon.hpp"
#include "sfbp/rng.hpp"

namespace sfbp {

/// The full triple (A, Psi, C) of one experiment, with whatever ground-truth
/// metadata the construction makes available.
struct ProblemInstance {
    std::string name;
    Eigen::Index dim = 0;
    std::uint64_t seed = 0;
    MonotoneOp op;
    PenaltyFn psi;
    ConstraintSpec constraint;
    std::function<double(const Vector&)> phi;
    std::optional<double> phi_min;
    std::optional<Vector> known_solution;
    std::optional<Vector> witness;  // stored element of A(known_solution)
    std::optional<Vector> x_true;   // reconstruction target, not certified optimal
    Vector x0;
};

namespace detail {

/// Construction-time audit: feasibility of the known solution and probe-test
/// validity of the stored witness.
inline void audit_instance(const ProblemInstance& prob) {
    if (!prob.known_solution) return;
    const Vector& xs = *prob.known_solution;
    if (eval_penalty(prob.psi, xs) > 1e-10)
        throw std::logic_error(prob.name + ": known solution is infeasible");
    if (prob.witness) {
        Rng rng(0xA0D17ULL ^ prob.seed);
        GraphSample s;
        s.point = xs;
        s.value = *prob.witness;
        std::vector<Vector> probes;
        for (int k = 0; k < 8; ++k) {
            Vector z(prob.dim);
            for (Eigen::Index i = 0; i < prob.dim; ++i) z[i] = rng.uniform(-60.0, 60.0);
            probes.push_back(prob.constraint.project(z));
        }
        if (!verify_graph_sample(prob.op, prob.constraint, s, probes))
            throw std::logic_error(prob.name + ": stored witness fails the subgradient probe test");
    }
}

}  // namespace detail

/// Sparse recovery: min ||x||_1 over solutions of the least-squares problem
/// with a Gaussian sensing matrix (entries N(0, 1/m)).
inline ProblemInstance make_basis_pursuit(int m, int d, int sparsity, double noise_sigma, std::uint64_t seed) {
    if (m < 1 || d < 1 || m > d) throw std::invalid_argument("make_basis_pursuit: need 1 <= m <= d");
    if (sparsity < 0 || sparsity > d) throw std::invalid_argument("make_basis_pursuit: sparsity out of range");
    if (noise_sigma < 0) throw std::invalid_argument("make_basis_pursuit: negative noise level");
    Rng rng(seed);
    Matrix a(m, d);
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = scale * rng.normal();
    Vector x_true = Vector::Zero(d);
    {
        std::vector<int> idx(d);
        for (int j = 0; j < d; ++j) idx[j] = j;
        for (int k = 0; k < sparsity; ++k) {
            const auto pick = k + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(d - k)));
            std::swap(idx[k], idx[pick]);
            x_true[idx[k]] = rng.normal();
        }
    }
    Vector y = a * x_true;
    for (int i = 0; i < m; ++i) y[i] += noise_sigma * rng.normal();

    ProblemInstance prob;
    prob.name = "basis_pursuit";
    prob.dim = d;
    prob.seed = seed;
    prob.op = MonotoneOp::l1();
    prob.psi = PenaltyFn::least_squares(a, y);
    prob.constraint = ConstraintSpec::affine_solution_set(std::move(a), std::move(y));
    prob.phi = [](const Vector& x) { return x.lpNorm<1>(); };
    prob.x_true = std::move(x_true);
    prob.x0 = Vector::Zero(d);
    return prob;
}

/// Hierarchical l1-over-quadratic problem with the closed-form solution
/// x* = sum_{i<=J} e_i + 50 sum_{i>J} e_i.
inline ProblemInstance make_bilevel_quadratic(int d, int chain_len) {
    if (chain_len < 1 || chain_len >= d) throw std::invalid_argument("make_bilevel_quadratic: need 1 <= J < d");
    const Vector target = Vector::Constant(d, 50.0);
    ProblemInstance prob;
    prob.name = "bilevel_quadratic";
    prob.dim = d;
    prob.op = MonotoneOp::translated_l1(target);
    prob.psi = PenaltyFn::chained_quadratic(chain_len, d);
    prob.constraint = ConstraintSpec::pin(d, chain_len, 1.0);
    prob.phi = [target](const Vector& x) { return (x - target).lpNorm<1>(); };
    Vector xs = Vector::Constant(d, 50.0);
    xs.head(chain_len).setConstant(1.0);
    prob.phi_min = (xs - target).lpNorm<1>();  // 49 * J
    // l1 subgradient at x*: pinned coordinates sit at 1 - 50 < 0, the rest at 0
    Vector v = Vector::Zero(d);
    v.head(chain_len).setConstant(-1.0);
    prob.known_solution = std::move(xs);
    prob.witness = std::move(v);
    prob.x0 = Vector::Zero(d);
    detail::audit_instance(prob);
    return prob;
}

/// Tomographic l1 reconstruction with a sparse ray-transform operator.
inline ProblemInstance make_radon(int image_side, int n_angles, int n_detectors, Phantom phantom,
                                  std::uint64_t seed) {
    auto a = std::make_shared<CsrMatrix>(make_radon_matrix(image_side, n_angles, n_detectors));
    const Vector img = make_phantom(image_side, phantom);
    Vector y = a->multiply(img);
    ProblemInstance prob;
    prob.name = "radon";
    prob.dim = static_cast<Eigen::Index>(image_side) * image_side;
    prob.seed = seed;
    prob.op = MonotoneOp::l1();
    prob.psi = PenaltyFn::least_squares_sparse(a, std::move(y));
    if (prob.dim <= 1500)
        prob.constraint = prob.psi.implied_constraint();
    else
        prob.constraint = ConstraintSpec::free(prob.dim);  // dense projection unavailable at full scale
    prob.phi = [](const Vector& x) { return x.lpNorm<1>(); };
    prob.x_true = img;
    prob.x0 = Vector::Zero(prob.dim);
    return prob;
}

inline double objective_gap(const ProblemInstance& prob, const Vector& x) {
    if (!prob.phi || !prob.phi_min) throw std::invalid_argument("objective_gap: problem lacks an objective reference");
    return objective_gap(prob.phi(x), *prob.phi_min);
}

}  // namespace sfbp
