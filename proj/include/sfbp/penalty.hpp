#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfbp/rng.hpp"
#include "sfbp/schedule.hpp"
#include "sfbp/sparse.hpp"

namespace sfbp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

constexpr double kFeasibilityTol = 1e-12;  // membership threshold on the penalty value

// ---------------------------------------------------------------------------
// Constraint set C with support function, membership test and projection.
// ---------------------------------------------------------------------------

struct ConstraintSpec {
    enum class Kind { Free, Box, Pin, AffineSolutionSet };

    Kind kind = Kind::Free;
    Eigen::Index dim = 0;
    Vector lo, hi;                 // Box
    Eigen::Index pin_count = 0;    // Pin: x_i = pin_value for i < pin_count
    double pin_value = 1.0;
    Matrix affine_mat;             // AffineSolutionSet: {x : A x = rhs}, consistent
    Vector affine_rhs;
    Vector affine_x0;              // min-norm solution
    std::shared_ptr<const Eigen::CompleteOrthogonalDecomposition<Matrix>> affine_cod;
    std::shared_ptr<const Eigen::CompleteOrthogonalDecomposition<Matrix>> affine_cod_t;  // of A^T

    static ConstraintSpec free(Eigen::Index d) {
        ConstraintSpec c;
        c.kind = Kind::Free;
        c.dim = d;
        return c;
    }

    static ConstraintSpec box(Vector lo, Vector hi) {
        if (lo.size() != hi.size() || (lo.array() > hi.array()).any())
            throw std::invalid_argument("constraint box: invalid bounds");
        ConstraintSpec c;
        c.kind = Kind::Box;
        c.dim = lo.size();
        c.lo = std::move(lo);
        c.hi = std::move(hi);
        return c;
    }

    static ConstraintSpec pin(Eigen::Index d, Eigen::Index count, double value = 1.0) {
        if (count < 1 || count > d) throw std::invalid_argument("constraint pin: count out of range");
        ConstraintSpec c;
        c.kind = Kind::Pin;
        c.dim = d;
        c.pin_count = count;
        c.pin_value = value;
        return c;
    }

    static ConstraintSpec affine_solution_set(Matrix a, Vector rhs) {
        ConstraintSpec c;
        c.kind = Kind::AffineSolutionSet;
        c.dim = a.cols();
        c.affine_cod = std::make_shared<Eigen::CompleteOrthogonalDecomposition<Matrix>>(a);
        c.affine_cod_t =
            std::make_shared<Eigen::CompleteOrthogonalDecomposition<Matrix>>(a.transpose().eval());
        c.affine_x0 = c.affine_cod->solve(rhs);
        if ((a * c.affine_x0 - rhs).norm() > 1e-8 * (1.0 + rhs.norm()))
            throw std::invalid_argument("constraint affine: system A x = rhs is inconsistent");
        c.affine_mat = std::move(a);
        c.affine_rhs = std::move(rhs);
        return c;
    }

    bool contains(const Vector& x, double tol = 1.5e-6) const {
        if (x.size() != dim) throw std::invalid_argument("constraint contains: dimension mismatch");
        switch (kind) {
            case Kind::Free:
                return true;
            case Kind::Box:
                return ((x - lo).array() >= -tol).all() && ((hi - x).array() >= -tol).all();
            case Kind::Pin:
                return (x.head(pin_count).array() - pin_value).abs().maxCoeff() <= tol;
            case Kind::AffineSolutionSet:
                return (affine_mat * x - affine_rhs).norm() <= tol * (1.0 + affine_rhs.norm());
        }
        return false;
    }

    bool has_projection() const { return true; }

    Vector project(const Vector& x) const {
        if (x.size() != dim) throw std::invalid_argument("constraint project: dimension mismatch");
        switch (kind) {
            case Kind::Free:
                return x;
            case Kind::Box:
                return x.cwiseMax(lo).cwiseMin(hi);
            case Kind::Pin: {
                Vector p = x;
                p.head(pin_count).setConstant(pin_value);
                return p;
            }
            case Kind::AffineSolutionSet:
                return x - affine_cod->solve(affine_mat * x - affine_rhs);
        }
        throw std::logic_error("constraint project: unreachable");
    }

    /// Support function sigma_C(p); +infinity when unbounded in direction p.
    double support(const Vector& p) const {
        if (p.size() != dim) throw std::invalid_argument("constraint support: dimension mismatch");
        constexpr double inf = std::numeric_limits<double>::infinity();
        switch (kind) {
            case Kind::Free:
                return p.isZero(0.0) ? 0.0 : inf;
            case Kind::Box: {
                double acc = 0.0;
                for (Eigen::Index i = 0; i < dim; ++i) acc += std::max(p[i] * lo[i], p[i] * hi[i]);
                return acc;
            }
            case Kind::Pin: {
                if (p.size() > pin_count && p.tail(dim - pin_count).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + p.norm()))
                    return inf;
                return pin_value * p.head(pin_count).sum();
            }
            case Kind::AffineSolutionSet: {
                // finite iff p is orthogonal to the null space of A
                // least-squares witness w minimizing |A^T w - p|; p lies in
                // range(A^T) exactly when the residual vanishes
                const Vector p_range = affine_mat.transpose() * (affine_cod_t->solve(p)).eval();
                if ((p - p_range).norm() > 1e-8 * (1.0 + p.norm())) return inf;
                return p.dot(affine_x0);
            }
        }
        throw std::logic_error("constraint support: unreachable");
    }

    /// A random element of the normal cone at a point of C (0 for interior
    /// directions); used to sample graph points of A + N_C.
    Vector sample_normal_element(const Vector& y, Rng& rng, double scale = 1.0) const {
        Vector p = Vector::Zero(dim);
        switch (kind) {
            case Kind::Free:
                break;
            case Kind::Box:
                for (Eigen::Index i = 0; i < dim; ++i) {
                    if (y[i] >= hi[i] - 1e-12) p[i] += scale * rng.uniform();
                    if (y[i] <= lo[i] + 1e-12) p[i] -= scale * rng.uniform();
                }
                break;
            case Kind::Pin:
                for (Eigen::Index i = 0; i < pin_count; ++i) p[i] = scale * rng.normal();
                break;
            case Kind::AffineSolutionSet: {
                Vector w(affine_mat.rows());
                for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.normal();
                p = scale * (affine_mat.transpose() * w);
                break;
            }
        }
        return p;
    }
};

// ---------------------------------------------------------------------------
// Penalty function Psi with gradient, conjugate machinery and growth fitting.
// ---------------------------------------------------------------------------

enum class PenaltyKind {
    LeastSquares,      // (1/2)||A x - y||^2 with dense or sparse A
    ChainedQuadratic,  // (1/2)(x_1 - 1)^2 + (1/2) sum_{j=2..J} (x_{j-1} - x_j)^2
    HalfSqDistBox,     // (1/2) dist(x, box)^2
};

struct PenaltyFn {
    PenaltyKind kind = PenaltyKind::HalfSqDistBox;
    Eigen::Index dim = 0;
    Matrix dense_mat;   // LeastSquares / ChainedQuadratic residual map
    Vector rhs;
    std::shared_ptr<const CsrMatrix> sparse_mat;
    Eigen::Index chain_len = 0;
    Vector box_lo, box_hi;
    double l_spectral = 1.0;   // Lipschitz constant of the gradient (lambda_max of A^T A)
    double l_frobenius = 1.0;  // ||A||_F, the constant used by the experiments' reference runs

    // conjugate cache: orthogonal decomposition of A^T A (dense instances only)
    std::shared_ptr<const Eigen::CompleteOrthogonalDecomposition<Matrix>> gram_cod;
    Vector at_rhs;  // A^T y

    static PenaltyFn least_squares(Matrix a, Vector y) {
        if (a.rows() != y.size()) throw std::invalid_argument("least_squares: shape mismatch");
        PenaltyFn psi;
        psi.kind = PenaltyKind::LeastSquares;
        psi.dim = a.cols();
        psi.l_frobenius = a.norm();
        psi.l_spectral = spectral_gram(a);
        psi.at_rhs = a.transpose() * y;
        psi.gram_cod = std::make_shared<Eigen::CompleteOrthogonalDecomposition<Matrix>>(a.transpose() * a);
        psi.dense_mat = std::move(a);
        psi.rhs = std::move(y);
        return psi;
    }

    static PenaltyFn least_squares_sparse(std::shared_ptr<const CsrMatrix> a, Vector y) {
        if (a->rows != y.size()) throw std::invalid_argument("least_squares_sparse: shape mismatch");
        PenaltyFn psi;
        psi.kind = PenaltyKind::LeastSquares;
        psi.dim = a->cols;
        psi.l_frobenius = a->frobenius_norm();
        psi.l_spectral = spectral_gram_sparse(*a);
        if (a->cols <= 1500) {
            // keep the conjugate machinery available at desk scale
            Matrix dense = a->to_dense();
            psi.at_rhs = dense.transpose() * y;
            psi.gram_cod = std::make_shared<Eigen::CompleteOrthogonalDecomposition<Matrix>>(dense.transpose() * dense);
        }
        psi.sparse_mat = std::move(a);
        psi.rhs = std::move(y);
        return psi;
    }

    static PenaltyFn chained_quadratic(Eigen::Index chain_len, Eigen::Index d) {
        if (chain_len < 1 || chain_len > d) throw std::invalid_argument("chained_quadratic: need 1 <= J <= d");
        PenaltyFn psi;
        psi.kind = PenaltyKind::ChainedQuadratic;
        psi.dim = d;
        psi.chain_len = chain_len;
        // residual map rows: x_1 - 1 and x_{j-1} - x_j
        Matrix b = Matrix::Zero(chain_len, d);
        b(0, 0) = 1.0;
        for (Eigen::Index j = 1; j < chain_len; ++j) {
            b(j, j - 1) = 1.0;
            b(j, j) = -1.0;
        }
        Vector e1 = Vector::Zero(chain_len);
        e1[0] = 1.0;
        psi.l_frobenius = b.norm();
        psi.l_spectral = 4.0;  // upper bound on the tridiagonal Hessian spectrum
        psi.at_rhs = b.transpose() * e1;
        psi.gram_cod = std::make_shared<Eigen::CompleteOrthogonalDecomposition<Matrix>>(b.transpose() * b);
        psi.dense_mat = std::move(b);
        psi.rhs = std::move(e1);
        return psi;
    }

    static PenaltyFn half_sq_dist_box(Vector lo, Vector hi) {
        if (lo.size() != hi.size() || (lo.array() > hi.array()).any())
            throw std::invalid_argument("half_sq_dist_box: invalid bounds");
        PenaltyFn psi;
        psi.kind = PenaltyKind::HalfSqDistBox;
        psi.dim = lo.size();
        psi.l_spectral = 1.0;
        psi.l_frobenius = 1.0;
        psi.box_lo = std::move(lo);
        psi.box_hi = std::move(hi);
        return psi;
    }

    /// The constraint set C = argmin Psi implied by this penalty.
    ConstraintSpec implied_constraint() const {
        switch (kind) {
            case PenaltyKind::LeastSquares:
                if (sparse_mat && !gram_cod)
                    throw std::invalid_argument("implied_constraint: sparse instance too large for dense solves");
                return ConstraintSpec::affine_solution_set(sparse_mat ? sparse_mat->to_dense() : dense_mat, rhs);
            case PenaltyKind::ChainedQuadratic:
                return ConstraintSpec::pin(dim, chain_len, 1.0);
            case PenaltyKind::HalfSqDistBox:
                return ConstraintSpec::box(box_lo, box_hi);
        }
        throw std::logic_error("implied_constraint: unreachable");
    }

private:
    template <typename MatVec>
    static double power_iteration(Eigen::Index d, MatVec&& gram_apply) {
        Rng rng(0x9e3779b9ULL);
        Vector v(d);
        for (Eigen::Index i = 0; i < d; ++i) v[i] = rng.normal();
        v.normalize();
        double eig = 0.0;
        for (int it = 0; it < 5000; ++it) {
            Vector w = gram_apply(v);
            const double norm = w.norm();
            if (norm == 0.0) return 0.0;
            w /= norm;
            const double next = norm;
            if (std::abs(next - eig) <= 1e-8 * std::max(1.0, next) && it > 2) return next;
            eig = next;
            v.swap(w);
        }
        return eig;
    }

    static double spectral_gram(const Matrix& a) {
        return power_iteration(a.cols(), [&](const Vector& v) { return Vector(a.transpose() * (a * v)); });
    }

    static double spectral_gram_sparse(const CsrMatrix& a) {
        return power_iteration(a.cols, [&](const Vector& v) { return a.multiply_transpose(a.multiply(v)); });
    }
};

inline double eval_penalty(const PenaltyFn& psi, const Vector& x) {
    if (x.size() != psi.dim) throw std::invalid_argument("eval_penalty: dimension mismatch");
    switch (psi.kind) {
        case PenaltyKind::LeastSquares:
            if (psi.sparse_mat) return 0.5 * (psi.sparse_mat->multiply(x) - psi.rhs).squaredNorm();
            return 0.5 * (psi.dense_mat * x - psi.rhs).squaredNorm();
        case PenaltyKind::ChainedQuadratic: {
            double acc = 0.5 * (x[0] - 1.0) * (x[0] - 1.0);
            for (Eigen::Index j = 1; j < psi.chain_len; ++j) {
                const double r = x[j - 1] - x[j];
                acc += 0.5 * r * r;
            }
            return acc;
        }
        case PenaltyKind::HalfSqDistBox:
            return 0.5 * (x - x.cwiseMax(psi.box_lo).cwiseMin(psi.box_hi)).squaredNorm();
    }
    throw std::logic_error("eval_penalty: unreachable");
}

inline void grad_penalty_inplace(const PenaltyFn& psi, const Vector& x, Vector& out) {
    if (x.size() != psi.dim) throw std::invalid_argument("grad_penalty: dimension mismatch");
    switch (psi.kind) {
        case PenaltyKind::LeastSquares:
            if (psi.sparse_mat)
                out = psi.sparse_mat->multiply_transpose(psi.sparse_mat->multiply(x) - psi.rhs);
            else
                out = psi.dense_mat.transpose() * (psi.dense_mat * x - psi.rhs);
            break;
        case PenaltyKind::ChainedQuadratic: {
            out.setZero(psi.dim);
            double prev = x[0] - 1.0;  // residual feeding coordinate j-1
            out[0] = prev;
            for (Eigen::Index j = 1; j < psi.chain_len; ++j) {
                const double r = x[j - 1] - x[j];
                out[j - 1] += r;
                out[j] -= r;
            }
            break;
        }
        case PenaltyKind::HalfSqDistBox:
            out = x - x.cwiseMax(psi.box_lo).cwiseMin(psi.box_hi);
            break;
    }
}

inline Vector grad_penalty(const PenaltyFn& psi, const Vector& x) {
    Vector out;
    grad_penalty_inplace(psi, x, out);
    return out;
}

// ---------------------------------------------------------------------------
// Fenchel conjugate gap h_C(p) = Psi*(p) - sigma_C(p).
// ---------------------------------------------------------------------------

struct ConjugateGap {
    double value = 0.0;
    bool finite = true;
};

/// Psi*(p), +infinity flag when p lies outside dom Psi*.
inline ConjugateGap penalty_conjugate(const PenaltyFn& psi, const Vector& p) {
    if (p.size() != psi.dim) throw std::invalid_argument("penalty_conjugate: dimension mismatch");
    switch (psi.kind) {
        case PenaltyKind::LeastSquares:
        case PenaltyKind::ChainedQuadratic: {
            if (!psi.gram_cod)
                throw std::invalid_argument("penalty_conjugate: instance too large for dense conjugate solves");
            // stationarity: A^T A xbar = p + A^T y; finite iff p lies in range(A^T)
            const Vector target = p + psi.at_rhs;
            const Vector xbar = psi.gram_cod->solve(target);
            Vector ax;
            if (psi.kind == PenaltyKind::ChainedQuadratic || !psi.sparse_mat)
                ax = psi.dense_mat.transpose() * (psi.dense_mat * xbar);
            else
                ax = psi.sparse_mat->multiply_transpose(psi.sparse_mat->multiply(xbar));
            if ((ax - target).norm() > 1e-8 * (1.0 + target.norm())) return {std::numeric_limits<double>::infinity(), false};
            return {p.dot(xbar) - eval_penalty(psi, xbar), true};
        }
        case PenaltyKind::HalfSqDistBox: {
            // Moreau: (1/2 dist^2_B)* = 1/2||.||^2 + sigma_B
            double support = 0.0;
            for (Eigen::Index i = 0; i < psi.dim; ++i)
                support += std::max(p[i] * psi.box_lo[i], p[i] * psi.box_hi[i]);
            return {0.5 * p.squaredNorm() + support, true};
        }
    }
    throw std::logic_error("penalty_conjugate: unreachable");
}

inline ConjugateGap conjugate_gap(const PenaltyFn& psi, const ConstraintSpec& c, const Vector& p) {
    const ConjugateGap star = penalty_conjugate(psi, p);
    if (!star.finite) return star;
    const double support = c.support(p);
    if (!std::isfinite(support)) return {std::numeric_limits<double>::infinity(), false};
    return {star.value - support, true};
}

// ---------------------------------------------------------------------------
// Discrete summability check: sum_n lambda_n beta_n h_C(p / beta_n).
// ---------------------------------------------------------------------------

enum class AcVerdict { Satisfied, Violated, Inconclusive };

inline const char* to_string(AcVerdict v) {
    switch (v) {
        case AcVerdict::Satisfied: return "satisfied";
        case AcVerdict::Violated: return "violated";
        case AcVerdict::Inconclusive: return "inconclusive";
    }
    return "?";
}

struct AcSeries {
    Vector p;
    std::vector<std::pair<long, double>> partial_sums;  // thinned (n, S_n)
    double tail_slope = 0.0;
    AcVerdict verdict = AcVerdict::Inconclusive;
    std::string diagnostic;
};

struct AcReport {
    std::vector<AcSeries> series;
    AcVerdict verdict = AcVerdict::Satisfied;
};

namespace detail {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    int n = 0;
};

inline LineFit least_squares_line(const std::vector<double>& xs, const std::vector<double>& ys) {
    LineFit fit;
    fit.n = static_cast<int>(xs.size());
    if (fit.n < 2) return fit;
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (int i = 0; i < fit.n; ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
        syy += ys[i] * ys[i];
    }
    const double den = fit.n * sxx - sx * sx;
    if (den == 0) return fit;
    fit.slope = (fit.n * sxy - sx * sy) / den;
    fit.intercept = (sy - fit.slope * sx) / fit.n;
    const double sst = syy - sy * sy / fit.n;
    if (sst <= 0) {
        fit.r_squared = 1.0;
    } else {
        double sse = 0;
        for (int i = 0; i < fit.n; ++i) {
            const double e = ys[i] - (fit.intercept + fit.slope * xs[i]);
            sse += e * e;
        }
        fit.r_squared = 1.0 - sse / sst;
    }
    return fit;
}

}  // namespace detail

/// Finite-horizon summability test. The verdict is a tail heuristic: the
/// increments a_n = lambda_n beta_n h_C(p/beta_n) are fit against n on a
/// log-log scale over the last decade; decay faster than n^{-1.05} counts
/// as satisfied, decay at n^{-1} or slower (log-linear or growing partial
/// sums) as violated.
inline AcReport check_ac_condition(const Schedule& schedule, const PenaltyFn& psi, const ConstraintSpec& c,
                                   const std::vector<Vector>& p_samples, long horizon) {
    if (horizon < 1000) throw std::invalid_argument("check_ac_condition: horizon must be at least 1000");
    AcReport report;
    for (const Vector& p : p_samples) {
        AcSeries series;
        series.p = p;
        double sum = 0.0;
        bool infinite = false;
        std::vector<double> log_n, log_inc;
        const long tail_start = horizon / 10;
        long next_record = 1;
        for (long n = 1; n <= horizon && !infinite; ++n) {
            const auto [lambda_n, beta_n] = schedule_eval(schedule, n);
            const ConjugateGap h = conjugate_gap(psi, c, p / beta_n);
            if (!h.finite) {
                infinite = true;
                series.diagnostic = "h_C infinite at n=" + std::to_string(n);
                break;
            }
            const double inc = lambda_n * beta_n * std::max(h.value, 0.0);
            sum += inc;
            if (n >= next_record || n == horizon) {
                series.partial_sums.emplace_back(n, sum);
                next_record = std::max(n + 1, static_cast<long>(n * 1.05));
            }
            if (n >= tail_start && inc > 0.0) {
                log_n.push_back(std::log(static_cast<double>(n)));
                log_inc.push_back(std::log(inc));
            }
        }
        if (infinite) {
            series.verdict = AcVerdict::Violated;
        } else if (log_inc.size() < 10) {
            // all-zero tail: partial sums are flat, trivially summable
            series.verdict = AcVerdict::Satisfied;
            series.diagnostic = "tail increments vanish";
        } else {
            const auto fit = detail::least_squares_line(log_n, log_inc);
            series.tail_slope = fit.slope;
            if (fit.slope <= -1.05)
                series.verdict = AcVerdict::Satisfied;
            else if (fit.slope >= -1.0 - 1e-9)
                series.verdict = AcVerdict::Violated;
            else
                series.verdict = AcVerdict::Inconclusive;
        }
        report.series.push_back(std::move(series));
    }
    for (const auto& s : report.series) {
        if (s.verdict == AcVerdict::Violated) report.verdict = AcVerdict::Violated;
        else if (s.verdict == AcVerdict::Inconclusive && report.verdict != AcVerdict::Violated)
            report.verdict = AcVerdict::Inconclusive;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Empirical Hoelderian growth exponent.
// ---------------------------------------------------------------------------

struct HolderFit {
    double tau = 0.0;
    double rho = 0.0;
    double r_squared = 0.0;
    bool reliable = false;
};

/// Fits log Psi(x) = log(tau/rho) + rho log dist(x, C) over random probes at
/// log-spaced distances from C.
inline HolderFit fit_holder_growth(const PenaltyFn& psi, const ConstraintSpec& c, int samples, Rng& rng) {
    if (!c.has_projection()) throw std::invalid_argument("fit_holder_growth: constraint has no projection");
    if (samples < 10) throw std::invalid_argument("fit_holder_growth: need at least 10 samples");
    std::vector<double> log_dist, log_psi;
    for (int k = 0; k < samples; ++k) {
        Vector dir(psi.dim);
        for (Eigen::Index i = 0; i < psi.dim; ++i) dir[i] = rng.normal();
        Vector base(psi.dim);
        for (Eigen::Index i = 0; i < psi.dim; ++i) base[i] = rng.uniform(-5.0, 5.0);
        const Vector anchor = c.project(base);
        const double radius = std::pow(10.0, rng.uniform(-3.0, 1.0));
        const Vector x = anchor + radius * dir.normalized();
        const double dist = (x - c.project(x)).norm();
        const double value = eval_penalty(psi, x);
        if (dist <= 1e-12 || value <= 1e-300) continue;
        log_dist.push_back(std::log(dist));
        log_psi.push_back(std::log(value));
    }
    const auto fit = detail::least_squares_line(log_dist, log_psi);
    HolderFit out;
    out.rho = fit.slope;
    out.tau = out.rho > 0 ? out.rho * std::exp(fit.intercept) : 0.0;
    out.r_squared = fit.r_squared;
    out.reliable = fit.n >= 10 && fit.r_squared >= 0.9;
    return out;
}

}  // namespace sfbp
