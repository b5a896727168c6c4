#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sfbp/rng.hpp"

namespace sfbp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline void require_finite(const Vector& x, const char* what) {
    if (!x.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite input");
}

enum class OpKind {
    Zero,
    L1,             // subdifferential of ||x||_1
    WeightedL1,     // subdifferential of sum_i w_i |x_i|
    TranslatedL1,   // subdifferential of ||x - shift||_1
    BoxNormalCone,  // normal cone of a box [lo, hi]
    Affine,         // x -> M x + q with M + M^T positive semidefinite
    SumSeparable,   // one l1-family part plus one box normal cone, acting componentwise
};

/// Maximally monotone operator, represented through its resolvent and a
/// membership oracle for graph sampling. The set of kinds is a closed
/// enumeration with closed-form resolvents; the affine kind solves a dense
/// system and is limited to dimension 2000.
struct MonotoneOp {
    OpKind kind = OpKind::Zero;
    Vector weights;       // WeightedL1
    Vector shift;         // TranslatedL1
    Vector box_lo, box_hi;  // BoxNormalCone
    Matrix mat;           // Affine
    Vector offset;        // Affine
    std::vector<MonotoneOp> parts;  // SumSeparable

    static MonotoneOp zero() { return {}; }

    static MonotoneOp l1() {
        MonotoneOp op;
        op.kind = OpKind::L1;
        return op;
    }

    static MonotoneOp weighted_l1(Vector w) {
        if ((w.array() < 0).any()) throw std::invalid_argument("weighted_l1: negative weight");
        MonotoneOp op;
        op.kind = OpKind::WeightedL1;
        op.weights = std::move(w);
        return op;
    }

    static MonotoneOp translated_l1(Vector s) {
        MonotoneOp op;
        op.kind = OpKind::TranslatedL1;
        op.shift = std::move(s);
        return op;
    }

    static MonotoneOp box_normal_cone(Vector lo, Vector hi) {
        if (lo.size() != hi.size() || (lo.array() > hi.array()).any())
            throw std::invalid_argument("box_normal_cone: invalid bounds");
        MonotoneOp op;
        op.kind = OpKind::BoxNormalCone;
        op.box_lo = std::move(lo);
        op.box_hi = std::move(hi);
        return op;
    }

    static MonotoneOp affine(Matrix m, Vector q) {
        if (m.rows() != m.cols() || m.rows() != q.size()) throw std::invalid_argument("affine: shape mismatch");
        if (m.rows() > 2000) throw std::invalid_argument("affine: dimension limit is 2000");
        // monotonicity of x -> Mx + q means M + M^T >= 0
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
        if (es.eigenvalues().minCoeff() < -1e-10 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff()))
            throw std::invalid_argument("affine: M + M^T is not positive semidefinite");
        MonotoneOp op;
        op.kind = OpKind::Affine;
        op.mat = std::move(m);
        op.offset = std::move(q);
        return op;
    }

    static MonotoneOp sum(std::vector<MonotoneOp> components) {
        int n_l1 = 0, n_box = 0;
        for (const auto& p : components) {
            switch (p.kind) {
                case OpKind::L1:
                case OpKind::WeightedL1:
                case OpKind::TranslatedL1:
                    ++n_l1;
                    break;
                case OpKind::BoxNormalCone:
                    ++n_box;
                    break;
                case OpKind::Zero:
                    break;
                default:
                    throw std::invalid_argument("sum: only separable parts are supported");
            }
        }
        if (n_l1 > 1 || n_box > 1) throw std::invalid_argument("sum: at most one l1-family and one box part");
        MonotoneOp op;
        op.kind = OpKind::SumSeparable;
        op.parts = std::move(components);
        return op;
    }
};

namespace detail {

inline double soft_threshold(double x, double thresh, double center) {
    const double r = x - center;
    if (r > thresh) return x - thresh;
    if (r < -thresh) return x + thresh;
    return center;
}

}  // namespace detail

/// p = (Id + lambda A)^{-1}(x), written into `out` (may not alias x for Affine).
inline void resolvent_inplace(const MonotoneOp& op, double lambda, const Vector& x, Vector& out) {
    if (lambda <= 0) throw std::invalid_argument("resolvent: lambda must be positive");
    require_finite(x, "resolvent");
    switch (op.kind) {
        case OpKind::Zero:
            out = x;
            break;
        case OpKind::L1:
            out.resize(x.size());
            for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = detail::soft_threshold(x[i], lambda, 0.0);
            break;
        case OpKind::WeightedL1:
            if (op.weights.size() != x.size()) throw std::invalid_argument("resolvent: weight dimension mismatch");
            out.resize(x.size());
            for (Eigen::Index i = 0; i < x.size(); ++i)
                out[i] = detail::soft_threshold(x[i], lambda * op.weights[i], 0.0);
            break;
        case OpKind::TranslatedL1:
            if (op.shift.size() != x.size()) throw std::invalid_argument("resolvent: shift dimension mismatch");
            out.resize(x.size());
            for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = detail::soft_threshold(x[i], lambda, op.shift[i]);
            break;
        case OpKind::BoxNormalCone:
            // resolvent of a normal cone is the Euclidean projection
            if (op.box_lo.size() != x.size()) throw std::invalid_argument("resolvent: box dimension mismatch");
            out = x.cwiseMax(op.box_lo).cwiseMin(op.box_hi);
            break;
        case OpKind::Affine: {
            if (op.mat.rows() != x.size()) throw std::invalid_argument("resolvent: affine dimension mismatch");
            Matrix lhs = Matrix::Identity(x.size(), x.size()) + lambda * op.mat;
            out = lhs.partialPivLu().solve(x - lambda * op.offset);
            break;
        }
        case OpKind::SumSeparable: {
            // prox of (w|x-s| + indicator of box) per coordinate: clamp after shrinkage
            out = x;
            Vector tmp;
            for (const auto& p : op.parts) {
                if (p.kind == OpKind::BoxNormalCone) continue;
                resolvent_inplace(p, lambda, out, tmp);
                out.swap(tmp);
            }
            for (const auto& p : op.parts)
                if (p.kind == OpKind::BoxNormalCone) out = out.cwiseMax(p.box_lo).cwiseMin(p.box_hi);
            break;
        }
    }
}

inline Vector resolvent(const MonotoneOp& op, double lambda, const Vector& x) {
    Vector out;
    resolvent_inplace(op, lambda, x, out);
    return out;
}

/// The convex potential for subdifferential kinds (used by probe tests);
/// returns false when the operator is not a plain subdifferential.
inline bool potential_value(const MonotoneOp& op, const Vector& x, double& value) {
    switch (op.kind) {
        case OpKind::Zero:
            value = 0.0;
            return true;
        case OpKind::L1:
            value = x.lpNorm<1>();
            return true;
        case OpKind::WeightedL1:
            value = (op.weights.array() * x.array().abs()).sum();
            return true;
        case OpKind::TranslatedL1:
            value = (x - op.shift).lpNorm<1>();
            return true;
        default:
            return false;
    }
}

/// An element of A(y) for the supported kinds. For l1-family kinds the value
/// on zero coordinates is drawn uniformly from the valid subgradient interval.
inline Vector sample_operator_element(const MonotoneOp& op, const Vector& y, Rng& rng, double zero_tol = 1e-12) {
    switch (op.kind) {
        case OpKind::Zero:
            return Vector::Zero(y.size());
        case OpKind::L1:
        case OpKind::WeightedL1:
        case OpKind::TranslatedL1: {
            Vector v(y.size());
            for (Eigen::Index i = 0; i < y.size(); ++i) {
                const double w = op.kind == OpKind::WeightedL1 ? op.weights[i] : 1.0;
                const double r = op.kind == OpKind::TranslatedL1 ? y[i] - op.shift[i] : y[i];
                if (r > zero_tol)
                    v[i] = w;
                else if (r < -zero_tol)
                    v[i] = -w;
                else
                    v[i] = w * rng.uniform(-1.0, 1.0);
            }
            return v;
        }
        case OpKind::BoxNormalCone: {
            Vector v = Vector::Zero(y.size());
            for (Eigen::Index i = 0; i < y.size(); ++i) {
                if (y[i] >= op.box_hi[i] - zero_tol && y[i] <= op.box_hi[i] + zero_tol)
                    v[i] = rng.uniform(0.0, 1.0);
                if (y[i] >= op.box_lo[i] - zero_tol && y[i] <= op.box_lo[i] + zero_tol)
                    v[i] = -rng.uniform(0.0, 1.0);
                if (y[i] < op.box_lo[i] - zero_tol || y[i] > op.box_hi[i] + zero_tol)
                    throw std::invalid_argument("sample_operator_element: point outside box domain");
            }
            return v;
        }
        case OpKind::Affine:
            return op.mat * y + op.offset;
        case OpKind::SumSeparable: {
            Vector v = Vector::Zero(y.size());
            for (const auto& p : op.parts) v += sample_operator_element(p, y, rng, zero_tol);
            return v;
        }
    }
    throw std::logic_error("sample_operator_element: unreachable");
}

struct FirmNonexpansiveReport {
    double max_violation = -std::numeric_limits<double>::infinity();
};

/// max over pairs of ||Jx - Jy||^2 - <Jx - Jy, x - y>; nonpositive (up to
/// roundoff) for resolvents of monotone operators.
inline FirmNonexpansiveReport check_firm_nonexpansive(const MonotoneOp& op, double lambda,
                                                      const std::vector<std::pair<Vector, Vector>>& pairs) {
    if (lambda <= 0) throw std::invalid_argument("check_firm_nonexpansive: lambda must be positive");
    FirmNonexpansiveReport report;
    Vector jx, jy;
    for (const auto& [x, y] : pairs) {
        resolvent_inplace(op, lambda, x, jx);
        resolvent_inplace(op, lambda, y, jy);
        const Vector d = jx - jy;
        report.max_violation = std::max(report.max_violation, d.squaredNorm() - d.dot(x - y));
    }
    return report;
}

}  // namespace sfbp
