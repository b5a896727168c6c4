#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sfbp/operators.hpp"
#include "sfbp/penalty.hpp"
#include "sfbp/rng.hpp"

namespace sfbp {

/// Diffusion coefficient envelope. Off is the deterministic scheme; UBV keeps
/// ||sigma(t, x)||_F <= sigma_star uniformly; ASV decays like
/// sigma0 (1 + t)^{-q} with q > 1/2 so the quadratic variation integral
/// converges.
struct NoiseModel {
    enum class Regime { Off, Ubv, Asv };

    Regime regime = Regime::Off;
    double sigma_star = 0.0;  // Ubv level
    double sigma0 = 0.0;      // Asv level at t = 0
    double q = 1.0;           // Asv decay exponent
    Eigen::Index m = 0;       // noise dimension (diagonal scaling of R^m)

    static NoiseModel off(Eigen::Index m) {
        NoiseModel nm;
        nm.regime = Regime::Off;
        nm.m = m;
        return nm;
    }

    static NoiseModel ubv(double sigma_star, Eigen::Index m) {
        if (sigma_star < 0) throw std::invalid_argument("noise ubv: sigma_star must be nonnegative");
        NoiseModel nm;
        nm.regime = Regime::Ubv;
        nm.sigma_star = sigma_star;
        nm.m = m;
        return nm;
    }

    static NoiseModel asv(double sigma0, double q, Eigen::Index m) {
        if (sigma0 < 0) throw std::invalid_argument("noise asv: sigma0 must be nonnegative");
        if (q <= 0.5) throw std::invalid_argument("noise asv: decay exponent must exceed 1/2");
        NoiseModel nm;
        nm.regime = Regime::Asv;
        nm.sigma0 = sigma0;
        nm.q = q;
        nm.m = m;
        return nm;
    }

    /// Scalar diffusion coefficient at time t (state-independent models).
    double scale(double t) const {
        switch (regime) {
            case Regime::Off: return 0.0;
            case Regime::Ubv: return sigma_star;
            case Regime::Asv: return sigma0 * std::pow(1.0 + t, -q);
        }
        return 0.0;
    }

    /// ||sigma(t, .)||_F for the diagonal scalar model.
    double frobenius(double t) const { return scale(t) * std::sqrt(static_cast<double>(m)); }
};

/// Gaussian increment with covariance dt * Id on R^m.
inline Vector brownian_increment(Rng& rng, double dt, Eigen::Index m) {
    if (dt < 0) throw std::invalid_argument("brownian_increment: dt must be nonnegative");
    if (m < 1) throw std::invalid_argument("brownian_increment: dimension must be positive");
    Vector dw(m);
    const double sd = std::sqrt(dt);
    for (Eigen::Index i = 0; i < m; ++i) dw[i] = sd * rng.normal();
    return dw;
}

/// sigma(t, x) applied to a Brownian increment; scalar diagonal model.
inline Vector diffusion_apply(const NoiseModel& noise, double t, const Vector& x, const Vector& dw) {
    if (dw.size() != noise.m) throw std::invalid_argument("diffusion_apply: increment dimension mismatch");
    if (x.size() != noise.m) throw std::invalid_argument("diffusion_apply: state dimension mismatch");
    return noise.scale(t) * dw;
}

/// Unbiased minibatch estimate of grad Psi for least-squares penalties:
/// (m / |B|) sum_{j in B} a_j (A x - y)_j. Requires a row-accessible matrix.
inline Vector minibatch_gradient(const PenaltyFn& psi, const Vector& x, const std::vector<std::int64_t>& batch) {
    if (psi.kind != PenaltyKind::LeastSquares)
        throw std::invalid_argument("minibatch_gradient: least-squares penalties only");
    if (batch.empty()) throw std::invalid_argument("minibatch_gradient: empty batch");
    const std::int64_t m = psi.sparse_mat ? psi.sparse_mat->rows : psi.dense_mat.rows();
    Vector g = Vector::Zero(psi.dim);
    const double scale = static_cast<double>(m) / static_cast<double>(batch.size());
    for (std::int64_t j : batch) {
        if (j < 0 || j >= m) throw std::invalid_argument("minibatch_gradient: row index out of range");
        if (psi.sparse_mat) {
            const double r = psi.sparse_mat->row_dot(j, x) - psi.rhs[j];
            psi.sparse_mat->add_scaled_row(j, scale * r, g);
        } else {
            const double r = psi.dense_mat.row(j).dot(x) - psi.rhs[j];
            g += (scale * r) * psi.dense_mat.row(j).transpose();
        }
    }
    return g;
}

/// Uniform batch of row indices, drawn with replacement.
inline std::vector<std::int64_t> draw_batch(Rng& rng, std::int64_t m_rows, int batch_size) {
    if (batch_size < 1) throw std::invalid_argument("draw_batch: batch size must be positive");
    std::vector<std::int64_t> batch(batch_size);
    for (auto& j : batch) j = static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(m_rows)));
    return batch;
}

}  // namespace sfbp
