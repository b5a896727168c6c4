#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sfbp/sparse.hpp"

namespace sfbp {

/// Exact pixel-intersection weights for one ray through an image_side x
/// image_side grid of unit pixels covering [0, s]^2. The ray has direction
/// (cos angle, sin angle) and passes through center + offset * normal with
/// normal = (-sin angle, cos angle). Row entries are the chord lengths of the
/// ray inside each pixel it crosses (Siddon-style traversal).
inline std::vector<std::pair<std::int64_t, double>> radon_row(double angle, double detector_offset,
                                                              std::int64_t image_side) {
    if (image_side < 1) throw std::invalid_argument("radon_row: image_side must be positive");
    const double s = static_cast<double>(image_side);
    const double cx = 0.5 * s, cy = 0.5 * s;
    const double dx = std::cos(angle), dy = std::sin(angle);
    const double px = cx - detector_offset * std::sin(angle);
    const double py = cy + detector_offset * std::cos(angle);

    // clip the line p + t d to the image square
    double t_min = -std::numeric_limits<double>::infinity();
    double t_max = std::numeric_limits<double>::infinity();
    const auto clip = [&](double p0, double d0) {
        if (std::abs(d0) < 1e-14) {
            if (p0 < 0.0 || p0 > s) t_min = 1.0, t_max = 0.0;  // parallel and outside
            return;
        }
        double t0 = (0.0 - p0) / d0, t1 = (s - p0) / d0;
        if (t0 > t1) std::swap(t0, t1);
        t_min = std::max(t_min, t0);
        t_max = std::min(t_max, t1);
    };
    clip(px, dx);
    clip(py, dy);
    std::vector<std::pair<std::int64_t, double>> row;
    if (!(t_max > t_min)) return row;

    // all grid-line crossing parameters inside (t_min, t_max)
    std::vector<double> ts;
    ts.reserve(2 * image_side + 2);
    ts.push_back(t_min);
    ts.push_back(t_max);
    const auto crossings = [&](double p0, double d0) {
        if (std::abs(d0) < 1e-14) return;
        for (std::int64_t k = 0; k <= image_side; ++k) {
            const double t = (static_cast<double>(k) - p0) / d0;
            if (t > t_min && t < t_max) ts.push_back(t);
        }
    };
    crossings(px, dx);
    crossings(py, dy);
    std::sort(ts.begin(), ts.end());

    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        const double len = ts[k + 1] - ts[k];
        if (len <= 1e-14) continue;
        const double tm = 0.5 * (ts[k] + ts[k + 1]);
        const auto col = static_cast<std::int64_t>(std::floor(px + tm * dx));
        const auto rowpix = static_cast<std::int64_t>(std::floor(py + tm * dy));
        if (col < 0 || col >= image_side || rowpix < 0 || rowpix >= image_side) continue;
        row.emplace_back(rowpix * image_side + col, len);
    }
    std::sort(row.begin(), row.end());
    return row;
}

enum class Phantom { SheppLoganLike, Blocks, Zero };

/// Piecewise-smooth test image on the unit pixel grid, flattened row-major.
inline Eigen::VectorXd make_phantom(std::int64_t image_side, Phantom kind) {
    const double s = static_cast<double>(image_side);
    Eigen::VectorXd img = Eigen::VectorXd::Zero(image_side * image_side);
    if (kind == Phantom::Zero) return img;
    const auto at = [&](std::int64_t i, std::int64_t j) -> double& { return img[i * image_side + j]; };
    if (kind == Phantom::Blocks) {
        // three axis-aligned rectangles, positions in fractions of the side
        const auto fill = [&](double r0, double r1, double c0, double c1, double v) {
            for (auto i = static_cast<std::int64_t>(r0 * s); i < static_cast<std::int64_t>(r1 * s); ++i)
                for (auto j = static_cast<std::int64_t>(c0 * s); j < static_cast<std::int64_t>(c1 * s); ++j)
                    at(i, j) += v;
        };
        fill(0.15, 0.45, 0.20, 0.40, 1.0);
        fill(0.55, 0.85, 0.55, 0.80, 0.7);
        fill(0.30, 0.50, 0.60, 0.75, 0.5);
        return img;
    }
    // nested-ellipse phantom: bright shell, dimmer interior, two inclusions
    struct Ellipse {
        double cx, cy, ax, ay, theta, value;
    };
    const Ellipse parts[] = {
        {0.50, 0.50, 0.42, 0.36, 0.0, 1.0},   {0.50, 0.50, 0.38, 0.32, 0.0, -0.5},
        {0.38, 0.45, 0.08, 0.14, 0.3, 0.4},   {0.62, 0.45, 0.08, 0.14, -0.3, 0.4},
        {0.50, 0.68, 0.10, 0.06, 0.0, 0.3},
    };
    for (std::int64_t i = 0; i < image_side; ++i) {
        for (std::int64_t j = 0; j < image_side; ++j) {
            const double x = (static_cast<double>(j) + 0.5) / s;
            const double y = (static_cast<double>(i) + 0.5) / s;
            for (const auto& e : parts) {
                const double u = std::cos(e.theta) * (x - e.cx) + std::sin(e.theta) * (y - e.cy);
                const double v = -std::sin(e.theta) * (x - e.cx) + std::cos(e.theta) * (y - e.cy);
                if ((u / e.ax) * (u / e.ax) + (v / e.ay) * (v / e.ay) <= 1.0) at(i, j) += e.value;
            }
        }
    }
    return img;
}

/// Sparse forward projector: one row per (angle, detector) pair, angles
/// i pi / M, detector offsets equispaced across the image diagonal.
inline CsrMatrix make_radon_matrix(std::int64_t image_side, int n_angles, int n_detectors) {
    if (image_side < 8) throw std::invalid_argument("make_radon_matrix: image_side must be at least 8");
    if (n_angles < 1 || n_detectors < 1) throw std::invalid_argument("make_radon_matrix: invalid dims");
    const double s = static_cast<double>(image_side);
    const double diag = s * std::sqrt(2.0);
    CsrMatrix a(static_cast<std::int64_t>(n_angles) * n_detectors, image_side * image_side);
    for (int i = 0; i < n_angles; ++i) {
        const double angle = M_PI * static_cast<double>(i) / static_cast<double>(n_angles);
        for (int k = 0; k < n_detectors; ++k) {
            const double offset = -0.5 * diag + diag * (static_cast<double>(k) + 0.5) / static_cast<double>(n_detectors);
            a.append_row(radon_row(angle, offset, image_side));
        }
    }
    a.validate();
    return a;
}

}  // namespace sfbp
