#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace sfbp {

/// Compressed sparse row matrix with just the operations the solver needs:
/// products with the matrix and its transpose, single-row products, and a
/// dense conversion for small instances.
struct CsrMatrix {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<std::int64_t> row_ptr;  // size rows+1, nondecreasing
    std::vector<std::int64_t> col_idx;
    std::vector<double> values;

    CsrMatrix() = default;
    CsrMatrix(std::int64_t r, std::int64_t c) : rows(r), cols(c) {
        row_ptr.reserve(r + 1);
        row_ptr.push_back(0);
    }

    std::int64_t nnz() const { return static_cast<std::int64_t>(values.size()); }

    void validate() const {
        if (static_cast<std::int64_t>(row_ptr.size()) != rows + 1)
            throw std::invalid_argument("csr: row_ptr size mismatch");
        for (std::int64_t i = 0; i < rows; ++i)
            if (row_ptr[i] > row_ptr[i + 1]) throw std::invalid_argument("csr: row_ptr not nondecreasing");
        if (row_ptr.back() != nnz()) throw std::invalid_argument("csr: row_ptr tail mismatch");
        for (std::size_t k = 0; k < values.size(); ++k) {
            if (col_idx[k] < 0 || col_idx[k] >= cols) throw std::invalid_argument("csr: column index out of range");
            if (!std::isfinite(values[k])) throw std::invalid_argument("csr: non-finite value");
        }
    }

    Eigen::VectorXd multiply(const Eigen::VectorXd& x) const {
        if (x.size() != cols) throw std::invalid_argument("csr multiply: dimension mismatch");
        Eigen::VectorXd out = Eigen::VectorXd::Zero(rows);
        for (std::int64_t i = 0; i < rows; ++i) {
            double acc = 0.0;
            for (std::int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) acc += values[k] * x[col_idx[k]];
            out[i] = acc;
        }
        return out;
    }

    Eigen::VectorXd multiply_transpose(const Eigen::VectorXd& u) const {
        if (u.size() != rows) throw std::invalid_argument("csr multiply_transpose: dimension mismatch");
        Eigen::VectorXd out = Eigen::VectorXd::Zero(cols);
        for (std::int64_t i = 0; i < rows; ++i) {
            const double ui = u[i];
            if (ui == 0.0) continue;
            for (std::int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) out[col_idx[k]] += values[k] * ui;
        }
        return out;
    }

    double row_dot(std::int64_t i, const Eigen::VectorXd& x) const {
        double acc = 0.0;
        for (std::int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) acc += values[k] * x[col_idx[k]];
        return acc;
    }

    /// out += scale * row(i)
    void add_scaled_row(std::int64_t i, double scale, Eigen::VectorXd& out) const {
        for (std::int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) out[col_idx[k]] += scale * values[k];
    }

    double frobenius_norm() const {
        double acc = 0.0;
        for (double v : values) acc += v * v;
        return std::sqrt(acc);
    }

    Eigen::MatrixXd to_dense() const {
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
        for (std::int64_t i = 0; i < rows; ++i)
            for (std::int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) out(i, col_idx[k]) += values[k];
        return out;
    }

    /// Append a row given as (column, value) pairs. Rows must be appended in order.
    void append_row(const std::vector<std::pair<std::int64_t, double>>& entries) {
        for (const auto& [c, v] : entries) {
            if (c < 0 || c >= cols) throw std::invalid_argument("csr append_row: column out of range");
            col_idx.push_back(c);
            values.push_back(v);
        }
        row_ptr.push_back(static_cast<std::int64_t>(values.size()));
        if (static_cast<std::int64_t>(row_ptr.size()) > rows + 1) throw std::logic_error("csr append_row: too many rows");
    }
};

}  // namespace sfbp
