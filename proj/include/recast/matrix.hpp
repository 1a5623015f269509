#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace recast {

using Vector = std::vector<double>;

/**
 * Dense row-major matrix of doubles. All model math in this project runs in
 * double precision; shapes are small (codebooks, single-hidden-layer MLPs),
 * so a flat std::vector backing is enough.
 */
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<Vector>& rows) {
        if (rows.empty()) return Matrix();
        Matrix m(rows.size(), rows[0].size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != m.cols_)
                throw std::invalid_argument("Matrix::from_rows: ragged input");
            for (std::size_t c = 0; c < m.cols_; ++c) m(r, c) = rows[r][c];
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const double& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    Vector row_vector(std::size_t r) const {
        return Vector(row(r), row(r) + cols_);
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double frobenius_sq() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return s;
    }

    double max_abs_diff(const Matrix& other) const {
        if (!same_shape(other))
            throw std::invalid_argument("Matrix::max_abs_diff: shape mismatch");
        double m = 0.0;
        for (std::size_t i = 0; i < data_.size(); ++i)
            m = std::max(m, std::abs(data_[i] - other.data_[i]));
        return m;
    }

    bool operator==(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline std::string shape_string(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace recast
