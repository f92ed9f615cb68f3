#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "omd/common.hpp"

namespace omd {

// Dense row-major matrix of doubles. All model math runs in 64-bit floats.
class Mat {
public:
    Mat() = default;
    Mat(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), a_(static_cast<std::size_t>(rows) * cols, fill) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return a_.size(); }

    double& operator()(int r, int c) { return a_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return a_[static_cast<std::size_t>(r) * cols_ + c]; }

    double* data() { return a_.data(); }
    const double* data() const { return a_.data(); }

    double* row(int r) { return a_.data() + static_cast<std::size_t>(r) * cols_; }
    const double* row(int r) const { return a_.data() + static_cast<std::size_t>(r) * cols_; }

    void fill(double v) { std::fill(a_.begin(), a_.end(), v); }

    bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (double v : a_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::uint64_t checksum() const {
        return fnv1a64(a_.data(), a_.size() * sizeof(double));
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> a_;
};

inline std::string shape_str(const Mat& m) {
    return "(" + std::to_string(m.rows()) + ", " + std::to_string(m.cols()) + ")";
}

// out = a * b
inline Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + shape_str(a) + " x " + shape_str(b));
    Mat out(a.rows(), b.cols(), 0.0);
    for (int i = 0; i < a.rows(); ++i) {
        for (int k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            double* orow = out.row(i);
            for (int j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

// out = a * b^T
inline Mat matmul_bt(const Mat& a, const Mat& b) {
    if (a.cols() != b.cols())
        throw ShapeError("matmul_bt: " + shape_str(a) + " x " + shape_str(b) + "^T");
    Mat out(a.rows(), b.rows(), 0.0);
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < b.rows(); ++j) {
            double s = 0.0;
            const double* ar = a.row(i);
            const double* br = b.row(j);
            for (int k = 0; k < a.cols(); ++k) s += ar[k] * br[k];
            out(i, j) = s;
        }
    return out;
}

// out = a^T * b
inline Mat matmul_at(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows())
        throw ShapeError("matmul_at: " + shape_str(a) + "^T x " + shape_str(b));
    Mat out(a.cols(), b.cols(), 0.0);
    for (int k = 0; k < a.rows(); ++k)
        for (int i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            const double* brow = b.row(k);
            double* orow = out.row(i);
            for (int j = 0; j < b.cols(); ++j) orow[j] += aki * brow[j];
        }
    return out;
}

inline void add_inplace(Mat& a, const Mat& b) {
    if (!a.same_shape(b)) throw ShapeError("add: " + shape_str(a) + " + " + shape_str(b));
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

inline void axpy_inplace(Mat& a, double alpha, const Mat& b) {
    if (!a.same_shape(b)) throw ShapeError("axpy: " + shape_str(a) + " + " + shape_str(b));
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += alpha * b.data()[i];
}

// Adds the 1-row bias to every row of a.
inline void add_row_inplace(Mat& a, const Mat& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols())
        throw ShapeError("add_row: " + shape_str(a) + " + " + shape_str(bias));
    for (int i = 0; i < a.rows(); ++i) {
        double* r = a.row(i);
        for (int j = 0; j < a.cols(); ++j) r[j] += bias(0, j);
    }
}

inline void scale_inplace(Mat& a, double s) {
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] *= s;
}

inline Mat transpose(const Mat& a) {
    Mat out(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace omd
