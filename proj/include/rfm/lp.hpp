#pragma once

// Small dense linear-programming solver used to validate polytope domains
// (strict feasibility, boundedness, bounding box). Problem sizes here are tiny.

#include "rfm/core.hpp"

#include <limits>
#include <vector>

namespace rfm::lp {

enum class Status { optimal, infeasible, unbounded };

struct Result {
    Status status = Status::infeasible;
    Vec x;
    double value = 0.0;
};

namespace detail {

inline constexpr double kPivotTol = 1e-11;

inline void pivot(Mat& t, std::vector<int>& basis, Eigen::Index row, Eigen::Index col)
{
    t.row(row) /= t(row, col);
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        if (i != row && t(i, col) != 0.0) {
            t.row(i) -= t(i, col) * t.row(row);
        }
    }
    basis[static_cast<std::size_t>(row)] = static_cast<int>(col);
}

// Reduced-cost row for maximising c over the current basis.
inline void price(Mat& t, const std::vector<int>& basis, const Vec& c)
{
    const Eigen::Index m = t.rows() - 1;
    const Eigen::Index n = t.cols() - 1;
    t.row(m).setZero();
    for (Eigen::Index j = 0; j < n; ++j) t(m, j) = -c(j);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double cb = c(basis[static_cast<std::size_t>(i)]);
        if (cb != 0.0) t.row(m) += cb * t.row(i);
    }
}

// Bland's rule; returns false when the objective is unbounded.
inline bool iterate(Mat& t, std::vector<int>& basis, Eigen::Index allowed_cols)
{
    const Eigen::Index m = t.rows() - 1;
    const Eigen::Index rhs = t.cols() - 1;
    for (;;) {
        Eigen::Index enter = -1;
        for (Eigen::Index j = 0; j < allowed_cols; ++j) {
            if (t(m, j) < -kPivotTol) {
                enter = j;
                break;
            }
        }
        if (enter < 0) return true;
        Eigen::Index leave = -1;
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < m; ++i) {
            if (t(i, enter) > kPivotTol) {
                const double ratio = t(i, rhs) / t(i, enter);
                if (ratio < best - 1e-15 ||
                    (ratio <= best + 1e-15 && leave >= 0 &&
                     basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
                    best = ratio;
                    leave = i;
                }
            }
        }
        if (leave < 0) return false;
        pivot(t, basis, leave, enter);
    }
}

}  // namespace detail

/// maximise c.x subject to A x <= b with x unrestricted in sign.
inline Result maximize(const Vec& c, const Mat& a, const Vec& b)
{
    const Eigen::Index m = a.rows();
    const Eigen::Index n = a.cols();
    require_dim(c.size(), n, "lp::maximize objective");
    require_dim(b.size(), m, "lp::maximize rhs");

    // Columns: u (n) | v (n) | slack (m) | artificial (m) | rhs, with x = u - v.
    const Eigen::Index n_struct = 2 * n + m;
    const Eigen::Index n_total = n_struct + m;
    Mat t = Mat::Zero(m + 1, n_total + 1);
    std::vector<int> basis(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
        const double sign = b(i) >= 0.0 ? 1.0 : -1.0;
        t.block(i, 0, 1, n) = sign * a.row(i);
        t.block(i, n, 1, n) = -sign * a.row(i);
        t(i, 2 * n + i) = sign;
        t(i, n_total) = sign * b(i);
        if (sign > 0.0) {
            basis[static_cast<std::size_t>(i)] = static_cast<int>(2 * n + i);
        } else {
            t(i, n_struct + i) = 1.0;
            basis[static_cast<std::size_t>(i)] = static_cast<int>(n_struct + i);
        }
    }

    Vec phase1 = Vec::Zero(n_total);
    phase1.tail(m).setConstant(-1.0);
    detail::price(t, basis, phase1);
    detail::iterate(t, basis, n_total);
    if (t(m, n_total) < -1e-9) return {Status::infeasible, {}, 0.0};

    for (Eigen::Index i = 0; i < m; ++i) {
        if (basis[static_cast<std::size_t>(i)] >= n_struct) {
            for (Eigen::Index j = 0; j < n_struct; ++j) {
                if (std::abs(t(i, j)) > detail::kPivotTol) {
                    detail::pivot(t, basis, i, j);
                    break;
                }
            }
        }
    }

    Vec phase2 = Vec::Zero(n_total);
    phase2.head(n) = c;
    phase2.segment(n, n) = -c;
    detail::price(t, basis, phase2);
    if (!detail::iterate(t, basis, n_struct)) return {Status::unbounded, {}, 0.0};

    Vec z = Vec::Zero(n_total);
    for (Eigen::Index i = 0; i < m; ++i) z(basis[static_cast<std::size_t>(i)]) = t(i, n_total);
    Vec x = z.head(n) - z.segment(n, n);
    return {Status::optimal, x, c.dot(x)};
}

}  // namespace rfm::lp
