#pragma once

#include "rfm/core.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <vector>

namespace rfm {

/// Squared Euclidean distance, summed in coordinate order. Brute force and
/// the tree both use it so their neighbor distances agree bitwise.
inline double squared_distance(const double* a, const double* b, Eigen::Index d)
{
    double s = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
        const double diff = a[j] - b[j];
        s += diff * diff;
    }
    return s;
}

/// Exact k-nearest-neighbour search over the columns of a matrix.
class KdTree {
public:
    explicit KdTree(const Mat& points, int leaf_size = 16) : pts_(points), leaf_(std::max(1, leaf_size))
    {
        idx_.resize(static_cast<std::size_t>(pts_.cols()));
        std::iota(idx_.begin(), idx_.end(), Eigen::Index{0});
        if (!idx_.empty()) build(0, idx_.size());
    }

    Eigen::Index size() const { return pts_.cols(); }

    /// Squared distance to the k-th nearest point, skipping column `exclude` (-1 for none).
    double kth_squared(const double* q, int k, Eigen::Index exclude = -1) const
    {
        std::priority_queue<double> heap;
        if (!nodes_.empty()) search(0, q, static_cast<std::size_t>(k), exclude, heap);
        if (heap.size() < static_cast<std::size_t>(k)) throw InvalidArgument("KdTree: fewer than k points");
        return heap.top();
    }

private:
    struct Node {
        std::size_t begin, end;
        Eigen::Index axis = -1;  // -1 marks a leaf
        double split = 0.0;
        int left = -1, right = -1;
    };

    int build(std::size_t begin, std::size_t end)
    {
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back({begin, end});
        if (end - begin <= static_cast<std::size_t>(leaf_)) return id;

        const Eigen::Index d = pts_.rows();
        Eigen::Index axis = 0;
        double best_spread = -1.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            double lo = pts_(j, idx_[begin]), hi = lo;
            for (std::size_t i = begin; i < end; ++i) {
                lo = std::min(lo, pts_(j, idx_[i]));
                hi = std::max(hi, pts_(j, idx_[i]));
            }
            if (hi - lo > best_spread) {
                best_spread = hi - lo;
                axis = j;
            }
        }
        if (best_spread <= 0.0) return id;  // all points coincide

        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(idx_.begin() + static_cast<std::ptrdiff_t>(begin),
                         idx_.begin() + static_cast<std::ptrdiff_t>(mid),
                         idx_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](Eigen::Index a, Eigen::Index b) { return pts_(axis, a) < pts_(axis, b); });
        const double split = pts_(axis, idx_[mid]);
        const int left = build(begin, mid);
        const int right = build(mid, end);
        nodes_[static_cast<std::size_t>(id)].axis = axis;
        nodes_[static_cast<std::size_t>(id)].split = split;
        nodes_[static_cast<std::size_t>(id)].left = left;
        nodes_[static_cast<std::size_t>(id)].right = right;
        return id;
    }

    void search(int id, const double* q, std::size_t k, Eigen::Index exclude, std::priority_queue<double>& heap) const
    {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.axis < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i) {
                const Eigen::Index p = idx_[i];
                if (p == exclude) continue;
                const double d2 = squared_distance(q, pts_.col(p).data(), pts_.rows());
                if (heap.size() < k) {
                    heap.push(d2);
                } else if (d2 < heap.top()) {
                    heap.pop();
                    heap.push(d2);
                }
            }
            return;
        }
        const double diff = q[n.axis] - n.split;
        const int near = diff < 0.0 ? n.left : n.right;
        const int far = diff < 0.0 ? n.right : n.left;
        search(near, q, k, exclude, heap);
        if (heap.size() < k || diff * diff <= heap.top()) search(far, q, k, exclude, heap);
    }

    Mat pts_;
    int leaf_;
    std::vector<Eigen::Index> idx_;
    std::vector<Node> nodes_;
};

/// Brute-force reference for KdTree::kth_squared.
inline double brute_kth_squared(const Mat& pts, const double* q, int k, Eigen::Index exclude = -1)
{
    std::vector<double> d2;
    d2.reserve(static_cast<std::size_t>(pts.cols()));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        if (i != exclude) d2.push_back(squared_distance(q, pts.col(i).data(), pts.rows()));
    }
    if (d2.size() < static_cast<std::size_t>(k)) throw InvalidArgument("brute force: fewer than k points");
    std::nth_element(d2.begin(), d2.begin() + (k - 1), d2.end());
    return d2[static_cast<std::size_t>(k - 1)];
}

}  // namespace rfm
