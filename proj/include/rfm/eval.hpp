#pragma once

#include "rfm/core.hpp"
#include "rfm/geometry.hpp"
#include "rfm/kdtree.hpp"
#include "rfm/net.hpp"
#include "rfm/parallel.hpp"

#include <optional>
#include <vector>

namespace rfm {

inline constexpr int kDefaultKnnK = 5;
inline constexpr double kDistanceFloor = 1e-12;
inline constexpr Eigen::Index kBruteForceLimit = 10'000;

/// k-NN estimate of KL(P || Q) from samples (columns):
///   (d/n) sum_i log(nu_k(i) / rho_k(i)) + log(m / (n - 1))
/// rho_k: distance from p_i to its k-th neighbour in P without p_i; nu_k: k-th neighbour in Q.
inline double knn_kl(const Mat& p, const Mat& q, int k = kDefaultKnnK, unsigned threads = 1)
{
    const Eigen::Index n = p.cols();
    const Eigen::Index m = q.cols();
    const Eigen::Index d = p.rows();
    require_dim(q.rows(), d, "knn_kl");
    if (k < 1) throw InvalidArgument("knn_kl: k must be positive");
    if (k > std::min<Eigen::Index>(n - 1, m)) {
        throw InvalidArgument("knn_kl: need more than k samples in P and at least k in Q");
    }
    if (!p.allFinite() || !q.allFinite()) throw InvalidArgument("knn_kl: non-finite sample");

    const bool brute = std::max(n, m) <= kBruteForceLimit;
    std::optional<KdTree> tree_p;
    std::optional<KdTree> tree_q;
    if (!brute) {
        tree_p.emplace(p);
        tree_q.emplace(q);
    }
    std::vector<double> terms(static_cast<std::size_t>(n));
    constexpr std::size_t block = 256;
    const std::size_t n_blocks = (static_cast<std::size_t>(n) + block - 1) / block;
    parallel_for(n_blocks, threads, [&](std::size_t b) {
        const std::size_t end = std::min(static_cast<std::size_t>(n), (b + 1) * block);
        for (std::size_t i = b * block; i < end; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const double* x = p.col(ii).data();
            const double rho2 = brute ? brute_kth_squared(p, x, k, ii) : tree_p->kth_squared(x, k, ii);
            const double nu2 = brute ? brute_kth_squared(q, x, k) : tree_q->kth_squared(x, k);
            const double rho = std::max(std::sqrt(rho2), kDistanceFloor);
            const double nu = std::max(std::sqrt(nu2), kDistanceFloor);
            terms[i] = std::log(nu / rho);
        }
    });
    double sum = 0.0;
    for (double t : terms) sum += t;
    return static_cast<double>(d) / static_cast<double>(n) * sum +
           std::log(static_cast<double>(m) / static_cast<double>(n - 1));
}

/// Fraction of columns outside the domain (no tolerance; boundary points count as inside).
inline double violation_ratio(const Mat& samples, const Domain& domain)
{
    require_dim(samples.rows(), domain.dim(), "violation_ratio");
    if (samples.cols() == 0) return 0.0;
    long bad = 0;
    for (Eigen::Index i = 0; i < samples.cols(); ++i) {
        if (!domain.contains_strict(samples.col(i))) ++bad;
    }
    return static_cast<double>(bad) / static_cast<double>(samples.cols());
}

struct Histogram2d {
    int nx = 0;
    int ny = 0;
    Box range;
    std::vector<long> counts;  ///< row-major, counts[ix * ny + iy]
    long overflow = 0;         ///< samples outside the range

    long at(int ix, int iy) const { return counts[static_cast<std::size_t>(ix) * ny + iy]; }
};

/// Dense 2-D count grid; the right/top range edges belong to the last bins.
inline Histogram2d histogram2d(const Mat& samples, int nx, int ny, const Box& range)
{
    if (samples.rows() != 2) throw InvalidArgument("histogram2d: samples must be two-dimensional");
    if (nx <= 0 || ny <= 0) throw InvalidArgument("histogram2d: bin counts must be positive");
    if (range.lo.size() != 2 || range.hi.size() != 2 || !(range.hi.array() > range.lo.array()).all()) {
        throw InvalidArgument("histogram2d: invalid range");
    }
    Histogram2d h{nx, ny, range, std::vector<long>(static_cast<std::size_t>(nx) * ny, 0), 0};
    for (Eigen::Index i = 0; i < samples.cols(); ++i) {
        const double x = samples(0, i);
        const double y = samples(1, i);
        if (!(x >= range.lo(0) && x <= range.hi(0) && y >= range.lo(1) && y <= range.hi(1))) {
            ++h.overflow;
            continue;
        }
        const int ix = std::min(nx - 1, static_cast<int>((x - range.lo(0)) / (range.hi(0) - range.lo(0)) * nx));
        const int iy = std::min(ny - 1, static_cast<int>((y - range.lo(1)) / (range.hi(1) - range.lo(1)) * ny));
        ++h.counts[static_cast<std::size_t>(ix) * ny + iy];
    }
    return h;
}

struct FieldRow {
    double x = 0.0;
    double y = 0.0;
    double vx = 0.0;
    double vy = 0.0;
};

/// Velocities on a resolution x resolution lattice over the domain's bounding
/// box (edges included), keeping only lattice points inside the domain.
inline std::vector<FieldRow> velocity_field_grid(const VelocityNet& net, const Domain& domain, double t,
                                                 int resolution, std::optional<int> label = std::nullopt)
{
    if (domain.dim() != 2 || net.dim() != 2) throw InvalidArgument("velocity_field_grid: needs d = 2");
    if (resolution < 2) throw InvalidArgument("velocity_field_grid: resolution must be at least 2");
    const Box box = domain.bounding_box();
    std::vector<Point> inside;
    for (int i = 0; i < resolution; ++i) {
        for (int j = 0; j < resolution; ++j) {
            Point p(2);
            p << box.lo(0) + (box.hi(0) - box.lo(0)) * i / (resolution - 1),
                box.lo(1) + (box.hi(1) - box.lo(1)) * j / (resolution - 1);
            if (domain.contains_strict(p)) inside.push_back(p);
        }
    }
    std::vector<FieldRow> rows;
    if (inside.empty()) return rows;
    Mat x(2, static_cast<Eigen::Index>(inside.size()));
    for (std::size_t i = 0; i < inside.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = inside[i];
    const Mat v = net.forward_shared(x, t, label);
    rows.reserve(inside.size());
    for (Eigen::Index i = 0; i < x.cols(); ++i) rows.push_back({x(0, i), x(1, i), v(0, i), v(1, i)});
    return rows;
}

}  // namespace rfm
