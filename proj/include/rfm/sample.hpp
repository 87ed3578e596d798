#pragma once

#include "rfm/core.hpp"
#include "rfm/flows.hpp"
#include "rfm/geometry.hpp"
#include "rfm/net.hpp"
#include "rfm/parallel.hpp"
#include "rfm/solvers.hpp"

#include <optional>
#include <vector>

namespace rfm {

inline constexpr int kMaxReflections = 10'000;

struct ReflectResult {
    Point x;
    int reflections = 0;
    double traversed = 0.0;  ///< total length walked; equals |x_bar - y| up to rounding
};

/// Walks the segment y -> x_bar, reflecting off the boundary until its length is
/// used up. A segment that never meets the boundary returns x_bar itself.
inline ReflectResult reflect_segment(const Domain& domain, const Point& y, const Point& x_bar)
{
    require_dim(y.size(), domain.dim(), "reflect_segment start");
    require_dim(x_bar.size(), domain.dim(), "reflect_segment end");
    if (!domain.contains(y)) throw InvalidArgument("reflect_segment: start point outside the domain");
    const Vec delta = x_bar - y;
    const double length = delta.norm();
    ReflectResult r;
    if (length == 0.0) {
        r.x = x_bar;
        return r;
    }
    Direction alpha = delta / length;
    Point cur = y;
    double remaining = length;
    for (;;) {
        const std::optional<Hit> hit = domain.ray_first_hit(cur, alpha);
        if (!hit || hit->s >= remaining) {
            r.traversed += remaining;
            r.x = r.reflections == 0 ? x_bar : Point(cur + alpha * remaining);
            break;
        }
        r.traversed += hit->s;
        remaining -= hit->s;
        cur = hit->point;
        alpha -= 2.0 * alpha.dot(hit->normal) * hit->normal;
        if (++r.reflections > kMaxReflections) {
            throw NumericalError("reflect_segment: reflection cap exceeded");
        }
    }
    if (!domain.contains_strict(r.x)) r.x = domain.clamp_inside(r.x);
    return r;
}

/// Closed-form endpoint of iterated reflection on [-1, 1]: 1 - |(x + 1) mod 4 - 2|.
/// Points already in [-1, 1] are returned as-is, matching the walk's interior no-op.
inline double fold_coordinate(double x)
{
    if (x >= -1.0 && x <= 1.0) return x;
    double m = std::fmod(x + 1.0, 4.0);
    if (m < 0.0) m += 4.0;
    return 1.0 - std::abs(m - 2.0);
}

inline Point hypercube_fold(const Point& x_bar)
{
    return x_bar.unaryExpr(&fold_coordinate);
}

/// Number of face crossings the fold performs.
inline int hypercube_fold_reflections(const Point& x_bar)
{
    int n = 0;
    for (Eigen::Index i = 0; i < x_bar.size(); ++i) {
        n += static_cast<int>(std::abs(std::floor((x_bar(i) + 1.0) / 2.0)));
    }
    return n;
}

struct GuidanceConfig {
    double weight = 1.0;
    int label = 0;
};

/// w v(x, t, c) + (1 - w) v(x, t, empty). Two network evaluations.
inline Vec guided_velocity(const VelocityNet& net, const Point& x, double t, const GuidanceConfig& g)
{
    if (!net.conditional()) throw InvalidArgument("guided_velocity: net is unconditional");
    return g.weight * net.forward(x, t, g.label) + (1.0 - g.weight) * net.forward(x, t, std::nullopt);
}

/// A batched velocity callable with its cost in network evaluations per call.
struct VelocityField {
    VelocityFn eval;
    int cost = 1;
};

inline VelocityField net_field(const VelocityNet& net, std::optional<int> label = std::nullopt)
{
    net.class_slot(label);
    return {[&net, label](const Mat& x, double t) { return net.forward_shared(x, t, label); }, 1};
}

inline VelocityField guided_field(const VelocityNet& net, const GuidanceConfig& g)
{
    if (!net.conditional()) throw InvalidArgument("guidance requires a class-conditional net");
    net.class_slot(g.label);
    return {[&net, g](const Mat& x, double t) {
                return Mat(g.weight * net.forward_shared(x, t, g.label) +
                           (1.0 - g.weight) * net.forward_shared(x, t, std::nullopt));
            },
            2};
}

struct TimeGrid {
    std::vector<double> points;

    static TimeGrid uniform(int steps)
    {
        if (steps <= 0) throw ConfigError("time grid: steps must be positive");
        TimeGrid g;
        g.points.resize(static_cast<std::size_t>(steps) + 1);
        for (int k = 0; k <= steps; ++k) g.points[static_cast<std::size_t>(k)] = static_cast<double>(k) / steps;
        return g;
    }

    void validate() const
    {
        if (points.size() < 2 || points.front() != 0.0 || points.back() != 1.0) {
            throw ConfigError("time grid must start at 0 and end at 1");
        }
        for (std::size_t k = 1; k < points.size(); ++k) {
            if (!(points[k] > points[k - 1])) throw ConfigError("time grid must be strictly increasing");
        }
    }

    int steps() const { return static_cast<int>(points.size()) - 1; }
};

struct SampleOptions {
    SolverKind solver{};
    TimeGrid grid = TimeGrid::uniform(100);  ///< ignored by dopri5
    bool hypercube_fast_path = true;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    int chunk = 1024;
};

struct SampleRunReport {
    Mat samples;           ///< d x n, one sample per column
    long nfe = 0;          ///< network evaluations summed over samples
    long reflections = 0;  ///< boundary reflections summed over samples
};

/// Reflected ODE sampling: prior draw, then per step a solver update followed by
/// reflection of the displacement back into the domain. Sample i draws its prior
/// point from stream (seed, i).
inline SampleRunReport sample_batch(const Domain& domain, const Prior& prior, const VelocityField& field,
                                    long n, const SampleOptions& opts)
{
    const int d = domain.dim();
    require_dim(prior.dim(), d, "sample_batch prior");
    if (n < 0) throw InvalidArgument("sample_batch: negative sample count");
    opts.solver.validate();
    const bool adaptive = opts.solver.method == Method::dopri5;
    if (!adaptive) opts.grid.validate();
    const bool fold = opts.hypercube_fast_path && dynamic_cast<const Hypercube*>(&domain) != nullptr;
    const int chunk = std::max(1, opts.chunk);
    const std::size_t n_chunks = static_cast<std::size_t>((n + chunk - 1) / chunk);

    SampleRunReport report;
    report.samples.resize(d, n);
    std::vector<long> chunk_nfe(n_chunks, 0);
    std::vector<long> chunk_refl(n_chunks, 0);

    auto reflect_into = [&](const Point& from, const Point& to, long& refl) -> Point {
        if (fold) {
            refl += hypercube_fold_reflections(to);
            return hypercube_fold(to);
        }
        ReflectResult r = reflect_segment(domain, from, to);
        refl += r.reflections;
        return std::move(r.x);
    };

    parallel_for(n_chunks, opts.threads, [&](std::size_t c) {
        const long lo = static_cast<long>(c) * chunk;
        const long m = std::min<long>(chunk, n - lo);
        Mat x(d, m);
        for (long j = 0; j < m; ++j) {
            Rng rng = stream_rng(opts.seed, static_cast<std::uint64_t>(lo + j));
            x.col(j) = prior.sample(rng);
            if (!domain.contains(x.col(j))) throw InvalidArgument("sample_batch: prior draw outside the domain");
        }
        long nfe = 0;
        long refl = 0;
        if (!adaptive) {
            const Method method = opts.solver.method;
            for (std::size_t k = 1; k < opts.grid.points.size(); ++k) {
                const Mat proposal =
                    solver_step(method, x, opts.grid.points[k - 1], opts.grid.points[k], field.eval);
                for (long j = 0; j < m; ++j) x.col(j) = reflect_into(x.col(j), proposal.col(j), refl);
                nfe += static_cast<long>(stages_per_step(method)) * field.cost * m;
            }
        } else {
            for (long j = 0; j < m; ++j) {
                // cur tracks the start of the step being accepted.
                Point cur = x.col(j);
                std::function<bool(const Mat&, Mat&)> reflect_step = [&](const Mat& proposal, Mat& moved) {
                    const Point before = cur;
                    const Point after = reflect_into(before, proposal.col(0), refl);
                    cur = after;
                    if (after == Point(proposal.col(0))) return false;
                    moved = after;
                    return true;
                };
                const AdaptiveResult r = integrate_dopri5(Mat(cur), 0.0, 1.0, field.eval, opts.solver.atol,
                                                          opts.solver.rtol, reflect_step);
                x.col(j) = r.x.col(0);
                nfe += r.nfe * field.cost;
            }
        }
        report.samples.middleCols(lo, m) = x;
        chunk_nfe[c] = nfe;
        chunk_refl[c] = refl;
    });
    for (std::size_t c = 0; c < n_chunks; ++c) {
        report.nfe += chunk_nfe[c];
        report.reflections += chunk_refl[c];
    }
    return report;
}

}  // namespace rfm
