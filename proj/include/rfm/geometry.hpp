#pragma once

#include "rfm/core.hpp"
#include "rfm/lp.hpp"

#include <algorithm>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace rfm {

/// First exit of a ray from a domain.
struct Hit {
    double s = 0.0;       ///< distance travelled along the unit direction
    Point point;          ///< y + alpha * s
    Direction normal;     ///< outward unit normal of the constraint that was hit
    int constraint = -1;  ///< index of that constraint in the owning domain
};

struct Box {
    Vec lo;
    Vec hi;
};

/// A connected, compact region with nonempty interior, queried by the flows
/// and the reflected sampler. Immutable after construction.
class Domain {
public:
    virtual ~Domain() = default;

    virtual int dim() const = 0;
    virtual std::string kind() const = 0;
    virtual bool is_convex() const = 0;

    /// Closed-set membership with every constraint residual allowed up to kBoundaryTol.
    virtual bool contains(const Point& x) const = 0;
    /// Membership with zero tolerance; points exactly on the boundary count as inside.
    virtual bool contains_strict(const Point& x) const = 0;

    /// Smallest s >= 0 at which y + alpha*s leaves the domain. A start point on the
    /// boundary with alpha pointing outward exits at s = 0. Grazing rays are ignored.
    virtual std::optional<Hit> ray_first_hit(const Point& y, const Direction& alpha) const = 0;

    /// Householder reflection alpha - 2 (alpha.n) n about the outward normal at a boundary point.
    virtual Direction reflect_direction(const Direction& alpha, const Point& boundary_point) const = 0;

    /// Nudges a point that lies outside by rounding error back onto the feasible side.
    virtual Point clamp_inside(const Point& x) const = 0;

    virtual Point uniform_sample(Rng& rng) const = 0;
    virtual Box bounding_box() const = 0;
    virtual double diameter() const = 0;
};

/// Domain given as an intersection of half-spaces and (inside/outside) balls.
class ConstraintDomain : public Domain {
public:
    enum class Shape { half_space, inside_ball, outside_ball };

    struct Constraint {
        Shape shape = Shape::half_space;
        Vec raw;            ///< half-space: row a of a.x <= b; balls: center
        double raw_b = 0;   ///< half-space: b; balls: squared radius
        Vec unit;           ///< half-space: a / |a|; balls: center
        double unit_b = 0;  ///< half-space: b / |a|; balls: radius
        int priority = 0;   ///< wins ties between simultaneously hit constraints
    };

    static Constraint half_space(Vec a, double b, int priority = 0)
    {
        const double n = a.norm();
        if (!(n > 0.0) || !std::isfinite(n) || !std::isfinite(b)) {
            throw ConfigError("half-space constraint needs a finite nonzero normal");
        }
        Constraint c;
        c.shape = Shape::half_space;
        c.unit = a / n;
        c.unit_b = b / n;
        c.raw = std::move(a);
        c.raw_b = b;
        c.priority = priority;
        return c;
    }

    static Constraint ball(Vec center, double radius_sq, bool inside, int priority = 0)
    {
        if (!(radius_sq > 0.0)) throw ConfigError("ball constraint needs a positive radius");
        Constraint c;
        c.shape = inside ? Shape::inside_ball : Shape::outside_ball;
        c.raw = center;
        c.raw_b = radius_sq;
        c.unit = std::move(center);
        c.unit_b = std::sqrt(radius_sq);
        c.priority = priority;
        return c;
    }

    int dim() const override { return dim_; }
    bool is_convex() const override { return convex_; }
    const std::vector<Constraint>& constraints() const { return constraints_; }

    /// Signed distance-like residual; <= 0 means feasible for that constraint.
    double residual(std::size_t i, const Point& x) const
    {
        const Constraint& c = constraints_[i];
        switch (c.shape) {
        case Shape::half_space: return c.unit.dot(x) - c.unit_b;
        case Shape::inside_ball: return (x - c.unit).norm() - c.unit_b;
        case Shape::outside_ball: return c.unit_b - (x - c.unit).norm();
        }
        return 0.0;
    }

    bool contains(const Point& x) const override
    {
        require_dim(x.size(), dim_, "contains");
        for (std::size_t i = 0; i < constraints_.size(); ++i) {
            if (!(residual(i, x) <= kBoundaryTol)) return false;
        }
        return true;
    }

    bool contains_strict(const Point& x) const override
    {
        require_dim(x.size(), dim_, "contains_strict");
        for (const Constraint& c : constraints_) {
            if (!strictly_feasible(c, x)) return false;
        }
        return true;
    }

    std::optional<Hit> ray_first_hit(const Point& y, const Direction& alpha) const override
    {
        require_dim(y.size(), dim_, "ray_first_hit origin");
        require_dim(alpha.size(), dim_, "ray_first_hit direction");
        if (std::abs(alpha.norm() - 1.0) > kBoundaryTol) {
            throw InvalidArgument("ray_first_hit: direction is not unit length");
        }
        if (!contains(y)) throw InvalidArgument("ray_first_hit: origin outside the domain");

        double best_s = std::numeric_limits<double>::infinity();
        int best = -1;
        double best_incidence = 0.0;
        Direction best_normal;
        for (std::size_t i = 0; i < constraints_.size(); ++i) {
            double s = 0.0;
            double incidence = 0.0;
            Direction normal;
            if (!exit_along(constraints_[i], y, alpha, s, incidence, normal)) continue;
            bool take = false;
            if (best < 0 || s < best_s - kBoundaryTol) {
                take = true;
            } else if (s <= best_s + kBoundaryTol) {
                const int p = constraints_[i].priority;
                const int bp = constraints_[static_cast<std::size_t>(best)].priority;
                take = p > bp || (p == bp && incidence > best_incidence);
            }
            if (take) {
                best_s = best < 0 ? s : std::min(s, best_s);
                best = static_cast<int>(i);
                best_incidence = incidence;
                best_normal = std::move(normal);
            } else {
                best_s = std::min(best_s, s);
            }
        }
        if (best < 0) return std::nullopt;
        return Hit{best_s, y + alpha * best_s, std::move(best_normal), best};
    }

    Direction reflect_direction(const Direction& alpha, const Point& yp) const override
    {
        require_dim(alpha.size(), dim_, "reflect_direction direction");
        require_dim(yp.size(), dim_, "reflect_direction point");
        int best = -1;
        bool best_outgoing = false;
        double best_incidence = 0.0;
        Direction best_normal;
        for (std::size_t i = 0; i < constraints_.size(); ++i) {
            if (std::abs(residual(i, yp)) > kBoundaryTol) continue;
            Direction n = normal_at(constraints_[i], yp);
            const double incidence = alpha.dot(n);
            const bool outgoing = incidence > kTangentTol;
            bool take = best < 0;
            if (!take) {
                const int p = constraints_[i].priority;
                const int bp = constraints_[static_cast<std::size_t>(best)].priority;
                if (outgoing != best_outgoing) {
                    take = outgoing;
                } else if (p != bp) {
                    take = p > bp;
                } else {
                    take = incidence > best_incidence;
                }
            }
            if (take) {
                best = static_cast<int>(i);
                best_outgoing = outgoing;
                best_incidence = incidence;
                best_normal = std::move(n);
            }
        }
        if (best < 0) throw InvalidArgument("reflect_direction: point is not on the boundary");
        return alpha - 2.0 * alpha.dot(best_normal) * best_normal;
    }

    Point clamp_inside(const Point& p) const override
    {
        require_dim(p.size(), dim_, "clamp_inside");
        Point x = p;
        double margin = 4.0 * std::numeric_limits<double>::epsilon();
        for (int iter = 0; iter < 64; ++iter) {
            bool ok = true;
            for (std::size_t i = 0; i < constraints_.size(); ++i) {
                const Constraint& c = constraints_[i];
                if (strictly_feasible(c, x)) continue;
                ok = false;
                const double scale = 1.0 + x.cwiseAbs().maxCoeff();
                switch (c.shape) {
                case Shape::half_space:
                    x -= c.unit * (std::max(residual(i, x), 0.0) + margin * scale);
                    break;
                case Shape::inside_ball:
                case Shape::outside_ball: {
                    Vec u = x - c.unit;
                    const double r = u.norm();
                    if (r == 0.0) {
                        u = Vec::Unit(dim_, 0);
                    } else {
                        u /= r;
                    }
                    const double sgn = c.shape == Shape::inside_ball ? -1.0 : 1.0;
                    x = c.unit + u * (c.unit_b + sgn * margin * scale);
                    break;
                }
                }
            }
            if (ok) return x;
            margin *= 2.0;
        }
        throw NumericalError("clamp_inside: could not restore feasibility");
    }

    Point uniform_sample(Rng& rng) const override
    {
        const Box box = bounding_box();
        Point x(dim_);
        for (long attempt = 0; attempt < max_attempts_; ++attempt) {
            for (int j = 0; j < dim_; ++j) {
                x(j) = box.lo(j) + (box.hi(j) - box.lo(j)) * uniform01(rng);
            }
            if (contains_strict(x)) return x;
        }
        throw NumericalError("uniform_sample: rejection attempt cap exceeded");
    }

    Box bounding_box() const override { return box_; }

    double diameter() const override { return (box_.hi - box_.lo).norm(); }

    void set_max_attempts(long n) { max_attempts_ = n; }
    long max_attempts() const { return max_attempts_; }

protected:
    ConstraintDomain(int dim, std::vector<Constraint> constraints, Box box, bool convex)
        : dim_(dim), constraints_(std::move(constraints)), box_(std::move(box)), convex_(convex)
    {
        if (dim_ <= 0) throw ConfigError("domain dimension must be positive");
        for (const Constraint& c : constraints_) {
            if (c.raw.size() != dim_) throw ConfigError("constraint dimension does not match domain");
        }
    }

    static bool strictly_feasible(const Constraint& c, const Point& x)
    {
        switch (c.shape) {
        case Shape::half_space: return c.raw.dot(x) <= c.raw_b;
        case Shape::inside_ball: return (x - c.raw).squaredNorm() <= c.raw_b;
        case Shape::outside_ball: return (x - c.raw).squaredNorm() >= c.raw_b;
        }
        return false;
    }

    static Direction normal_at(const Constraint& c, const Point& x)
    {
        switch (c.shape) {
        case Shape::half_space: return c.unit;
        case Shape::inside_ball: return (x - c.unit).normalized();
        case Shape::outside_ball: return (c.unit - x).normalized();
        }
        return c.unit;
    }

    // Exit distance from one constraint set, with the incidence alpha.n at the exit.
    static bool exit_along(const Constraint& c, const Point& y, const Direction& alpha, double& s,
                           double& incidence, Direction& normal)
    {
        if (c.shape == Shape::half_space) {
            incidence = c.unit.dot(alpha);
            if (incidence <= kTangentTol) return false;
            s = std::max((c.unit_b - c.unit.dot(y)) / incidence, 0.0);
            normal = c.unit;
            return true;
        }
        const Vec u = y - c.unit;
        const double b = alpha.dot(u);
        const double cc = u.squaredNorm() - c.unit_b * c.unit_b;
        const double disc = b * b - cc;
        if (disc < 0.0) return false;
        const double root = std::sqrt(disc);
        if (c.shape == Shape::inside_ball) {
            // Larger root: the ray leaves the ball.
            s = b > 0.0 ? -cc / (b + root) : -b + root;
            if (s < 0.0) return false;
        } else {
            // Smaller root: the ray enters the excluded ball.
            s = b < 0.0 ? cc / (-b + root) : -b - root;
            if (s < -kBoundaryTol) return false;
            s = std::max(s, 0.0);
        }
        normal = normal_at(c, y + alpha * s);
        incidence = alpha.dot(normal);
        return incidence > kTangentTol;
    }

    int dim_;
    std::vector<Constraint> constraints_;
    Box box_;
    bool convex_;
    long max_attempts_ = 1'000'000;
};

/// [-1, 1]^d.
class Hypercube final : public ConstraintDomain {
public:
    explicit Hypercube(int dim) : ConstraintDomain(dim, make_constraints(dim), make_box(dim), true) {}

    std::string kind() const override { return "hypercube"; }
    double diameter() const override { return 2.0 * std::sqrt(static_cast<double>(dim_)); }

    Point uniform_sample(Rng& rng) const override
    {
        Point x(dim_);
        for (int j = 0; j < dim_; ++j) x(j) = 2.0 * uniform01(rng) - 1.0;
        return x;
    }

private:
    static std::vector<Constraint> make_constraints(int dim)
    {
        if (dim <= 0) throw ConfigError("hypercube dimension must be positive");
        std::vector<Constraint> cs;
        for (int j = 0; j < dim; ++j) {
            cs.push_back(half_space(Vec::Unit(dim, j), 1.0));
            cs.push_back(half_space(-Vec::Unit(dim, j), 1.0));
        }
        return cs;
    }
    static Box make_box(int dim) { return {Vec::Constant(dim, -1.0), Vec::Constant(dim, 1.0)}; }
};

/// {x : x_i >= 0, sum x_i <= 1}.
class Simplex final : public ConstraintDomain {
public:
    explicit Simplex(int dim) : ConstraintDomain(dim, make_constraints(dim), make_box(dim), true) {}

    std::string kind() const override { return "simplex"; }
    double diameter() const override { return dim_ == 1 ? 1.0 : std::numbers::sqrt2; }

    // Spacings of sorted uniforms are Dirichlet(1, ..., 1).
    Point uniform_sample(Rng& rng) const override
    {
        std::vector<double> u(static_cast<std::size_t>(dim_));
        for (double& v : u) v = uniform01(rng);
        std::sort(u.begin(), u.end());
        Point x(dim_);
        double prev = 0.0;
        for (int j = 0; j < dim_; ++j) {
            x(j) = u[static_cast<std::size_t>(j)] - prev;
            prev = u[static_cast<std::size_t>(j)];
        }
        return contains_strict(x) ? x : clamp_inside(x);
    }

private:
    static std::vector<Constraint> make_constraints(int dim)
    {
        if (dim <= 0) throw ConfigError("simplex dimension must be positive");
        std::vector<Constraint> cs;
        for (int j = 0; j < dim; ++j) cs.push_back(half_space(-Vec::Unit(dim, j), 0.0));
        cs.push_back(half_space(Vec::Ones(dim), 1.0));
        return cs;
    }
    static Box make_box(int dim) { return {Vec::Zero(dim), Vec::Ones(dim)}; }
};

/// {u : A u <= b}; construction rejects empty-interior and unbounded systems.
class ConvexPolytope final : public ConstraintDomain {
public:
    ConvexPolytope(const Mat& a, const Vec& b)
        : ConstraintDomain(static_cast<int>(a.cols()), make_constraints(a, b), make_box(a, b), true),
          a_(a),
          b_(b)
    {
    }

    std::string kind() const override { return "polytope"; }
    const Mat& a() const { return a_; }
    const Vec& b() const { return b_; }

private:
    static std::vector<Constraint> make_constraints(const Mat& a, const Vec& b)
    {
        if (a.rows() == 0 || a.cols() == 0) throw ConfigError("polytope needs a nonempty constraint matrix");
        if (b.size() != a.rows()) throw ConfigError("polytope: A and b row counts differ");
        std::vector<Constraint> cs;
        for (Eigen::Index i = 0; i < a.rows(); ++i) cs.push_back(half_space(a.row(i).transpose(), b(i)));
        return cs;
    }

    static Box make_box(const Mat& a, const Vec& b)
    {
        const Eigen::Index m = a.rows();
        const Eigen::Index d = a.cols();

        // Chebyshev ball: maximise t subject to a_i.x + |a_i| t <= b_i, t <= 1.
        Mat ext = Mat::Zero(m + 1, d + 1);
        Vec rhs(m + 1);
        ext.topLeftCorner(m, d) = a;
        for (Eigen::Index i = 0; i < m; ++i) ext(i, d) = a.row(i).norm();
        ext(m, d) = 1.0;
        rhs.head(m) = b;
        rhs(m) = 1.0;
        Vec obj = Vec::Zero(d + 1);
        obj(d) = 1.0;
        const lp::Result cheb = lp::maximize(obj, ext, rhs);
        if (cheb.status != lp::Status::optimal || cheb.value <= kBoundaryTol) {
            throw ConfigError("polytope has an empty interior");
        }

        Box box{Vec(d), Vec(d)};
        for (Eigen::Index j = 0; j < d; ++j) {
            const lp::Result hi = lp::maximize(Vec::Unit(d, j), a, b);
            const lp::Result lo = lp::maximize(-Vec::Unit(d, j), a, b);
            if (hi.status != lp::Status::optimal || lo.status != lp::Status::optimal) {
                throw ConfigError("polytope is unbounded");
            }
            box.hi(j) = hi.value;
            box.lo(j) = -lo.value;
        }
        return box;
    }

    Mat a_;
    Vec b_;
};

/// {x in R^2 : r^2 <= |x|^2 <= R^2, x_2 >= 0}.
class HalfAnnulus final : public ConstraintDomain {
public:
    HalfAnnulus(double inner, double outer)
        : ConstraintDomain(2, make_constraints(inner, outer), Box{Vec(2), Vec(2)}, false),
          inner_(inner),
          outer_(outer)
    {
        box_.lo << -outer, 0.0;
        box_.hi << outer, outer;
    }

    std::string kind() const override { return "half_annulus"; }
    double inner_radius() const { return inner_; }
    double outer_radius() const { return outer_; }
    double diameter() const override { return 2.0 * outer_; }

private:
    static std::vector<Constraint> make_constraints(double inner, double outer)
    {
        if (!(inner > 0.0) || !(outer > inner) || !std::isfinite(outer)) {
            throw ConfigError("half annulus needs 0 < r < R");
        }
        // The flat edge outranks the arcs at the two junction points.
        return {half_space(Vec2(0.0, -1.0), 0.0, 1), ball(Vec::Zero(2), outer * outer, true),
                ball(Vec::Zero(2), inner * inner, false)};
    }
    static Vec Vec2(double a, double b)
    {
        Vec v(2);
        v << a, b;
        return v;
    }

    double inner_;
    double outer_;
};

/// {x in R^2 : |x_1| <= 1, 0 <= x_2 <= 3, x_1^2 + (x_2 - 3)^2 >= 2}: the region under
/// the lower arc of the excluded disk. The x_2 <= 3 cap only drops the unbounded
/// component above the disk and is never active on the cup's boundary.
class Cup final : public ConstraintDomain {
public:
    Cup() : ConstraintDomain(2, make_constraints(), make_box(), false) {}

    std::string kind() const override { return "cup"; }

private:
    static Vec Vec2(double a, double b)
    {
        Vec v(2);
        v << a, b;
        return v;
    }
    static std::vector<Constraint> make_constraints()
    {
        return {half_space(Vec2(1.0, 0.0), 1.0), half_space(Vec2(-1.0, 0.0), 1.0),
                half_space(Vec2(0.0, -1.0), 0.0), ball(Vec2(0.0, 3.0), 2.0, false),
                half_space(Vec2(0.0, 1.0), 3.0)};
    }
    static Box make_box() { return {Vec2(-1.0, 0.0), Vec2(1.0, 2.0)}; }
};

}  // namespace rfm
