#pragma once

#include "rfm/core.hpp"
#include "rfm/geometry.hpp"

#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace rfm {

inline constexpr double kDefaultSigmaMin = 1e-5;

/// Per-sample path phi_t(x0 | x1) that stays in the domain, together with its
/// time derivative (the regression target of the training objective).
class ConditionalFlow {
public:
    virtual ~ConditionalFlow() = default;

    virtual std::string kind() const = 0;
    virtual double sigma_min() const = 0;
    virtual const Domain& domain() const = 0;

    Point flow_at(const Point& x0, const Point& x1, double t) const
    {
        check(x0, x1, t);
        return position(x0, x1, t);
    }

    Vec target_velocity(const Point& x0, const Point& x1, double t) const
    {
        check(x0, x1, t);
        return velocity(x0, x1, t);
    }

protected:
    virtual Point position(const Point& x0, const Point& x1, double t) const = 0;
    virtual Vec velocity(const Point& x0, const Point& x1, double t) const = 0;

private:
    void check(const Point& x0, const Point& x1, double t) const
    {
        if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("conditional flow: t outside [0, 1]");
        const Domain& d = domain();
        require_dim(x0.size(), d.dim(), "conditional flow x0");
        require_dim(x1.size(), d.dim(), "conditional flow x1");
        if (!d.contains(x0) || !d.contains(x1)) {
            throw InvalidArgument("conditional flow: endpoint outside the domain");
        }
    }
};

/// Straight segment with the x1 coefficient shrunk by (1 - sigma_min); any convex domain.
class ConvexOTFlow final : public ConditionalFlow {
public:
    ConvexOTFlow(std::shared_ptr<const Domain> domain, double sigma_min = kDefaultSigmaMin)
        : domain_(std::move(domain)), sigma_(sigma_min)
    {
        if (!domain_ || !domain_->is_convex()) throw ConfigError("ConvexOTFlow requires a convex domain");
        if (!(sigma_ >= 0.0 && sigma_ < 1.0)) throw ConfigError("sigma_min must lie in [0, 1)");
    }

    std::string kind() const override { return "convex_ot"; }
    double sigma_min() const override { return sigma_; }
    const Domain& domain() const override { return *domain_; }

protected:
    Point position(const Point& x0, const Point& x1, double t) const override
    {
        const double w = (1.0 - sigma_) * t;
        return (1.0 - w) * x0 + w * x1;
    }
    Vec velocity(const Point& x0, const Point& x1, double) const override
    {
        return (1.0 - sigma_) * (x1 - x0);
    }

private:
    std::shared_ptr<const Domain> domain_;
    double sigma_;
};

/// Linear interpolation of radius and polar angle on the half annulus.
class PolarOTFlow final : public ConditionalFlow {
public:
    PolarOTFlow(std::shared_ptr<const HalfAnnulus> domain, double sigma_min = kDefaultSigmaMin)
        : domain_(std::move(domain)), sigma_(sigma_min)
    {
        if (!domain_) throw ConfigError("PolarOTFlow requires a half annulus");
        if (!(sigma_ >= 0.0 && sigma_ < 1.0)) throw ConfigError("sigma_min must lie in [0, 1)");
    }

    std::string kind() const override { return "polar_ot"; }
    double sigma_min() const override { return sigma_; }
    const Domain& domain() const override { return *domain_; }

    /// Polar angle in [0, pi]; points a hair below the axis snap to the nearest end.
    static double angle_of(const Point& x)
    {
        const double a = std::atan2(x(1), x(0));
        if (a >= 0.0) return a;
        return x(0) >= 0.0 ? 0.0 : std::numbers::pi;
    }

protected:
    Point position(const Point& x0, const Point& x1, double t) const override
    {
        const double w = (1.0 - sigma_) * t;
        const double radius = (1.0 - w) * x0.norm() + w * x1.norm();
        const double angle = (1.0 - w) * angle_of(x0) + w * angle_of(x1);
        Point p(2);
        p << radius * std::cos(angle), radius * std::sin(angle);
        return p;
    }

    Vec velocity(const Point& x0, const Point& x1, double t) const override
    {
        const double w = (1.0 - sigma_) * t;
        const double r0 = x0.norm();
        const double r1 = x1.norm();
        const double a0 = angle_of(x0);
        const double a1 = angle_of(x1);
        const double radius = (1.0 - w) * r0 + w * r1;
        const double angle = (1.0 - w) * a0 + w * a1;
        const double dr = (1.0 - sigma_) * (r1 - r0);
        const double da = (1.0 - sigma_) * (a1 - a0);
        Vec v(2);
        v << dr * std::cos(angle) - radius * da * std::sin(angle),
            dr * std::sin(angle) + radius * da * std::cos(angle);
        return v;
    }

private:
    std::shared_ptr<const HalfAnnulus> domain_;
    double sigma_;
};

/// Broken line from x0 to x1 with one bounce off the x_1 axis.
class CupFlow final : public ConditionalFlow {
public:
    explicit CupFlow(std::shared_ptr<const Domain> domain) : domain_(std::move(domain))
    {
        if (!domain_ || domain_->dim() != 2) throw ConfigError("CupFlow requires a two-dimensional domain");
    }

    std::string kind() const override { return "cup"; }
    double sigma_min() const override { return 0.0; }
    const Domain& domain() const override { return *domain_; }

protected:
    Point position(const Point& x0, const Point& x1, double t) const override
    {
        Point p(2);
        p << (1.0 - t) * x0(0) + t * x1(0), std::abs((1.0 - t) * x0(1) - t * x1(1));
        return p;
    }

    // At the kink itself the outgoing (post-bounce) branch is used.
    Vec velocity(const Point& x0, const Point& x1, double t) const override
    {
        const double inner = (1.0 - t) * x0(1) - t * x1(1);
        const double branch = inner > 0.0 ? 1.0 : -1.0;
        Vec v(2);
        v << x1(0) - x0(0), branch * (-x0(1) - x1(1));
        return v;
    }

private:
    std::shared_ptr<const Domain> domain_;
};

// ---------------------------------------------------------------------------
// Priors

class Prior {
public:
    virtual ~Prior() = default;
    virtual std::string kind() const = 0;
    virtual int dim() const = 0;
    virtual Point sample(Rng& rng) const = 0;
};

class UniformPrior final : public Prior {
public:
    explicit UniformPrior(std::shared_ptr<const Domain> domain) : domain_(std::move(domain)) {}
    std::string kind() const override { return "uniform"; }
    int dim() const override { return domain_->dim(); }
    Point sample(Rng& rng) const override { return domain_->uniform_sample(rng); }

private:
    std::shared_ptr<const Domain> domain_;
};

/// Standard normal conditioned on the domain, by rejection.
class TruncatedGaussianPrior final : public Prior {
public:
    explicit TruncatedGaussianPrior(std::shared_ptr<const Domain> domain, long max_attempts = 1'000'000)
        : domain_(std::move(domain)), max_attempts_(max_attempts)
    {
    }
    std::string kind() const override { return "truncated_gaussian"; }
    int dim() const override { return domain_->dim(); }

    Point sample(Rng& rng) const override
    {
        Point x(domain_->dim());
        for (long attempt = 0; attempt < max_attempts_; ++attempt) {
            for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = standard_normal(rng);
            if (domain_->contains_strict(x)) return x;
        }
        throw NumericalError("truncated gaussian prior: rejection attempt cap exceeded");
    }

private:
    std::shared_ptr<const Domain> domain_;
    long max_attempts_;
};

/// Unconstrained standard normal (vanilla flow-matching baselines).
class GaussianPrior final : public Prior {
public:
    explicit GaussianPrior(int dim) : dim_(dim)
    {
        if (dim <= 0) throw ConfigError("gaussian prior dimension must be positive");
    }
    std::string kind() const override { return "gaussian"; }
    int dim() const override { return dim_; }
    Point sample(Rng& rng) const override
    {
        Point x(dim_);
        for (int j = 0; j < dim_; ++j) x(j) = standard_normal(rng);
        return x;
    }

private:
    int dim_;
};

/// Dirac mass; deterministic starting point.
class PointPrior final : public Prior {
public:
    explicit PointPrior(Point x) : x_(std::move(x)) {}
    std::string kind() const override { return "point"; }
    int dim() const override { return static_cast<int>(x_.size()); }
    Point sample(Rng&) const override { return x_; }

private:
    Point x_;
};

// ---------------------------------------------------------------------------
// Data distributions

struct LabeledPoint {
    Point x;
    std::optional<int> label;
};

class DataDistribution {
public:
    virtual ~DataDistribution() = default;
    virtual std::string kind() const = 0;
    virtual int dim() const = 0;
    /// Number of distinct labels emitted; 0 when samples are unlabeled.
    virtual int num_labels() const = 0;
    virtual LabeledPoint sample(Rng& rng) const = 0;
};

/// Diagonal-covariance Gaussian mixture conditioned on the domain. The
/// component index is reported as the sample's label.
class TruncatedGaussianMixture final : public DataDistribution {
public:
    TruncatedGaussianMixture(std::shared_ptr<const Domain> domain, std::vector<double> weights,
                             std::vector<Vec> means, std::vector<Vec> stdevs, long max_attempts = 1'000'000)
        : domain_(std::move(domain)),
          weights_(std::move(weights)),
          means_(std::move(means)),
          stdevs_(std::move(stdevs)),
          max_attempts_(max_attempts)
    {
        if (!domain_) throw ConfigError("mixture needs a domain");
        if (weights_.empty() || weights_.size() != means_.size() || weights_.size() != stdevs_.size()) {
            throw ConfigError("mixture: weights, means and stdevs must have the same nonzero length");
        }
        double total = 0.0;
        for (double w : weights_) {
            if (!(w >= 0.0)) throw ConfigError("mixture: weights must be nonnegative");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-9) throw ConfigError("mixture: weights must sum to 1");
        for (std::size_t k = 0; k < means_.size(); ++k) {
            if (means_[k].size() != domain_->dim() || stdevs_[k].size() != domain_->dim()) {
                throw ConfigError("mixture: component dimension does not match the domain");
            }
            if ((stdevs_[k].array() < 0.0).any()) throw ConfigError("mixture: stdevs must be nonnegative");
        }
        cumulative_.resize(weights_.size());
        double acc = 0.0;
        for (std::size_t k = 0; k < weights_.size(); ++k) {
            acc += weights_[k];
            cumulative_[k] = acc;
        }
        cumulative_.back() = 1.0;
    }

    std::string kind() const override { return "mixture"; }
    int dim() const override { return domain_->dim(); }
    int num_labels() const override { return static_cast<int>(weights_.size()); }
    const std::vector<double>& weights() const { return weights_; }

    LabeledPoint sample(Rng& rng) const override
    {
        Point x(dim());
        for (long attempt = 0; attempt < max_attempts_; ++attempt) {
            const double u = uniform01(rng);
            std::size_t k = 0;
            while (k + 1 < cumulative_.size() && u >= cumulative_[k]) ++k;
            for (int j = 0; j < dim(); ++j) x(j) = means_[k](j) + stdevs_[k](j) * standard_normal(rng);
            if (domain_->contains_strict(x)) return {x, static_cast<int>(k)};
        }
        throw NumericalError("mixture: rejection attempt cap exceeded");
    }

private:
    std::shared_ptr<const Domain> domain_;
    std::vector<double> weights_;
    std::vector<Vec> means_;
    std::vector<Vec> stdevs_;
    std::vector<double> cumulative_;
    long max_attempts_;
};

/// Rows of a point cloud, drawn uniformly with replacement.
class EmpiricalData final : public DataDistribution {
public:
    EmpiricalData(std::shared_ptr<const Domain> domain, std::vector<Point> rows)
        : domain_(std::move(domain)), rows_(std::move(rows))
    {
        if (rows_.empty()) throw ConfigError("empirical dataset is empty");
        for (const Point& p : rows_) {
            if (p.size() != domain_->dim()) throw ConfigError("empirical dataset: row dimension mismatch");
            if (!domain_->contains_strict(p)) throw ConfigError("empirical dataset: row outside the domain");
        }
    }

    std::string kind() const override { return "empirical"; }
    int dim() const override { return domain_->dim(); }
    int num_labels() const override { return 0; }
    std::size_t size() const { return rows_.size(); }

    LabeledPoint sample(Rng& rng) const override
    {
        std::uniform_int_distribution<std::size_t> pick(0, rows_.size() - 1);
        return {rows_[pick(rng)], std::nullopt};
    }

private:
    std::shared_ptr<const Domain> domain_;
    std::vector<Point> rows_;
};

}  // namespace rfm
