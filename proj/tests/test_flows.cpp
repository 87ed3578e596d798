#include "rfm/flows.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>

using namespace rfm;
using rfm::testing::pt;

namespace {

constexpr double kPi = std::numbers::pi;

auto cube1() { return std::make_shared<Hypercube>(1); }
auto ring() { return std::make_shared<HalfAnnulus>(1.0, 3.0); }
auto cup() { return std::make_shared<Cup>(); }

Vec central_difference(const ConditionalFlow& f, const Point& x0, const Point& x1, double t, double h = 1e-6)
{
    return (f.flow_at(x0, x1, t + h) - f.flow_at(x0, x1, t - h)) / (2.0 * h);
}

}  // namespace

TEST(FlowAt, Examples)
{
    const ConvexOTFlow convex(std::make_shared<Hypercube>(1), 0.0);
    EXPECT_DOUBLE_EQ(convex.flow_at(pt({0.0}), pt({1.0}), 0.5)(0), 0.5);

    const PolarOTFlow polar(ring(), 0.0);
    const Point p = polar.flow_at(pt({2.0, 0.0}), pt({0.0, 3.0}), 0.5);
    EXPECT_NEAR(p(0), 2.5 / std::numbers::sqrt2, 1e-14);
    EXPECT_NEAR(p(1), 2.5 / std::numbers::sqrt2, 1e-14);

    const CupFlow cf(cup());
    const Point c = cf.flow_at(pt({0.5, 1.0}), pt({-0.5, 0.5}), 0.8);
    EXPECT_NEAR(c(0), -0.3, 1e-15);
    EXPECT_NEAR(c(1), 0.2, 1e-15);
}

TEST(FlowAt, Errors)
{
    const ConvexOTFlow convex(std::make_shared<Hypercube>(2));
    EXPECT_THROW(convex.flow_at(pt({0.0, 0.0}), pt({0.0, 0.0}), 1.5), InvalidArgument);
    EXPECT_THROW(convex.flow_at(pt({0.0, 0.0}), pt({0.0, 0.0}), -0.1), InvalidArgument);
    EXPECT_THROW(convex.flow_at(pt({2.0, 0.0}), pt({0.0, 0.0}), 0.5), InvalidArgument);
    EXPECT_THROW(convex.target_velocity(pt({0.0, 0.0}), pt({0.0, 3.0}), 0.5), InvalidArgument);
    EXPECT_THROW(ConvexOTFlow{cup()}, ConfigError);
}

TEST(TargetVelocity, Examples)
{
    const ConvexOTFlow convex(cube1(), 0.0);
    for (double t : {0.0, 0.3, 1.0}) EXPECT_DOUBLE_EQ(convex.target_velocity(pt({0.0}), pt({1.0}), t)(0), 1.0);

    const PolarOTFlow polar(ring(), 0.0);
    const Vec v = polar.target_velocity(pt({2.0, 0.0}), pt({0.0, 3.0}), 0.0);
    // Oracle: at alpha_t = 0, r_t = 2 the velocity is (r_dot, r_t * alpha_dot).
    const double r_dot = 3.0 - 2.0;
    const double a_dot = kPi / 2.0;
    EXPECT_NEAR(v(0), r_dot, 1e-14);
    EXPECT_NEAR(v(1), 2.0 * a_dot, 1e-14);
    // t = 0 is the left end of the range, so use a one-sided difference there.
    const PolarOTFlow& f = polar;
    const double h = 1e-6;
    const Vec fd = (-3.0 * f.flow_at(pt({2.0, 0.0}), pt({0.0, 3.0}), 0.0) +
                    4.0 * f.flow_at(pt({2.0, 0.0}), pt({0.0, 3.0}), h) -
                    f.flow_at(pt({2.0, 0.0}), pt({0.0, 3.0}), 2.0 * h)) /
                   (2.0 * h);
    EXPECT_NEAR((fd - v).norm() / v.norm(), 0.0, 1e-6);

    const CupFlow cf(cup());
    const Point x0 = pt({0.5, 1.0});
    const Point x1 = pt({-0.5, 0.5});
    const Vec u = cf.target_velocity(x0, x1, 0.8);
    EXPECT_NEAR(u(0), -1.0, 1e-15);
    EXPECT_NEAR(u(1), 1.5, 1e-15);
    EXPECT_NEAR((central_difference(cf, x0, x1, 0.8) - u).norm(), 0.0, 1e-6);
}

TEST(TargetVelocity, CupKinkUsesPostReflectionBranch)
{
    const CupFlow cf(cup());
    const Point x0 = pt({0.5, 0.5});
    const Point x1 = pt({-0.5, 0.5});
    // The kink x0_2 / (x0_2 + x1_2) = 0.5 is exactly representable.
    EXPECT_EQ(cf.flow_at(x0, x1, 0.5)(1), 0.0);
    EXPECT_NEAR(cf.target_velocity(x0, x1, 0.5)(1), 1.0, 1e-15);
    EXPECT_NEAR(cf.target_velocity(x0, x1, 0.5 - 1e-3)(1), -1.0, 1e-15);
}

TEST(TargetVelocity, CupDegenerateFloor)
{
    const CupFlow cf(cup());
    const Point x0 = pt({0.5, 0.0});
    const Point x1 = pt({-0.5, 0.0});
    for (double t : {0.0, 0.5, 1.0}) {
        EXPECT_EQ(cf.flow_at(x0, x1, t)(1), 0.0);
        EXPECT_EQ(cf.target_velocity(x0, x1, t)(1), 0.0);
    }
}

namespace {

struct FlowCase {
    std::shared_ptr<const Domain> domain;
    std::shared_ptr<const ConditionalFlow> flow;
};

std::vector<FlowCase> flow_cases()
{
    Mat tri(3, 2);
    tri << -1, 0, 0, -1, 1, 2;
    Vec tb(3);
    tb << 0.5, 0.5, 1.5;
    std::vector<FlowCase> out;
    for (std::shared_ptr<const Domain> d :
         std::vector<std::shared_ptr<const Domain>>{std::make_shared<Hypercube>(2), std::make_shared<Hypercube>(10),
                                                    std::make_shared<Simplex>(2), std::make_shared<Simplex>(10),
                                                    std::make_shared<ConvexPolytope>(tri, tb)}) {
        out.push_back({d, std::make_shared<ConvexOTFlow>(d, 1e-3)});
    }
    auto r = std::make_shared<HalfAnnulus>(1.0, 2.0);
    out.push_back({r, std::make_shared<PolarOTFlow>(r, 1e-3)});
    auto c = cup();
    out.push_back({c, std::make_shared<CupFlow>(c)});
    return out;
}

}  // namespace

TEST(FlowProperties, Containment)
{
    Rng rng(21);
    for (const FlowCase& fc : flow_cases()) {
        long bad = 0;
        for (int i = 0; i < 100'000; ++i) {
            const Point x0 = fc.domain->uniform_sample(rng);
            const Point x1 = fc.domain->uniform_sample(rng);
            bad += !fc.domain->contains(fc.flow->flow_at(x0, x1, uniform01(rng)));
        }
        EXPECT_EQ(bad, 0) << fc.flow->kind() << " on " << fc.domain->kind();
    }
}

TEST(FlowProperties, Endpoints)
{
    Rng rng(22);
    for (const FlowCase& fc : flow_cases()) {
        const double sigma = fc.flow->sigma_min();
        // Polar paths bend: the endpoint error is sigma times the radial gap plus the
        // arc length of the angular gap, which can exceed sigma * diameter.
        double bound = sigma * fc.domain->diameter();
        if (fc.flow->kind() == "polar_ot") bound = sigma * ((2.0 - 1.0) + kPi * 2.0);
        for (int i = 0; i < 2000; ++i) {
            const Point x0 = fc.domain->uniform_sample(rng);
            const Point x1 = fc.domain->uniform_sample(rng);
            EXPECT_TRUE((fc.flow->flow_at(x0, x1, 0.0) - x0).cwiseAbs().maxCoeff() <= 4e-16 * (1 + x0.norm()))
                << fc.flow->kind();
            EXPECT_LE((fc.flow->flow_at(x0, x1, 1.0) - x1).norm(), bound + 1e-15) << fc.flow->kind();
        }
    }
}

TEST(FlowProperties, ZeroTimeIsExact)
{
    const ConvexOTFlow convex(std::make_shared<Hypercube>(2), 1e-5);
    const Point x0 = pt({0.1234567, -0.7654321});
    EXPECT_EQ(convex.flow_at(x0, pt({0.9, 0.9}), 0.0), x0);
    const CupFlow cf(cup());
    const Point c0 = pt({0.3, 0.4});
    EXPECT_EQ(cf.flow_at(c0, pt({0.0, 0.2}), 0.0), c0);
    EXPECT_EQ(cf.flow_at(c0, pt({0.0, 0.2}), 1.0), pt({0.0, 0.2}));
}

TEST(FlowProperties, VelocityMatchesFiniteDifference)
{
    Rng rng(23);
    for (const FlowCase& fc : flow_cases()) {
        int checked = 0;
        while (checked < 3000) {
            const Point x0 = fc.domain->uniform_sample(rng);
            const Point x1 = fc.domain->uniform_sample(rng);
            const double t = 0.01 + 0.98 * uniform01(rng);
            if (fc.flow->kind() == "cup") {
                const double kink = x0(1) / (x0(1) + x1(1));
                if (std::abs(t - kink) < 1e-3) continue;
            }
            const Vec u = fc.flow->target_velocity(x0, x1, t);
            const Vec fd = central_difference(*fc.flow, x0, x1, t);
            EXPECT_LE((fd - u).norm(), 1e-6 * std::max(1.0, u.norm())) << fc.flow->kind();
            ++checked;
        }
    }
}

TEST(FlowProperties, PolarAngleMonotone)
{
    auto r = std::make_shared<HalfAnnulus>(1.0, 2.0);
    const PolarOTFlow polar(r, 1e-5);
    Rng rng(24);
    for (int i = 0; i < 500; ++i) {
        const Point x0 = r->uniform_sample(rng);
        const Point x1 = r->uniform_sample(rng);
        const double a0 = PolarOTFlow::angle_of(x0);
        const double a1 = PolarOTFlow::angle_of(x1);
        double prev = a0;
        for (int k = 1; k <= 50; ++k) {
            const Point p = polar.flow_at(x0, x1, k / 50.0);
            const double a = PolarOTFlow::angle_of(p);
            EXPECT_GE(a, 0.0);
            EXPECT_LE(a, kPi);
            EXPECT_GE(p.norm(), 1.0 - 1e-12);
            EXPECT_LE(p.norm(), 2.0 + 1e-12);
            if (a1 >= a0) {
                EXPECT_GE(a, prev - 1e-12);
            } else {
                EXPECT_LE(a, prev + 1e-12);
            }
            prev = a;
        }
    }
}

TEST(Priors, Uniform)
{
    const UniformPrior prior(std::make_shared<Hypercube>(2));
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) EXPECT_LE(prior.sample(rng).cwiseAbs().maxCoeff(), 1.0);
}

TEST(Priors, TruncatedGaussianSymmetric)
{
    const TruncatedGaussianPrior prior(std::make_shared<Hypercube>(2));
    Rng rng(2);
    const int n = 100'000;
    Vec sum = Vec::Zero(2);
    Vec sq = Vec::Zero(2);
    for (int i = 0; i < n; ++i) {
        const Point x = prior.sample(rng);
        sum += x;
        sq += x.cwiseProduct(x);
    }
    const Vec mean = sum / n;
    for (int j = 0; j < 2; ++j) {
        const double se = std::sqrt((sq(j) / n - mean(j) * mean(j)) / n);
        EXPECT_LE(std::abs(mean(j)), 3.0 * se);
    }
}

TEST(Priors, TruncatedGaussianOnSimplex)
{
    auto simplex = std::make_shared<Simplex>(2);
    const TruncatedGaussianPrior prior(simplex);
    Rng rng(3);
    for (int i = 0; i < 100'000; ++i) ASSERT_TRUE(simplex->contains(prior.sample(rng)));
}

TEST(Priors, RejectionCap)
{
    // The standard Gaussian essentially never lands in the 10-simplex, whose volume is 1/10!.
    const TruncatedGaussianPrior prior(std::make_shared<Simplex>(10), 1000);
    Rng rng(4);
    EXPECT_THROW(prior.sample(rng), NumericalError);
}

TEST(Data, DegenerateComponent)
{
    const TruncatedGaussianMixture mix(std::make_shared<Hypercube>(2), {1.0}, {pt({0.0, 0.0})}, {pt({0.0, 0.0})});
    Rng rng(5);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(mix.sample(rng).x, pt({0.0, 0.0}));
}

TEST(Data, ComponentBalance)
{
    const TruncatedGaussianMixture mix(std::make_shared<Hypercube>(2), {0.5, 0.5},
                                       {pt({-0.5, 0.0}), pt({0.5, 0.0})}, {pt({0.2, 0.2}), pt({0.2, 0.2})});
    Rng rng(6);
    const int n = 100'000;
    long first = 0;
    for (int i = 0; i < n; ++i) {
        const LabeledPoint s = mix.sample(rng);
        ASSERT_TRUE(s.label);
        first += *s.label == 0;
    }
    // Both components are mirror images under x1 -> -x1, so truncation keeps them balanced.
    const double se = std::sqrt(0.25 / n);
    EXPECT_NEAR(static_cast<double>(first) / n, 0.5, 3.0 * se);
}

TEST(Data, Validation)
{
    auto cube = std::make_shared<Hypercube>(2);
    EXPECT_THROW(TruncatedGaussianMixture(cube, {0.5, 0.4}, {pt({0, 0}), pt({0, 0})}, {pt({1, 1}), pt({1, 1})}),
                 ConfigError);
    EXPECT_THROW(TruncatedGaussianMixture(cube, {1.0}, {pt({0, 0, 0})}, {pt({1, 1, 1})}), ConfigError);
    EXPECT_THROW(TruncatedGaussianMixture(cube, {1.0}, {pt({0, 0})}, {pt({-1, 1})}), ConfigError);
    EXPECT_THROW(EmpiricalData(cube, {}), ConfigError);
    EXPECT_THROW(EmpiricalData(cube, {pt({0.0, 2.0})}), ConfigError);

    const TruncatedGaussianMixture far(cube, {1.0}, {pt({50.0, 50.0})}, {pt({0.1, 0.1})}, 100);
    Rng rng(7);
    EXPECT_THROW(far.sample(rng), NumericalError);
}

TEST(Data, EmpiricalFrequencies)
{
    const EmpiricalData data(std::make_shared<Hypercube>(2), {pt({0.1, 0.1}), pt({0.2, 0.2}), pt({0.3, 0.3})});
    Rng rng(8);
    const int n = 30'000;
    std::array<long, 3> counts{};
    for (int i = 0; i < n; ++i) {
        const LabeledPoint s = data.sample(rng);
        EXPECT_FALSE(s.label);
        const int k = static_cast<int>(std::lround(s.x(0) * 10.0)) - 1;
        ASSERT_TRUE(k >= 0 && k < 3);
        ++counts[static_cast<std::size_t>(k)];
    }
    const double se = std::sqrt((1.0 / 3.0) * (2.0 / 3.0) / n);
    for (long c : counts) EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 3.0, 3.0 * se);
}
