#include "rfm/sample.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>

using namespace rfm;
using rfm::testing::pt;
using rfm::testing::WholeSpace;

namespace {

const VelocityFn identity_field = [](const Mat& x, double) { return x; };

double solve_exp(Method m, int steps)
{
    Mat x = Mat::Constant(1, 1, 1.0);
    for (int k = 0; k < steps; ++k) {
        x = solver_step(m, x, static_cast<double>(k) / steps, static_cast<double>(k + 1) / steps, identity_field);
    }
    return x(0, 0);
}

// Least-squares slope of log(error) against log(h).
double convergence_order(Method m)
{
    std::vector<double> lx, ly;
    for (int steps : {10, 20, 40, 80, 160}) {
        lx.push_back(std::log(1.0 / steps));
        ly.push_back(std::log(std::abs(solve_exp(m, steps) - std::numbers::e)));
    }
    const double n = static_cast<double>(lx.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

VelocityNet random_net(int d, int classes, std::uint64_t seed, double scale = 1.0)
{
    VelocityNet net(NetConfig{d, 16, 2, 8, classes, seed});
    Rng rng(seed);
    for (Eigen::Index i = 0; i < net.params().size(); ++i) net.params()(i) = scale * standard_normal(rng);
    return net;
}

const VelocityField zero_field{[](const Mat& x, double) { return Mat(Mat::Zero(x.rows(), x.cols())); }, 1};

}  // namespace

TEST(SolverStep, ZeroFieldIsIdentity)
{
    const Mat x = (Mat(2, 3) << 0.1, 0.2, 0.3, -0.4, 0.5, -0.6).finished();
    for (Method m : {Method::euler, Method::midpoint, Method::heun3, Method::rk4}) {
        EXPECT_EQ(solver_step(m, x, 0.2, 0.3, zero_field.eval), x);
    }
    EXPECT_EQ(integrate_dopri5(x, 0.0, 1.0, zero_field.eval, 1e-5, 1e-5).x, x);
}

TEST(SolverStep, EulerIdentity)
{
    const Mat x = Mat::Constant(1, 1, 1.0);
    EXPECT_DOUBLE_EQ(solver_step(Method::euler, x, 0.0, 0.25, identity_field)(0, 0), 1.25);
}

TEST(SolverStep, ConvergenceOrders)
{
    EXPECT_NEAR(convergence_order(Method::euler), 1.0, 0.2);
    EXPECT_NEAR(convergence_order(Method::midpoint), 2.0, 0.2);
    EXPECT_NEAR(convergence_order(Method::heun3), 3.0, 0.2);
    EXPECT_NEAR(convergence_order(Method::rk4), 4.0, 0.2);
}

TEST(SolverStep, Errors)
{
    const Mat x = Mat::Constant(1, 1, 1.0);
    EXPECT_THROW(solver_step(Method::euler, x, 0.5, 0.5, identity_field), InvalidArgument);
    const VelocityFn bad = [](const Mat& y, double) { return Mat(Mat::Constant(y.rows(), y.cols(), NAN)); };
    EXPECT_THROW(solver_step(Method::rk4, x, 0.0, 0.1, bad), NumericalError);
    EXPECT_THROW(parse_method("leapfrog"), ConfigError);
    EXPECT_EQ(parse_method(method_name(Method::heun3)), Method::heun3);
}

TEST(Dopri5, ReachesTolerance)
{
    const AdaptiveResult r = integrate_dopri5(Mat::Constant(1, 1, 1.0), 0.0, 1.0, identity_field, 1e-5, 1e-5);
    EXPECT_LE(std::abs(r.x(0, 0) - std::numbers::e), 1e-5 * std::numbers::e);
    EXPECT_EQ(r.nfe, 1 + 6 * (r.accepted + r.rejected));
}

TEST(Dopri5, StepUnderflow)
{
    // Finite-time blow-up at t = 0.5 forces the step size to collapse.
    const VelocityFn blowup = [](const Mat& x, double) { return Mat(x.array().square().matrix() * 1.0); };
    EXPECT_THROW(integrate_dopri5(Mat::Constant(1, 1, 2.0), 0.0, 1.0, blowup, 1e-5, 1e-5), NumericalError);
}

TEST(ReflectSegment, Examples)
{
    const Hypercube square(2);
    ReflectResult r = reflect_segment(square, pt({0.9, 0.0}), pt({1.4, 0.0}));
    EXPECT_NEAR(r.x(0), 0.6, 1e-15);
    EXPECT_EQ(r.x(1), 0.0);
    EXPECT_EQ(r.reflections, 1);

    r = reflect_segment(square, pt({0.2, 0.3}), pt({0.2, 0.3}));
    EXPECT_EQ(r.x, pt({0.2, 0.3}));
    EXPECT_EQ(r.reflections, 0);

    const Hypercube line(1);
    r = reflect_segment(line, pt({0.0}), pt({7.3}));
    // Fold oracle: 1 - |(7.3 + 1) mod 4 - 2| = 1 - |0.3 - 2|.
    EXPECT_NEAR(r.x(0), -0.7, 1e-12);
    EXPECT_EQ(r.reflections, 4);
    EXPECT_NEAR(r.traversed, 7.3, 1e-12);
}

TEST(ReflectSegment, InteriorIsBitwiseNoOp)
{
    Rng rng(1);
    const Simplex simplex(3);
    for (int i = 0; i < 1000; ++i) {
        const Point y = simplex.uniform_sample(rng);
        const Point x = simplex.uniform_sample(rng);
        const Point mid = 0.5 * (x + y);  // convex: the segment stays inside
        const ReflectResult r = reflect_segment(simplex, y, mid);
        EXPECT_EQ(r.x, mid);
        EXPECT_EQ(r.reflections, 0);
    }
}

TEST(ReflectSegment, Errors)
{
    const Hypercube square(2);
    EXPECT_THROW(reflect_segment(square, pt({1.5, 0.0}), pt({0.0, 0.0})), InvalidArgument);
    EXPECT_THROW(reflect_segment(square, pt({0.0, 0.0}), pt({1e6, 0.0})), NumericalError);
}

TEST(HypercubeFold, Examples)
{
    EXPECT_NEAR(fold_coordinate(1.3), 0.7, 1e-15);
    EXPECT_NEAR(fold_coordinate(-1.5), -0.5, 1e-15);
    EXPECT_EQ(fold_coordinate(0.5), 0.5);
    EXPECT_EQ(fold_coordinate(1.0), 1.0);
    EXPECT_EQ(fold_coordinate(-1.0), -1.0);
    EXPECT_EQ(hypercube_fold_reflections(pt({7.3, 0.2, -1.5})), 5);
}

TEST(HypercubeFold, MatchesIterativeWalk)
{
    Rng rng(2);
    for (int d : {1, 2, 10}) {
        const Hypercube cube(d);
        double worst = 0.0;
        double worst_len = 0.0;
        for (int i = 0; i < 100'000; ++i) {
            const Point y = cube.uniform_sample(rng);
            Point xb(d);
            for (int j = 0; j < d; ++j) xb(j) = -9.0 + 18.0 * uniform01(rng);
            const ReflectResult r = reflect_segment(cube, y, xb);
            worst = std::max(worst, (r.x - hypercube_fold(xb)).cwiseAbs().maxCoeff());
            const double len = (xb - y).norm();
            worst_len = std::max(worst_len, std::abs(r.traversed - len) / len);
            ASSERT_TRUE(cube.contains_strict(r.x));
        }
        EXPECT_LE(worst, 1e-9) << "d=" << d;
        EXPECT_LE(worst_len, 1e-9) << "d=" << d;
    }
}

TEST(ReflectSegment, ContainmentAndLengthOnCurvedDomains)
{
    Rng rng(3);
    const std::vector<std::shared_ptr<const Domain>> domains = {
        std::make_shared<HalfAnnulus>(1.0, 2.0), std::make_shared<Cup>(), std::make_shared<Simplex>(10)};
    for (const auto& dom : domains) {
        for (int i = 0; i < 20'000; ++i) {
            const Point y = dom->uniform_sample(rng);
            Point xb = y;
            for (int j = 0; j < dom->dim(); ++j) xb(j) += 3.0 * standard_normal(rng);
            const ReflectResult r = reflect_segment(*dom, y, xb);
            ASSERT_TRUE(dom->contains_strict(r.x)) << dom->kind();
            EXPECT_NEAR(r.traversed, (xb - y).norm(), 1e-9 * (xb - y).norm()) << dom->kind();
        }
    }
}

TEST(Guidance, Endpoints)
{
    const VelocityNet net = random_net(2, 3, 4);
    const Point x = pt({0.2, -0.1});
    EXPECT_EQ(guided_velocity(net, x, 0.4, {1.0, 1}), net.forward(x, 0.4, 1));
    EXPECT_EQ(guided_velocity(net, x, 0.4, {0.0, 1}), net.forward(x, 0.4, std::nullopt));
    const Vec two = 2.0 * net.forward(x, 0.4, 1) - net.forward(x, 0.4, std::nullopt);
    EXPECT_LE((guided_velocity(net, x, 0.4, {2.0, 1}) - two).norm(), 1e-14 * two.norm());
    EXPECT_THROW(guided_velocity(random_net(2, 0, 5), x, 0.4, {1.0, 0}), InvalidArgument);
    EXPECT_THROW(guided_field(random_net(2, 0, 5), {1.0, 0}), InvalidArgument);
    EXPECT_THROW(guided_field(net, {1.0, 7}), InvalidArgument);
}

TEST(SampleBatch, ZeroFieldReturnsPriorDraws)
{
    auto cube = std::make_shared<Hypercube>(3);
    const UniformPrior prior(cube);
    SampleOptions opts;
    opts.seed = 11;
    opts.grid = TimeGrid::uniform(5);
    const SampleRunReport r = sample_batch(*cube, prior, zero_field, 40, opts);
    EXPECT_EQ(r.reflections, 0);
    for (Eigen::Index i = 0; i < 40; ++i) {
        Rng rng = stream_rng(11, static_cast<std::uint64_t>(i));
        EXPECT_EQ(Point(r.samples.col(i)), prior.sample(rng));
    }
}

TEST(SampleBatch, RejectsPriorDrawsOutsideDomain)
{
    auto cube = std::make_shared<Hypercube>(2);
    const GaussianPrior wide(2);
    SampleOptions opts;
    opts.grid = TimeGrid::uniform(2);
    for (bool fast : {true, false}) {
        opts.hypercube_fast_path = fast;
        EXPECT_THROW(sample_batch(*cube, wide, zero_field, 200, opts), InvalidArgument);
    }
}

TEST(SampleBatch, NfeAccounting)
{
    auto cube = std::make_shared<Hypercube>(2);
    const UniformPrior prior(cube);
    SampleOptions opts;
    const VelocityNet net = random_net(2, 2, 6, 0.1);
    SampleRunReport r = sample_batch(*cube, prior, net_field(net), 7, opts);
    EXPECT_EQ(r.nfe, 300 * 7);
    r = sample_batch(*cube, prior, guided_field(net, {3.0, 0}), 7, opts);
    EXPECT_EQ(r.nfe, 600 * 7);
    opts.solver.method = Method::rk4;
    opts.grid = TimeGrid::uniform(10);
    EXPECT_EQ(sample_batch(*cube, prior, net_field(net), 3, opts).nfe, 40 * 3);
    EXPECT_EQ(sample_batch(*cube, prior, net_field(net), 0, opts).samples.cols(), 0);
}

TEST(SampleBatch, AlwaysInsideWithStrongFields)
{
    Mat tri(3, 2);
    tri << -1, 0, 0, -1, 1, 2;
    Vec tb(3);
    tb << 0.5, 0.5, 1.5;
    const std::vector<std::shared_ptr<const Domain>> domains = {
        std::make_shared<Hypercube>(2),     std::make_shared<Hypercube>(10),    std::make_shared<Simplex>(2),
        std::make_shared<Simplex>(10),      std::make_shared<HalfAnnulus>(1.0, 2.0), std::make_shared<Cup>(),
        std::make_shared<ConvexPolytope>(tri, tb)};
    for (const auto& dom : domains) {
        const VelocityNet net = random_net(dom->dim(), 0, 7, 0.5);
        const UniformPrior prior(dom);
        for (bool fast : {true, false}) {
            SampleOptions opts;
            opts.grid = TimeGrid::uniform(20);
            opts.hypercube_fast_path = fast;
            const SampleRunReport r = sample_batch(*dom, prior, net_field(net), 500, opts);
            long bad = 0;
            for (Eigen::Index i = 0; i < r.samples.cols(); ++i) bad += !dom->contains_strict(r.samples.col(i));
            EXPECT_EQ(bad, 0) << dom->kind();
            EXPECT_GT(r.reflections, 0) << dom->kind();
        }
        SampleOptions adaptive;
        adaptive.solver.method = Method::dopri5;
        adaptive.solver.atol = adaptive.solver.rtol = 1e-4;
        const SampleRunReport r = sample_batch(*dom, prior, net_field(net), 50, adaptive);
        for (Eigen::Index i = 0; i < r.samples.cols(); ++i) EXPECT_TRUE(dom->contains_strict(r.samples.col(i)));
        EXPECT_GE(r.nfe, 50 * 7);
    }
}

TEST(SampleBatch, FastPathAgreesWithWalk)
{
    auto cube = std::make_shared<Hypercube>(2);
    const UniformPrior prior(cube);
    const VelocityNet net = random_net(2, 0, 8, 0.5);
    SampleOptions opts;
    opts.grid = TimeGrid::uniform(20);
    const SampleRunReport fast = sample_batch(*cube, prior, net_field(net), 200, opts);
    opts.hypercube_fast_path = false;
    const SampleRunReport walk = sample_batch(*cube, prior, net_field(net), 200, opts);
    EXPECT_LE((fast.samples - walk.samples).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_EQ(fast.reflections, walk.reflections);
}

TEST(SampleBatch, ThreadCountIsBitwiseNeutral)
{
    auto ring = std::make_shared<HalfAnnulus>(1.0, 2.0);
    const UniformPrior prior(ring);
    const VelocityNet net = random_net(2, 0, 9, 0.5);
    SampleOptions opts;
    opts.grid = TimeGrid::uniform(10);
    opts.chunk = 16;
    opts.threads = 1;
    const SampleRunReport a = sample_batch(*ring, prior, net_field(net), 100, opts);
    opts.threads = 4;
    const SampleRunReport b = sample_batch(*ring, prior, net_field(net), 100, opts);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_EQ(a.nfe, b.nfe);
    EXPECT_EQ(a.reflections, b.reflections);
}

TEST(SampleBatch, GuidanceEndpointsBitwise)
{
    auto cube = std::make_shared<Hypercube>(2);
    const UniformPrior prior(cube);
    const VelocityNet net = random_net(2, 2, 10, 0.5);
    SampleOptions opts;
    opts.grid = TimeGrid::uniform(10);
    const Mat w1 = sample_batch(*cube, prior, guided_field(net, {1.0, 1}), 50, opts).samples;
    const Mat cond = sample_batch(*cube, prior, net_field(net, 1), 50, opts).samples;
    const Mat w0 = sample_batch(*cube, prior, guided_field(net, {0.0, 1}), 50, opts).samples;
    const Mat uncond = sample_batch(*cube, prior, net_field(net), 50, opts).samples;
    EXPECT_EQ(w1, cond);
    EXPECT_EQ(w0, uncond);
    EXPECT_NE(cond, uncond);
}

TEST(SampleBatch, WholeSpaceReproducesVanillaSolver)
{
    const WholeSpace space(2);
    const GaussianPrior prior(2);
    const VelocityNet net = random_net(2, 0, 12, 0.5);
    for (Method m : {Method::euler, Method::heun3, Method::rk4}) {
        SampleOptions opts;
        opts.solver.method = m;
        opts.grid = TimeGrid::uniform(25);
        opts.seed = 3;
        opts.chunk = 64;
        const SampleRunReport r = sample_batch(space, prior, net_field(net), 64, opts);
        EXPECT_EQ(r.reflections, 0);
        Mat x(2, 64);
        for (Eigen::Index i = 0; i < 64; ++i) {
            Rng rng = stream_rng(3, static_cast<std::uint64_t>(i));
            x.col(i) = prior.sample(rng);
        }
        for (int k = 0; k < 25; ++k) x = solver_step(m, x, opts.grid.points[k], opts.grid.points[k + 1], net_field(net).eval);
        EXPECT_EQ(r.samples, x) << method_name(m);
    }
    SampleOptions opts;
    opts.solver.method = Method::dopri5;
    opts.seed = 4;
    const SampleRunReport r = sample_batch(space, prior, net_field(net), 5, opts);
    for (Eigen::Index i = 0; i < 5; ++i) {
        Rng rng = stream_rng(4, static_cast<std::uint64_t>(i));
        const AdaptiveResult v = integrate_dopri5(Mat(prior.sample(rng)), 0.0, 1.0, net_field(net).eval, 1e-5, 1e-5);
        EXPECT_EQ(Point(r.samples.col(i)), Point(v.x.col(0)));
    }
}

TEST(TimeGrid, Validation)
{
    TimeGrid g{{0.0, 0.5, 0.5, 1.0}};
    EXPECT_THROW(g.validate(), ConfigError);
    g.points = {0.1, 1.0};
    EXPECT_THROW(g.validate(), ConfigError);
    EXPECT_THROW(TimeGrid::uniform(0), ConfigError);
    EXPECT_EQ(TimeGrid::uniform(4).points, (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
}
