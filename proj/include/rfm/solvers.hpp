#pragma once

// Explicit Runge-Kutta one-step solvers. States are matrices whose columns are
// independent trajectories sharing the same time.

#include "rfm/core.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <string>
#include <vector>

namespace rfm {

enum class Method { euler, midpoint, heun3, rk4, dopri5 };

struct SolverKind {
    Method method = Method::heun3;
    double atol = 1e-5;  ///< dopri5 only
    double rtol = 1e-5;  ///< dopri5 only

    void validate() const
    {
        if (!(atol > 0.0) || !(rtol > 0.0)) throw ConfigError("solver: atol and rtol must be positive");
    }
};

/// Velocity evaluated on a batch of points (columns) at one time.
using VelocityFn = std::function<Mat(const Mat&, double)>;

inline int stages_per_step(Method m)
{
    switch (m) {
    case Method::euler: return 1;
    case Method::midpoint: return 2;
    case Method::heun3: return 3;
    case Method::rk4: return 4;
    case Method::dopri5: return 6;
    }
    return 0;
}

inline Method parse_method(const std::string& name)
{
    if (name == "euler") return Method::euler;
    if (name == "midpoint") return Method::midpoint;
    if (name == "heun3") return Method::heun3;
    if (name == "rk4") return Method::rk4;
    if (name == "dopri5") return Method::dopri5;
    throw ConfigError("unknown solver '" + name + "'");
}

inline std::string method_name(Method m)
{
    switch (m) {
    case Method::euler: return "euler";
    case Method::midpoint: return "midpoint";
    case Method::heun3: return "heun3";
    case Method::rk4: return "rk4";
    case Method::dopri5: return "dopri5";
    }
    return "?";
}

namespace detail {

struct Tableau {
    std::vector<double> c;
    std::vector<std::vector<double>> a;  // strictly lower triangular rows
    std::vector<double> b;
};

inline const Tableau& tableau(Method m)
{
    static const Tableau euler{{0.0}, {{}}, {1.0}};
    static const Tableau midpoint{{0.0, 0.5}, {{}, {0.5}}, {0.0, 1.0}};
    static const Tableau heun3{{0.0, 1.0 / 3.0, 2.0 / 3.0}, {{}, {1.0 / 3.0}, {0.0, 2.0 / 3.0}},
                               {0.25, 0.0, 0.75}};
    static const Tableau rk4{{0.0, 0.5, 0.5, 1.0}, {{}, {0.5}, {0.0, 0.5}, {0.0, 0.0, 1.0}},
                             {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0}};
    switch (m) {
    case Method::euler: return euler;
    case Method::midpoint: return midpoint;
    case Method::heun3: return heun3;
    case Method::rk4: return rk4;
    case Method::dopri5: break;
    }
    throw InvalidArgument("dopri5 has no fixed-step tableau");
}

inline Mat eval_checked(const VelocityFn& v, const Mat& x, double t)
{
    Mat k = v(x, t);
    if (k.rows() != x.rows() || k.cols() != x.cols()) throw InvalidArgument("velocity returned wrong shape");
    if (!k.allFinite()) throw NumericalError("velocity returned a non-finite value");
    return k;
}

}  // namespace detail

/// One fixed step from t0 to t1. Stage points are passed to v as-is, even if
/// they leave the domain.
inline Mat solver_step(Method method, const Mat& x, double t0, double t1, const VelocityFn& v)
{
    if (!(t0 < t1)) throw InvalidArgument("solver_step: requires t0 < t1");
    const detail::Tableau& tab = detail::tableau(method);
    const double h = t1 - t0;
    const std::size_t s = tab.b.size();
    std::vector<Mat> k(s);
    for (std::size_t i = 0; i < s; ++i) {
        Mat stage = x;
        for (std::size_t j = 0; j < i; ++j) {
            if (tab.a[i][j] != 0.0) stage += (h * tab.a[i][j]) * k[j];
        }
        k[i] = detail::eval_checked(v, stage, t0 + tab.c[i] * h);
    }
    Mat out = x;
    for (std::size_t i = 0; i < s; ++i) {
        if (tab.b[i] != 0.0) out += (h * tab.b[i]) * k[i];
    }
    return out;
}

/// Dormand-Prince 5(4) step with FSAL: k1 = v(x, t0) is supplied by the caller;
/// k7 = v(x_new, t0 + h) is returned for reuse.
struct Dopri5Step {
    Mat x;       ///< fifth-order proposal
    Mat k7;      ///< velocity at the proposal
    double err;  ///< scaled RMS error estimate; the step is acceptable when <= 1
};

inline Dopri5Step dopri5_step(const Mat& x, const Mat& k1, double t0, double h, const VelocityFn& v,
                              double atol, double rtol)
{
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    // Difference between the fifth- and fourth-order weights.
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;

    const Mat k2 = detail::eval_checked(v, x + h * (a21 * k1), t0 + c2 * h);
    const Mat k3 = detail::eval_checked(v, x + h * (a31 * k1 + a32 * k2), t0 + c3 * h);
    const Mat k4 = detail::eval_checked(v, x + h * (a41 * k1 + a42 * k2 + a43 * k3), t0 + c4 * h);
    const Mat k5 = detail::eval_checked(v, x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), t0 + c5 * h);
    const Mat k6 =
        detail::eval_checked(v, x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), t0 + h);
    Mat xn = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    Mat k7 = detail::eval_checked(v, xn, t0 + h);
    const Mat e = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const Mat scale = (atol + rtol * x.cwiseAbs().cwiseMax(xn.cwiseAbs()).array()).matrix();
    const double err = std::sqrt((e.array() / scale.array()).square().mean());
    return {std::move(xn), std::move(k7), err};
}

struct AdaptiveResult {
    Mat x;
    long nfe = 0;
    long accepted = 0;
    long rejected = 0;
};

inline constexpr double kMinAdaptiveStep = 1e-10;

/// Adaptive Dormand-Prince from t0 to t1. After every accepted step `post`
/// may replace the state (reflection); returning true marks it changed, which
/// invalidates the FSAL velocity.
inline AdaptiveResult integrate_dopri5(const Mat& x0, double t0, double t1, const VelocityFn& v, double atol,
                                       double rtol, const std::function<bool(const Mat&, Mat&)>& post = {})
{
    if (!(t0 < t1)) throw InvalidArgument("integrate_dopri5: requires t0 < t1");
    AdaptiveResult r;
    r.x = x0;
    Mat k1 = detail::eval_checked(v, r.x, t0);
    r.nfe = 1;

    // Initial step from the scaled sizes of state and velocity.
    const Mat sc = (atol + rtol * r.x.cwiseAbs().array()).matrix();
    const double d0 = std::sqrt((r.x.array() / sc.array()).square().mean());
    const double d1 = std::sqrt((k1.array() / sc.array()).square().mean());
    double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h = std::min(h, t1 - t0);

    double t = t0;
    while (t < t1) {
        const bool last = t + h >= t1;
        const double step = last ? t1 - t : h;
        if (step < kMinAdaptiveStep) throw NumericalError("dopri5: step size underflow");
        Dopri5Step s = dopri5_step(r.x, k1, t, step, v, atol, rtol);
        r.nfe += 6;
        if (!std::isfinite(s.err)) throw NumericalError("dopri5: non-finite error estimate");
        const double fac = s.err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(s.err, -0.2), 0.2, 5.0);
        if (s.err <= 1.0) {
            t = last ? t1 : t + step;
            ++r.accepted;
            Mat next = std::move(s.x);
            bool changed = false;
            if (post) {
                Mat moved;
                changed = post(next, moved);
                if (changed) next = std::move(moved);
            }
            r.x = std::move(next);
            if (changed && t < t1) {
                k1 = detail::eval_checked(v, r.x, t);
                ++r.nfe;
            } else {
                k1 = std::move(s.k7);
            }
            h = step * fac;
        } else {
            ++r.rejected;
            h = step * std::min(1.0, fac);
        }
    }
    return r;
}

}  // namespace rfm
