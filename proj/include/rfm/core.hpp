#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace rfm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A location in the ambient space of a domain.
using Point = Eigen::VectorXd;
/// A direction vector; unit length whenever a routine documents it so.
using Direction = Eigen::VectorXd;

using Rng = std::mt19937_64;

/// Absolute tolerance on (unit-scaled) constraint residuals.
inline constexpr double kBoundaryTol = 1e-9;

/// Incidence |alpha . n| below this counts as a grazing ray, not a hit.
inline constexpr double kTangentTol = 1e-12;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Precondition violations: dimension mismatch, point outside the domain, bad index.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Divergence, non-finite state, exhausted iteration caps.
class NumericalError : public Error {
public:
    using Error::Error;
};

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent generator for (seed, stream, substream); the same triple always
/// yields the same sequence, regardless of which thread asks for it.
inline Rng stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0)
{
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ stream);
    h = splitmix64(h ^ (substream * 0x632be59bd9b4e019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return Rng(seq);
}

inline double uniform01(Rng& rng)
{
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double standard_normal(Rng& rng)
{
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline bool all_finite(const Eigen::Ref<const Mat>& m)
{
    return m.allFinite();
}

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what)
{
    if (got != want) {
        throw InvalidArgument(std::string(what) + ": dimension mismatch (got " + std::to_string(got) +
                              ", expected " + std::to_string(want) + ")");
    }
}

}  // namespace rfm
