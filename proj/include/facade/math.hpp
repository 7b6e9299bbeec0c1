#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace facade {

using real = double;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using MatX = Eigen::MatrixXd;

inline constexpr real kPi = 3.14159265358979323846;

using Rng = std::mt19937_64;

inline real uniform(Rng& rng) {
  return std::uniform_real_distribution<real>(0.0, 1.0)(rng);
}

inline real uniform(Rng& rng, real lo, real hi) {
  return std::uniform_real_distribution<real>(lo, hi)(rng);
}

inline Vec3 uniform_sphere(Rng& rng) {
  const real z = uniform(rng, -1.0, 1.0);
  const real phi = uniform(rng, 0.0, 2.0 * kPi);
  const real r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

// Uniform direction on the hemisphere around +n.
inline Vec3 uniform_hemisphere(Rng& rng, const Vec3& n) {
  Vec3 d = uniform_sphere(rng);
  return d.dot(n) < 0.0 ? Vec3(-d) : d;
}

// Deterministic low-discrepancy directions: prefix of the R2 sequence mapped
// area-preservingly to the sphere. sphere_sequence(2n) starts with the same
// n directions as sphere_sequence(n).
inline Vec3 sphere_sequence_dir(std::size_t k) {
  constexpr real a1 = 0.7548776662466927;
  constexpr real a2 = 0.5698402909980532;
  auto fract = [](real x) { return x - std::floor(x); };
  const real u = fract(0.5 + (static_cast<real>(k) + 1.0) * a1);
  const real v = fract(0.5 + (static_cast<real>(k) + 1.0) * a2);
  const real z = 2.0 * u - 1.0;
  const real phi = 2.0 * kPi * v;
  const real r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

// Any unit vector orthogonal to n.
inline Vec3 orthonormal(const Vec3& n) {
  const Vec3 ref = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return n.cross(ref).normalized();
}

// Tangent frame (t, b, n) with right-handed orientation.
inline void build_frame(const Vec3& n, Vec3& t, Vec3& b) {
  t = orthonormal(n);
  b = n.cross(t);
}

inline real clamp01(real x) { return std::clamp(x, 0.0, 1.0); }

inline Vec3 clamp01(const Vec3& v) {
  return {clamp01(v.x()), clamp01(v.y()), clamp01(v.z())};
}

inline real sigmoid(real x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline real softplus(real x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline real softplus_deriv(real x) { return sigmoid(x); }

// Inverse of softplus, for initializing raw parameters from target values.
inline real softplus_inverse(real y) {
  return y > 30.0 ? y : std::log(std::expm1(y));
}

inline bool all_finite(const VecX& v) { return v.allFinite(); }

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace facade
