#pragma once

#include <memory>
#include <vector>

#include "facade/math.hpp"

namespace facade {

// Anything that can be queried as a signed distance field. The default
// gradient is a central-difference stencil; analytic shapes override it with
// the closed form. Regularization losses always use stencil_grad so their
// parameter gradients stay first-order for learned fields.
class SdfField {
 public:
  virtual ~SdfField() = default;
  virtual real sdf(const Vec3& x) const = 0;

  virtual Vec3 sdf_grad(const Vec3& x) const { return stencil_grad(x); }

  Vec3 stencil_grad(const Vec3& x, real h = 1e-4) const {
    Vec3 g;
    for (int j = 0; j < 3; ++j) {
      Vec3 a = x, b = x;
      a[j] += h;
      b[j] -= h;
      g[j] = (sdf(a) - sdf(b)) / (2.0 * h);
    }
    return g;
  }

  // Unit surface normal from the analytic gradient route.
  Vec3 normal(const Vec3& x) const {
    const Vec3 g = sdf_grad(x);
    const real n = g.norm();
    if (n < 1e-8) throw DomainError("normal_at: vanishing SDF gradient");
    return g / n;
  }
};

class SphereSdf final : public SdfField {
 public:
  SphereSdf(const Vec3& center, real radius) : center_(center), radius_(radius) {}
  real sdf(const Vec3& x) const override { return (x - center_).norm() - radius_; }
  Vec3 sdf_grad(const Vec3& x) const override {
    const Vec3 d = x - center_;
    const real n = d.norm();
    return n > 0.0 ? Vec3(d / n) : Vec3::UnitZ();
  }
  const Vec3& center() const { return center_; }
  real radius() const { return radius_; }

 private:
  Vec3 center_;
  real radius_;
};

// Half-space z <= 0 with s = z (or an arbitrary plane through `point`).
class PlaneSdf final : public SdfField {
 public:
  PlaneSdf(const Vec3& normal = Vec3::UnitZ(), const Vec3& point = Vec3::Zero())
      : n_(normal.normalized()), p_(point) {}
  real sdf(const Vec3& x) const override { return n_.dot(x - p_); }
  Vec3 sdf_grad(const Vec3&) const override { return n_; }

 private:
  Vec3 n_;
  Vec3 p_;
};

class BoxSdf final : public SdfField {
 public:
  BoxSdf(const Vec3& center, const Vec3& half_extent)
      : center_(center), half_(half_extent) {}
  real sdf(const Vec3& x) const override {
    const Vec3 q = (x - center_).cwiseAbs() - half_;
    const Vec3 outside = q.cwiseMax(0.0);
    return outside.norm() + std::min(q.maxCoeff(), 0.0);
  }
  const Vec3& center() const { return center_; }
  const Vec3& half_extent() const { return half_; }

 private:
  Vec3 center_;
  Vec3 half_;
};

// Shell between two concentric spheres; points in the cavity are fully
// enclosed. Used by visibility tests.
class HollowSphereSdf final : public SdfField {
 public:
  HollowSphereSdf(const Vec3& center, real inner, real outer)
      : center_(center), inner_(inner), outer_(outer) {}
  real sdf(const Vec3& x) const override {
    const real r = (x - center_).norm();
    return std::max(r - outer_, inner_ - r);
  }

 private:
  Vec3 center_;
  real inner_, outer_;
};

// Union of owned primitives.
class UnionSdf final : public SdfField {
 public:
  void add(std::shared_ptr<SdfField> f) { parts_.push_back(std::move(f)); }
  bool empty() const { return parts_.empty(); }
  real sdf(const Vec3& x) const override {
    real s = 1e9;
    for (const auto& p : parts_) s = std::min(s, p->sdf(x));
    return s;
  }
  // Index of the primitive realizing the minimum.
  int nearest(const Vec3& x) const {
    real s = 1e9;
    int best = -1;
    for (std::size_t i = 0; i < parts_.size(); ++i) {
      const real si = parts_[i]->sdf(x);
      if (si < s) {
        s = si;
        best = static_cast<int>(i);
      }
    }
    return best;
  }
  std::size_t size() const { return parts_.size(); }
  const SdfField& part(std::size_t i) const { return *parts_[i]; }

 private:
  std::vector<std::shared_ptr<SdfField>> parts_;
};

}  // namespace facade
