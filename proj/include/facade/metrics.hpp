#pragma once

#include <vector>

#include "facade/image.hpp"

namespace facade {

struct ChamferResult {
  real mean = 0.0;        // symmetric: (pred_to_ref + ref_to_pred) / 2
  real pred_to_ref = 0.0; // mean nearest-neighbor distance, pred -> ref
  real ref_to_pred = 0.0;
};

// Symmetric mean nearest-neighbor distance, accelerated by a uniform hash
// grid. Throws on empty inputs.
ChamferResult chamfer_distance(const std::vector<Vec3>& pred, const std::vector<Vec3>& ref);

struct PsnrResult {
  real db = 0.0;
  bool infinite = false;  // MSE was exactly zero
  std::size_t evaluated_pixels = 0;
};

// 10 log10(1 / MSE) over pixels where mask (if given) is labeled (>= 0).
PsnrResult psnr(const Image& a, const Image& b, const LabelImage* mask = nullptr);

}  // namespace facade
