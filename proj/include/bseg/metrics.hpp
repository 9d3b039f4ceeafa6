#pragma once

#include "bseg/tensor.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace bseg {

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> values;  // row-major, {0,1}

  uint8_t at(int r, int c) const { return values[static_cast<size_t>(r) * width + c]; }
  uint8_t& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
  int64_t count() const;
  bool empty_mask() const { return count() == 0; }
};

// Thrown when a Hausdorff distance is requested between one empty and one
// non-empty mask; the value is undefined rather than silently capped.
struct HausdorffUndefined : std::runtime_error {
  HausdorffUndefined() : std::runtime_error("hausdorff undefined: exactly one mask is empty") {}
};

// Thresholds sample n of a [N,1,H,W] probability tensor at 0.5.
BinaryMask threshold_mask(const Tensor& probs, int sample, double threshold = 0.5);
BinaryMask mask_from_tensor(const Tensor& mask, int sample);

double dice_score(const BinaryMask& a, const BinaryMask& b);
double jaccard(const BinaryMask& a, const BinaryMask& b);

// Symmetric Hausdorff distance over foreground pixel coordinates, Euclidean,
// unit pixel spacing. Both empty -> 0; one-sided empty -> HausdorffUndefined.
double hausdorff(const BinaryMask& a, const BinaryMask& b);

// 95th-percentile variant over the pooled directed nearest-neighbor
// distances (linear interpolation between order statistics).
double hausdorff95(const BinaryMask& a, const BinaryMask& b);

}  // namespace bseg
