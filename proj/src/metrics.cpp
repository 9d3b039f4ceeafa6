#include "bseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bseg {

namespace {

struct Pixel {
  int r, c;
};

void require_same_shape(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument("mask shape mismatch: " + std::to_string(a.height) + "x" +
                                std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                                std::to_string(b.width));
}

std::vector<Pixel> foreground(const BinaryMask& m) {
  std::vector<Pixel> px;
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c)
      if (m.at(r, c)) px.push_back({r, c});
  return px;
}

int64_t min_sq_dist(const Pixel& p, const std::vector<Pixel>& set) {
  int64_t best = INT64_MAX;
  for (const Pixel& q : set) {
    int64_t dr = p.r - q.r, dc = p.c - q.c;
    best = std::min(best, dr * dr + dc * dc);
  }
  return best;
}

// All directed nearest-neighbor distances from a into b.
std::vector<double> directed_distances(const std::vector<Pixel>& a, const std::vector<Pixel>& b) {
  std::vector<double> out;
  out.reserve(a.size());
  for (const Pixel& p : a) out.push_back(std::sqrt(static_cast<double>(min_sq_dist(p, b))));
  return out;
}

int64_t intersection_count(const BinaryMask& a, const BinaryMask& b) {
  int64_t n = 0;
  for (size_t i = 0; i < a.values.size(); ++i) n += (a.values[i] & b.values[i]);
  return n;
}

}  // namespace

int64_t BinaryMask::count() const {
  return std::accumulate(values.begin(), values.end(), int64_t{0});
}

BinaryMask threshold_mask(const Tensor& probs, int sample, double threshold) {
  if (probs.rank() != 4 || probs.dim(1) != 1)
    throw std::invalid_argument("threshold_mask: expected [N,1,H,W], got " + probs.shape_str());
  const int h = probs.dim(2), w = probs.dim(3);
  BinaryMask m{h, w, std::vector<uint8_t>(static_cast<size_t>(h) * w)};
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) m.at(r, c) = probs.at4(sample, 0, r, c) > threshold ? 1 : 0;
  return m;
}

BinaryMask mask_from_tensor(const Tensor& mask, int sample) {
  return threshold_mask(mask, sample, 0.5);
}

double dice_score(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b);
  int64_t na = a.count(), nb = b.count();
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(intersection_count(a, b)) / static_cast<double>(na + nb);
}

double jaccard(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b);
  int64_t inter = intersection_count(a, b);
  int64_t uni = a.count() + b.count() - inter;
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double hausdorff(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b);
  std::vector<Pixel> pa = foreground(a), pb = foreground(b);
  if (pa.empty() && pb.empty()) return 0.0;
  if (pa.empty() || pb.empty()) throw HausdorffUndefined();
  int64_t worst = 0;
  for (const Pixel& p : pa) worst = std::max(worst, min_sq_dist(p, pb));
  for (const Pixel& q : pb) worst = std::max(worst, min_sq_dist(q, pa));
  return std::sqrt(static_cast<double>(worst));
}

double hausdorff95(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b);
  std::vector<Pixel> pa = foreground(a), pb = foreground(b);
  if (pa.empty() && pb.empty()) return 0.0;
  if (pa.empty() || pb.empty()) throw HausdorffUndefined();
  std::vector<double> d = directed_distances(pa, pb);
  std::vector<double> d2 = directed_distances(pb, pa);
  d.insert(d.end(), d2.begin(), d2.end());
  std::sort(d.begin(), d.end());
  double pos = 0.95 * static_cast<double>(d.size() - 1);
  size_t lo = static_cast<size_t>(pos);
  double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= d.size()) return d.back();
  return d[lo] + frac * (d[lo + 1] - d[lo]);
}

}  // namespace bseg
