#pragma once

#include "bseg/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace bseg {

struct Sample {
  Tensor image;  // [1,H,W], values in [0,1]
  Tensor mask;   // [1,H,W], values in {0,1}
};

struct SynthConfig {
  int size = 64;
  int blob_count_min = 1;
  int blob_count_max = 3;
  double contrast = 0.6;
  double noise_sigma = 0.03;
  double boundary_jitter = 0.3;
  uint64_t seed = 0;
};

// Dark smoothly textured background with 1-3 bright ameboid blobs; the mask
// is the exact blob support. Deterministic given the seed; image values are
// quantized to float32 so file round trips are bit-exact.
std::vector<Sample> generate(const SynthConfig& config, int n);

// Sample container: "BSEG" magic, u32 version, u32 H, u32 W, float32 image
// payload, u8 mask payload, little-endian throughout.
void save_sample(const Sample& sample, const std::filesystem::path& path);
Sample load_sample(const std::filesystem::path& path);

// A dataset directory holds one file per sample plus manifest.txt listing
// the file names, one per line.
void save_dataset(const std::vector<Sample>& samples, const std::filesystem::path& dir);
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

// Stacks selected samples into network batches.
Tensor stack_images(const std::vector<Sample>& samples, const std::vector<int>& indices);
Tensor stack_masks(const std::vector<Sample>& samples, const std::vector<int>& indices);

}  // namespace bseg
