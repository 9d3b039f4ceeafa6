#pragma once

#include "bseg/metrics.hpp"
#include "bseg/train.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace bseg {

// Text record of one run: effective configuration echoed as key=value lines,
// then one metric row per eval point. Numbers are printed with enough digits
// to round-trip exactly.
struct RunManifest {
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<EvalRow> rows;

  void write(const std::filesystem::path& path) const;
  static RunManifest read(const std::filesystem::path& path);
};

std::string format_double(double v);  // shortest lossless decimal form

// Plain (ASCII) PGM, one byte of dynamic range.
void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<uint8_t>& pixels);
struct PgmImage {
  int width = 0, height = 0;
  std::vector<uint8_t> pixels;
};
PgmImage read_pgm(const std::filesystem::path& path);

// round(255 * v) per pixel, v clamped to [0,1]; sample n of a [N,1,H,W] tensor.
void write_gray_pgm(const std::filesystem::path& path, const Tensor& t, int sample);
void write_mask_pgm(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask mask_from_pgm(const std::filesystem::path& path);

// Flat key=value file, '#' starts a comment. Order preserved.
std::vector<std::pair<std::string, std::string>> parse_config_file(
    const std::filesystem::path& path);

}  // namespace bseg
