#include "bseg/dataset.hpp"

#include "bseg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bseg {

namespace {

constexpr uint64_t kGenStream = 0x67656e;  // per-sample generation seeds
constexpr char kMagic[4] = {'B', 'S', 'E', 'G'};
constexpr uint32_t kVersion = 1;
constexpr int kMaxDim = 1 << 15;

struct Blob {
  double cx, cy;        // center
  double rx, ry;        // ellipse radii
  double rot;           // orientation
  double amp[3];        // boundary perturbation harmonics (k = 2,3,4)
  double phase[3];
};

// Radius multiplier of the wobbly boundary at angle phi, kept away from zero.
double boundary(const Blob& b, double phi) {
  double m = 1.0;
  for (int k = 0; k < 3; ++k) m += b.amp[k] * std::sin((k + 2) * phi + b.phase[k]);
  return std::max(m, 0.35);
}

// Normalized radial position of a pixel inside the blob frame; <= 1 is inside.
double radial(const Blob& b, double x, double y) {
  double dx = x - b.cx, dy = y - b.cy;
  double u = dx * std::cos(b.rot) + dy * std::sin(b.rot);
  double v = -dx * std::sin(b.rot) + dy * std::cos(b.rot);
  double ex = u / b.rx, ey = v / b.ry;
  double rho = std::hypot(ex, ey);
  if (rho == 0.0) return 0.0;
  return rho / boundary(b, std::atan2(ey, ex));
}

Sample make_sample(const SynthConfig& cfg, Rng& rng) {
  const int s = cfg.size;
  Tensor image({1, s, s});
  Tensor mask({1, s, s});

  // Smooth background texture from a few random sinusoids, mapped to
  // [bg_base, bg_base + bg_amp].
  const double bg_base = 0.10, bg_amp = 0.25;
  const double bg_max = bg_base + bg_amp;
  double fx[3], fy[3], ph[3];
  for (int k = 0; k < 3; ++k) {
    fx[k] = rng.uniform(0.5, 3.0);
    fy[k] = rng.uniform(0.5, 3.0);
    ph[k] = rng.uniform(0.0, 2.0 * M_PI);
  }
  Array tex(static_cast<Eigen::Index>(s) * s);
  for (int r = 0; r < s; ++r) {
    for (int c = 0; c < s; ++c) {
      double v = 0.0;
      for (int k = 0; k < 3; ++k)
        v += std::sin(2.0 * M_PI * (fx[k] * c + fy[k] * r) / s + ph[k]);
      tex[static_cast<Eigen::Index>(r) * s + c] = v;
    }
  }
  double lo = tex.minCoeff(), hi = tex.maxCoeff();
  double span = hi > lo ? hi - lo : 1.0;
  for (Eigen::Index i = 0; i < tex.size(); ++i)
    image[i] = bg_base + bg_amp * (tex[i] - lo) / span;

  int count = rng.uniform_int(cfg.blob_count_min, cfg.blob_count_max);
  std::vector<Blob> blobs(static_cast<size_t>(count));
  for (Blob& b : blobs) {
    b.cx = rng.uniform(0.25, 0.75) * s;
    b.cy = rng.uniform(0.25, 0.75) * s;
    double base_r = rng.uniform(0.10, 0.20) * s;
    double aspect = rng.uniform(0.65, 1.5);
    b.rx = base_r * aspect;
    b.ry = base_r / aspect;
    b.rot = rng.uniform(0.0, M_PI);
    for (int k = 0; k < 3; ++k) {
      b.amp[k] = rng.uniform(-1.0, 1.0) * cfg.boundary_jitter / (k + 2);
      b.phase[k] = rng.uniform(0.0, 2.0 * M_PI);
    }
  }

  for (int r = 0; r < s; ++r) {
    for (int c = 0; c < s; ++c) {
      double brightest = -1.0;
      for (const Blob& b : blobs) {
        double t = radial(b, c, r);
        if (t <= 1.0) brightest = std::max(brightest, 1.0 - t * t);
      }
      if (brightest >= 0.0) {
        Eigen::Index i = static_cast<Eigen::Index>(r) * s + c;
        image[i] = bg_max + cfg.contrast * (0.15 + 0.5 * brightest);
        mask[i] = 1.0;
      }
    }
  }

  for (Eigen::Index i = 0; i < image.size(); ++i) {
    double v = image[i] + rng.normal(0.0, cfg.noise_sigma);
    v = std::min(std::max(v, 0.0), 1.0);
    image[i] = static_cast<double>(static_cast<float>(v));
  }
  return Sample{std::move(image), std::move(mask)};
}

template <typename T>
void write_bytes(std::ostream& os, const T* data, size_t count) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(sizeof(T) * count));
}

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error(std::string("sample file truncated reading ") + what);
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

}  // namespace

std::vector<Sample> generate(const SynthConfig& config, int n) {
  if (n < 1) throw std::invalid_argument("generate: n must be >= 1");
  if (config.size < 8) throw std::invalid_argument("generate: size must be >= 8");
  if (config.noise_sigma < 0) throw std::invalid_argument("generate: noise_sigma must be >= 0");
  if (config.blob_count_min < 1 || config.blob_count_max < config.blob_count_min)
    throw std::invalid_argument("generate: bad blob count range");

  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(n));
  uint64_t base = mix_seed(config.seed, kGenStream);
  for (int i = 0; i < n; ++i) {
    Sample sample;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Rng rng(mix_seed(base, static_cast<uint64_t>(i) * 8 + static_cast<uint64_t>(attempt)));
      sample = make_sample(config, rng);
      if (sample.mask.array().sum() > 0.0) break;
    }
    if (sample.mask.array().sum() == 0.0) {
      // Pathological configuration; paint a minimal blob so downstream
      // boundary extraction always has work to do.
      int mid = config.size / 2;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          sample.mask[static_cast<Eigen::Index>(mid + dr) * config.size + mid + dc] = 1.0;
          sample.image[static_cast<Eigen::Index>(mid + dr) * config.size + mid + dc] = 0.9;
        }
    }
    out.push_back(std::move(sample));
  }
  return out;
}

void save_sample(const Sample& sample, const std::filesystem::path& path) {
  if (sample.image.rank() != 3 || sample.mask.rank() != 3 ||
      !sample.image.same_shape(sample.mask) || sample.image.dim(0) != 1)
    throw std::invalid_argument("save_sample: expected matching [1,H,W] image and mask");
  const int h = sample.image.dim(1), w = sample.image.dim(2);

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_sample: cannot open " + path.string());
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<uint32_t>(h));
  write_u32(os, static_cast<uint32_t>(w));
  for (Eigen::Index i = 0; i < sample.image.size(); ++i) {
    float f = static_cast<float>(sample.image[i]);
    write_bytes(os, &f, 1);
  }
  for (Eigen::Index i = 0; i < sample.mask.size(); ++i) {
    double m = sample.mask[i];
    if (m != 0.0 && m != 1.0) throw std::invalid_argument("save_sample: mask is not binary");
    uint8_t byte = m == 1.0 ? 1 : 0;
    write_bytes(os, &byte, 1);
  }
  if (!os) throw std::runtime_error("save_sample: write failed for " + path.string());
}

Sample load_sample(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_sample: cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("load_sample: bad magic in " + path.string());
  uint32_t version = read_u32(is, "version");
  if (version != kVersion)
    throw std::runtime_error("load_sample: unsupported version " + std::to_string(version));
  uint32_t h = read_u32(is, "height");
  uint32_t w = read_u32(is, "width");
  if (h == 0 || w == 0 || h > kMaxDim || w > kMaxDim)
    throw std::runtime_error("load_sample: dimension overflow " + std::to_string(h) + "x" +
                             std::to_string(w));
  const Eigen::Index px = static_cast<Eigen::Index>(h) * w;

  Sample sample{Tensor({1, static_cast<int>(h), static_cast<int>(w)}),
                Tensor({1, static_cast<int>(h), static_cast<int>(w)})};
  std::vector<float> img(static_cast<size_t>(px));
  if (!is.read(reinterpret_cast<char*>(img.data()), px * 4))
    throw std::runtime_error("load_sample: truncated image payload in " + path.string());
  std::vector<uint8_t> msk(static_cast<size_t>(px));
  if (!is.read(reinterpret_cast<char*>(msk.data()), px))
    throw std::runtime_error("load_sample: truncated mask payload in " + path.string());
  for (Eigen::Index i = 0; i < px; ++i) {
    sample.image[i] = static_cast<double>(img[static_cast<size_t>(i)]);
    uint8_t m = msk[static_cast<size_t>(i)];
    if (m > 1) throw std::runtime_error("load_sample: non-binary mask byte in " + path.string());
    sample.mask[i] = m;
  }
  return sample;
}

void save_dataset(const std::vector<Sample>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
  if (!manifest) throw std::runtime_error("save_dataset: cannot write manifest in " + dir.string());
  for (size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%05zu.bseg", i);
    save_sample(samples[i], dir / name);
    manifest << name << '\n';
  }
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest)
    throw std::runtime_error("load_dataset: missing manifest.txt in " + dir.string());
  std::vector<Sample> samples;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    samples.push_back(load_sample(dir / line));
  }
  if (samples.empty()) throw std::runtime_error("load_dataset: empty dataset in " + dir.string());
  return samples;
}

Tensor stack_images(const std::vector<Sample>& samples, const std::vector<int>& indices) {
  if (indices.empty()) throw std::invalid_argument("stack_images: empty batch");
  const Tensor& first = samples[static_cast<size_t>(indices[0])].image;
  const int h = first.dim(1), w = first.dim(2);
  Tensor batch({static_cast<int>(indices.size()), 1, h, w});
  for (size_t i = 0; i < indices.size(); ++i) {
    const Tensor& img = samples[static_cast<size_t>(indices[i])].image;
    if (img.dim(1) != h || img.dim(2) != w)
      throw std::invalid_argument("stack_images: inconsistent sample sizes");
    std::copy_n(img.data(), img.size(), batch.data() + static_cast<Eigen::Index>(i) * h * w);
  }
  return batch;
}

Tensor stack_masks(const std::vector<Sample>& samples, const std::vector<int>& indices) {
  if (indices.empty()) throw std::invalid_argument("stack_masks: empty batch");
  const Tensor& first = samples[static_cast<size_t>(indices[0])].mask;
  const int h = first.dim(1), w = first.dim(2);
  Tensor batch({static_cast<int>(indices.size()), 1, h, w});
  for (size_t i = 0; i < indices.size(); ++i) {
    const Tensor& m = samples[static_cast<size_t>(indices[i])].mask;
    if (m.dim(1) != h || m.dim(2) != w)
      throw std::invalid_argument("stack_masks: inconsistent sample sizes");
    std::copy_n(m.data(), m.size(), batch.data() + static_cast<Eigen::Index>(i) * h * w);
  }
  return batch;
}

}  // namespace bseg
