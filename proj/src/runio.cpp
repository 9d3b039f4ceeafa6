#include "bseg/runio.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bseg {

namespace {

const char* kColumns =
    "epoch lr loss_total loss_dice_main loss_dice_shape loss_edge dice jaccard "
    "hausdorff hd_undefined seconds";

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("manifest: cannot write " + path.string());
  os << "# bseg run manifest\n";
  for (const auto& [k, v] : config) os << k << "=" << v << "\n";
  os << "# columns: " << kColumns << "\n";
  for (const EvalRow& r : rows) {
    os << "row " << r.epoch << ' ' << format_double(r.lr) << ' ' << format_double(r.loss_total)
       << ' ' << format_double(r.loss_dice_main) << ' ' << format_double(r.loss_dice_shape) << ' '
       << format_double(r.loss_edge) << ' ' << format_double(r.dice) << ' '
       << format_double(r.jaccard_index) << ' ' << format_double(r.hausdorff_dist) << ' '
       << r.hd_undefined << ' ' << format_double(r.seconds) << "\n";
  }
  if (!os) throw std::runtime_error("manifest: write failed for " + path.string());
}

RunManifest RunManifest::read(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("manifest: cannot open " + path.string());
  RunManifest m;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("row ", 0) == 0) {
      std::istringstream row(line.substr(4));
      std::vector<std::string> tok;
      std::string t;
      while (row >> t) tok.push_back(t);
      if (tok.size() != 11)
        throw std::runtime_error("manifest: malformed row in " + path.string());
      EvalRow r;
      try {
        // std::stod handles "nan" and "inf", which operator>> does not
        r.epoch = std::stoi(tok[0]);
        r.lr = std::stod(tok[1]);
        r.loss_total = std::stod(tok[2]);
        r.loss_dice_main = std::stod(tok[3]);
        r.loss_dice_shape = std::stod(tok[4]);
        r.loss_edge = std::stod(tok[5]);
        r.dice = std::stod(tok[6]);
        r.jaccard_index = std::stod(tok[7]);
        r.hausdorff_dist = std::stod(tok[8]);
        r.hd_undefined = std::stoi(tok[9]);
        r.seconds = std::stod(tok[10]);
      } catch (const std::exception&) {
        throw std::runtime_error("manifest: malformed row in " + path.string());
      }
      m.rows.push_back(r);
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("manifest: malformed line in " + path.string());
    m.config.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return m;
}

void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<uint8_t>& pixels) {
  if (pixels.size() != static_cast<size_t>(width) * static_cast<size_t>(height))
    throw std::invalid_argument("write_pgm: pixel count does not match dimensions");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("write_pgm: cannot write " + path.string());
  os << "P2\n" << width << ' ' << height << "\n255\n";
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      os << static_cast<int>(pixels[static_cast<size_t>(r) * width + c]);
      os << (c + 1 == width ? '\n' : ' ');
    }
  }
  if (!os) throw std::runtime_error("write_pgm: write failed for " + path.string());
}

PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_pgm: cannot open " + path.string());
  auto next_token = [&is, &path]() {
    std::string tok;
    while (is >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(is, rest);
        continue;
      }
      return tok;
    }
    throw std::runtime_error("read_pgm: truncated file " + path.string());
  };
  if (next_token() != "P2") throw std::runtime_error("read_pgm: not a plain PGM: " + path.string());
  PgmImage img;
  img.width = std::stoi(next_token());
  img.height = std::stoi(next_token());
  int maxval = std::stoi(next_token());
  if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 255)
    throw std::runtime_error("read_pgm: bad header in " + path.string());
  img.pixels.resize(static_cast<size_t>(img.width) * img.height);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(std::stoi(next_token()));
  return img;
}

void write_gray_pgm(const std::filesystem::path& path, const Tensor& t, int sample) {
  if (t.rank() != 4 || t.dim(1) != 1)
    throw std::invalid_argument("write_gray_pgm: expected [N,1,H,W], got " + t.shape_str());
  const int h = t.dim(2), w = t.dim(3);
  std::vector<uint8_t> px(static_cast<size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double v = std::min(std::max(t.at4(sample, 0, r, c), 0.0), 1.0);
      px[static_cast<size_t>(r) * w + c] = static_cast<uint8_t>(std::lround(255.0 * v));
    }
  }
  write_pgm(path, w, h, px);
}

void write_mask_pgm(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<uint8_t> px(mask.values.size());
  for (size_t i = 0; i < px.size(); ++i) px[i] = mask.values[i] ? 255 : 0;
  write_pgm(path, mask.width, mask.height, px);
}

BinaryMask mask_from_pgm(const std::filesystem::path& path) {
  PgmImage img = read_pgm(path);
  BinaryMask m{img.height, img.width, std::vector<uint8_t>(img.pixels.size())};
  for (size_t i = 0; i < img.pixels.size(); ++i) m.values[i] = img.pixels[i] > 127 ? 1 : 0;
  return m;
}

std::vector<std::pair<std::string, std::string>> parse_config_file(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: missing '=' at " + path.string() + ":" +
                               std::to_string(lineno));
    out.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return out;
}

}  // namespace bseg
