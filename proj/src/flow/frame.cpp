#include "mcm/flow/frame.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace mcm {

Frame::Frame(int height, int width, double fill)
    : height_(height),
      width_(width),
      pixels_(static_cast<size_t>(height) * width * 3, fill) {
  if (height <= 0 || width <= 0) {
    throw std::invalid_argument("frame dimensions must be positive");
  }
}

double Frame::gray(int y, int x) const {
  const size_t i = index(y, x, 0);
  return (pixels_[i] + pixels_[i + 1] + pixels_[i + 2]) / 3.0;
}

Tensor Frame::to_tensor() const {
  Tensor t({3, height_, width_});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x) t.at(c, y, x) = at(y, x, c);
  return t;
}

void Frame::clamp() {
  for (double& p : pixels_) p = std::clamp(p, 0.0, 1.0);
}

void write_ppm(const Frame& frame, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "P6\n" << frame.width() << ' ' << frame.height() << "\n255\n";
  std::string row;
  for (double p : frame.pixels()) {
    row.push_back(static_cast<char>(
        static_cast<unsigned char>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0))));
  }
  f.write(row.data(), static_cast<std::streamsize>(row.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

namespace {

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  // skip whitespace and '#' comments
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value = 0;
  if (!(in >> value)) {
    throw std::runtime_error(path.string() + ": malformed PPM header");
  }
  return value;
}

}  // namespace

Frame read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  char magic[2];
  if (!f.read(magic, 2) || magic[0] != 'P' || magic[1] != '6') {
    throw std::runtime_error(path.string() + ": not a binary PPM (P6)");
  }
  const int width = read_header_int(f, path);
  const int height = read_header_int(f, path);
  const int maxval = read_header_int(f, path);
  if (width <= 0 || height <= 0 || maxval != 255) {
    throw std::runtime_error(path.string() +
                             ": unsupported PPM geometry or maxval");
  }
  f.get();  // single whitespace before raster
  std::string raster(static_cast<size_t>(width) * height * 3, '\0');
  if (!f.read(raster.data(), static_cast<std::streamsize>(raster.size()))) {
    throw std::runtime_error(path.string() + ": truncated PPM raster");
  }
  Frame frame(height, width);
  size_t i = 0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        frame.at(y, x, c) = static_cast<unsigned char>(raster[i++]) / 255.0;
  return frame;
}

}  // namespace mcm
