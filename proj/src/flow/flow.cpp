#include "mcm/flow/flow.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <stdexcept>

namespace mcm {

static_assert(std::endian::native == std::endian::little,
              ".flo I/O assumes a little-endian host");

FlowField::FlowField(int height, int width)
    : height_(height),
      width_(width),
      u_(static_cast<size_t>(std::max(height, 0)) * std::max(width, 0), 0.0),
      v_(u_.size(), 0.0) {}

bool FlowField::all_zero() const {
  for (size_t i = 0; i < u_.size(); ++i) {
    if (u_[i] != 0.0 || v_[i] != 0.0) return false;
  }
  return true;
}

bool FlowField::all_finite() const {
  for (size_t i = 0; i < u_.size(); ++i) {
    if (!std::isfinite(u_[i]) || !std::isfinite(v_[i])) return false;
  }
  return true;
}

Tensor FlowField::to_tensor(double scale) const {
  Tensor t({2, height_, width_});
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) {
      t.at(0, y, x) = u(y, x) / scale;
      t.at(1, y, x) = v(y, x) / scale;
    }
  return t;
}

namespace {

void require_same_size(const Frame& a, const Frame& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument(
        "flow estimation needs frames of equal size, got " +
        std::to_string(a.height()) + "x" + std::to_string(a.width()) + " and " +
        std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
}

struct Displacement {
  int dx, dy;
};

// Zero first, then by L1 length, then row-major.
std::vector<Displacement> search_order(int radius) {
  std::vector<Displacement> out;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) out.push_back({dx, dy});
  std::stable_sort(out.begin(), out.end(), [](Displacement a, Displacement b) {
    return std::abs(a.dx) + std::abs(a.dy) < std::abs(b.dx) + std::abs(b.dy);
  });
  return out;
}

}  // namespace

FlowField block_matching_flow(const Frame& a, const Frame& b,
                              const BlockMatchParams& params) {
  require_same_size(a, b);
  const int h = a.height(), w = a.width();
  // Window rows/cols [p - lo, p + hi]; for even blocks the extra cell
  // falls on the positive side.
  const int lo = (params.block - 1) / 2;
  const int hi = params.block / 2;

  FlowField flow(h, w);
  std::vector<double> best(static_cast<size_t>(h) * w,
                           std::numeric_limits<double>::infinity());
  std::vector<double> diff(best.size()), rows(best.size());

  for (const Displacement d : search_order(params.radius)) {
    for (int y = 0; y < h; ++y) {
      const int by = std::clamp(y + d.dy, 0, h - 1);
      for (int x = 0; x < w; ++x) {
        const int bx = std::clamp(x + d.dx, 0, w - 1);
        double s = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double e = b.at(by, bx, c) - a.at(y, x, c);
          s += e * e;
        }
        diff[static_cast<size_t>(y) * w + x] = s;
      }
    }
    // Direct window sums of non-negative terms: zero iff every term is zero.
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int xx = std::max(0, x - lo); xx <= std::min(w - 1, x + hi); ++xx) {
          s += diff[static_cast<size_t>(y) * w + xx];
        }
        rows[static_cast<size_t>(y) * w + x] = s;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int yy = std::max(0, y - lo); yy <= std::min(h - 1, y + hi); ++yy) {
          s += rows[static_cast<size_t>(yy) * w + x];
        }
        double& cur = best[static_cast<size_t>(y) * w + x];
        if (s < cur) {
          cur = s;
          flow.u(y, x) = d.dx;
          flow.v(y, x) = d.dy;
        }
      }
    }
  }
  return flow;
}

FlowField horn_schunck_flow(const Frame& a, const Frame& b,
                            const HornSchunckParams& params) {
  require_same_size(a, b);
  const int h = a.height(), w = a.width();
  auto at = [w](std::vector<double>& img, int y, int x) -> double& {
    return img[static_cast<size_t>(y) * w + x];
  };
  auto clamp_y = [h](int y) { return std::clamp(y, 0, h - 1); };
  auto clamp_x = [w](int x) { return std::clamp(x, 0, w - 1); };

  std::vector<double> avg(static_cast<size_t>(h) * w), it(avg.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      at(avg, y, x) = 0.5 * (a.gray(y, x) + b.gray(y, x));
      at(it, y, x) = b.gray(y, x) - a.gray(y, x);
    }
  std::vector<double> ix(avg.size()), iy(avg.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      at(ix, y, x) = 0.5 * (at(avg, y, clamp_x(x + 1)) - at(avg, y, clamp_x(x - 1)));
      at(iy, y, x) = 0.5 * (at(avg, clamp_y(y + 1), x) - at(avg, clamp_y(y - 1), x));
    }

  const double alpha2 = params.alpha * params.alpha;
  std::vector<double> u(avg.size(), 0.0), v(avg.size(), 0.0);
  std::vector<double> nu(avg.size()), nv(avg.size());
  for (int iter = 0; iter < params.iterations; ++iter) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int ym = clamp_y(y - 1), yp = clamp_y(y + 1);
        const int xm = clamp_x(x - 1), xp = clamp_x(x + 1);
        const double ub =
            0.25 * (at(u, ym, x) + at(u, yp, x) + at(u, y, xm) + at(u, y, xp));
        const double vb =
            0.25 * (at(v, ym, x) + at(v, yp, x) + at(v, y, xm) + at(v, y, xp));
        const double gx = at(ix, y, x), gy = at(iy, y, x);
        const double t = (gx * ub + gy * vb + at(it, y, x)) /
                         (alpha2 + gx * gx + gy * gy);
        at(nu, y, x) = ub - gx * t;
        at(nv, y, x) = vb - gy * t;
      }
    u.swap(nu);
    v.swap(nv);
  }

  FlowField flow(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      flow.u(y, x) = at(u, y, x);
      flow.v(y, x) = at(v, y, x);
    }
  return flow;
}

std::string flow_quality_name(FlowQuality q) {
  return q == FlowQuality::kFast ? "fast" : "iterative";
}

FlowQuality parse_flow_quality(const std::string& text) {
  if (text == "fast") return FlowQuality::kFast;
  if (text == "iterative") return FlowQuality::kIterative;
  throw std::invalid_argument("unknown flow quality '" + text + "' (fast|iterative)");
}

FlowField estimate_flow(const Frame& a, const Frame& b, FlowQuality quality) {
  return quality == FlowQuality::kFast ? block_matching_flow(a, b)
                                       : horn_schunck_flow(a, b);
}

std::vector<FlowField> estimate_video_flow(const std::vector<Frame>& frames,
                                           FlowQuality quality) {
  std::vector<FlowField> flows;
  if (frames.empty()) return flows;
  if (frames.size() == 1) {
    flows.emplace_back(frames[0].height(), frames[0].width());
    return flows;
  }
  for (size_t t = 0; t + 1 < frames.size(); ++t) {
    flows.push_back(estimate_flow(frames[t], frames[t + 1], quality));
  }
  flows.push_back(flows.back());
  return flows;
}

namespace {

constexpr char kFloMagic[4] = {'P', 'I', 'E', 'H'};

template <typename T>
void put(std::vector<char>& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

}  // namespace

std::vector<char> encode_flo(const FlowField& flow) {
  if (flow.height() <= 0 || flow.width() <= 0) {
    throw std::invalid_argument("cannot write a flow field with a zero dimension");
  }
  std::vector<char> out(kFloMagic, kFloMagic + 4);
  put<int32_t>(out, flow.width());
  put<int32_t>(out, flow.height());
  out.reserve(12 + static_cast<size_t>(flow.height()) * flow.width() * 8);
  for (int y = 0; y < flow.height(); ++y)
    for (int x = 0; x < flow.width(); ++x) {
      put<float>(out, static_cast<float>(flow.u(y, x)));
      put<float>(out, static_cast<float>(flow.v(y, x)));
    }
  return out;
}

FlowField decode_flo(const std::vector<char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFloMagic, 4) != 0) {
    throw std::runtime_error("bad .flo magic at byte offset 0");
  }
  if (bytes.size() < 12) {
    throw std::runtime_error(".flo header truncated at byte offset " +
                             std::to_string(bytes.size()));
  }
  int32_t width, height;
  std::memcpy(&width, bytes.data() + 4, 4);
  std::memcpy(&height, bytes.data() + 8, 4);
  if (width <= 0 || height <= 0 || width > (1 << 15) || height > (1 << 15)) {
    throw std::runtime_error(".flo has invalid dimensions at byte offset 4");
  }
  const size_t need = 12 + static_cast<size_t>(width) * height * 8;
  if (bytes.size() < need) {
    throw std::runtime_error(".flo payload truncated at byte offset " +
                             std::to_string(bytes.size()) + " (expected " +
                             std::to_string(need) + " bytes)");
  }
  FlowField flow(height, width);
  size_t pos = 12;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      float u, v;
      std::memcpy(&u, bytes.data() + pos, 4);
      std::memcpy(&v, bytes.data() + pos + 4, 4);
      pos += 8;
      flow.u(y, x) = u;
      flow.v(y, x) = v;
    }
  return flow;
}

void write_flow(const FlowField& flow, const std::filesystem::path& path) {
  const auto bytes = encode_flo(flow);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

FlowField read_flow(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());
  try {
    return decode_flo(bytes);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace mcm
