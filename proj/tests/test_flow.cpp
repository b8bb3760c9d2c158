#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mcm/flow/flow.hpp"
#include "mcm/numerics/random.hpp"

using namespace mcm;

namespace {

Frame noise_frame(int h, int w, Rng& rng) {
  Frame f(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) f.at(y, x, c) = rng.uniform();
  return f;
}

// b(y, x) = a(y - dy, x - dx) with wrap-around.
Frame translate(const Frame& a, int dx, int dy) {
  Frame b(a.height(), a.width());
  const int h = a.height(), w = a.width();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        b.at(y, x, c) = a.at(((y - dy) % h + h) % h, ((x - dx) % w + w) % w, c);
  return b;
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("identical frames give exactly zero flow") {
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const Frame a = noise_frame(24, 20, rng);
    for (auto q : {FlowQuality::kFast, FlowQuality::kIterative}) {
      const FlowField f = estimate_flow(a, a, q);
      CHECK(f.height() == 24);
      CHECK(f.width() == 20);
      CHECK(f.all_zero());
    }
  }
}

TEST_CASE("textureless frames give zero flow") {
  const Frame a(16, 16, 0.3), b(16, 16, 0.7);
  CHECK(estimate_flow(a, a, FlowQuality::kFast).all_zero());
  CHECK(estimate_flow(a, a, FlowQuality::kIterative).all_zero());
  // uniform but different brightness: no gradient, no motion to recover
  CHECK(estimate_flow(a, b, FlowQuality::kIterative).all_zero());
  FlowField fast = estimate_flow(a, b, FlowQuality::kFast);
  CHECK(fast.all_zero());
}

TEST_CASE("fast estimator recovers a periodic (+3, 0) translation") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const Frame a = noise_frame(48, 48, rng);
    const Frame b = translate(a, 3, 0);
    const FlowField f = estimate_flow(a, b, FlowQuality::kFast);
    double su = 0, sv = 0, err = 0;
    int n = 0;
    for (int y = 8; y < 40; ++y)
      for (int x = 8; x < 40; ++x) {
        su += f.u(y, x);
        sv += f.v(y, x);
        err += std::abs(f.u(y, x) - 3.0) + std::abs(f.v(y, x));
        ++n;
      }
    CHECK(std::abs(su / n - 3.0) < 0.5);
    CHECK(std::abs(sv / n) < 0.5);
    CHECK(err / n < 0.5);
  }
}

TEST_CASE("iterative estimator points the right way on smooth texture") {
  // Low-frequency pattern keeps the brightness-constancy linearization valid.
  Frame a(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c)
        a.at(y, x, c) = 0.5 + 0.25 * std::sin(0.4 * x + 0.3 * c) * std::cos(0.35 * y);
  const Frame b = translate(a, 1, 0);
  const FlowField f = estimate_flow(a, b, FlowQuality::kIterative);
  double su = 0, sv = 0;
  for (int y = 8; y < 24; ++y)
    for (int x = 8; x < 24; ++x) {
      su += f.u(y, x);
      sv += f.v(y, x);
    }
  su /= 256;
  sv /= 256;
  MESSAGE("horn-schunck mean flow (" << su << ", " << sv << ")");
  CHECK(su > 0.5);
  CHECK(std::abs(sv) < 0.2);
  CHECK(f.all_finite());
}

TEST_CASE("mismatched frame sizes are rejected") {
  CHECK_THROWS_AS(estimate_flow(Frame(8, 8), Frame(8, 9), FlowQuality::kFast),
                  std::invalid_argument);
  CHECK_THROWS_AS(estimate_flow(Frame(8, 8), Frame(7, 8), FlowQuality::kIterative),
                  std::invalid_argument);
}

TEST_CASE("video flow: one per frame, last repeats previous") {
  Rng rng(3);
  std::vector<Frame> frames{noise_frame(16, 16, rng)};
  frames.push_back(translate(frames[0], 1, 0));
  frames.push_back(translate(frames[1], 0, 1));
  const auto flows = estimate_video_flow(frames, FlowQuality::kFast);
  REQUIRE(flows.size() == 3);
  CHECK(flows[2] == flows[1]);
  CHECK(flows[0].u(8, 8) == 1.0);
  CHECK(flows[1].v(8, 8) == 1.0);
}

TEST_CASE(".flo format") {
  SUBCASE("1x1 field is 20 bytes and round-trips") {
    FlowField f(1, 1);
    f.u(0, 0) = 0.5;
    f.v(0, 0) = -1.0;
    const auto bytes = encode_flo(f);
    CHECK(bytes.size() == 20);
    CHECK(std::string(bytes.data(), 4) == "PIEH");
    CHECK(decode_flo(bytes) == f);
  }
  SUBCASE("zero-dimension field rejected at write") {
    CHECK_THROWS_AS(encode_flo(FlowField(0, 4)), std::invalid_argument);
    CHECK_THROWS_AS(encode_flo(FlowField()), std::invalid_argument);
  }
  SUBCASE("random 16x16 round-trips within float32") {
    Rng rng(8);
    FlowField f(16, 16);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        f.u(y, x) = rng.uniform(-50, 50);
        f.v(y, x) = rng.uniform(-50, 50);
      }
    const auto path = temp_file("mcm_flow_roundtrip.flo");
    write_flow(f, path);
    const FlowField g = read_flow(path);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        CHECK(g.u(y, x) == static_cast<float>(f.u(y, x)));
        CHECK(g.v(y, x) == static_cast<float>(f.v(y, x)));
      }
    // float32 values are a fixed point
    CHECK(encode_flo(g) == encode_flo(f));
    std::filesystem::remove(path);
  }
  SUBCASE("corruption reports byte offsets") {
    FlowField f(4, 4);
    auto bytes = encode_flo(f);
    auto truncated = bytes;
    truncated.resize(50);
    CHECK_THROWS_WITH_AS(decode_flo(truncated), doctest::Contains("byte offset 50"),
                         std::runtime_error);
    auto bad = bytes;
    bad[1] = 'X';
    CHECK_THROWS_WITH_AS(decode_flo(bad), doctest::Contains("byte offset 0"),
                         std::runtime_error);
  }
}

TEST_CASE("PPM round trip within quantization") {
  Rng rng(9);
  const Frame a = noise_frame(7, 5, rng);
  const auto path = temp_file("mcm_frame.ppm");
  write_ppm(a, path);
  const Frame b = read_ppm(path);
  REQUIRE(b.height() == 7);
  REQUIRE(b.width() == 5);
  for (size_t i = 0; i < a.pixels().size(); ++i) {
    CHECK(std::abs(a.pixels()[i] - b.pixels()[i]) <= 0.5 / 255.0 + 1e-12);
  }
  // quantized frames are a fixed point
  write_ppm(b, path);
  CHECK(read_ppm(path) == b);
  std::filesystem::remove(path);

  std::ofstream(path) << "P3\n1 1\n255\n0 0 0\n";
  CHECK_THROWS_AS(read_ppm(path), std::runtime_error);
  std::filesystem::remove(path);
}
