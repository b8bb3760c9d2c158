#include "mcm/detector/network.hpp"

#include <stdexcept>

#include "mcm/numerics/ops.hpp"

namespace mcm {

std::string stream_kind_name(StreamKind kind) {
  switch (kind) {
    case StreamKind::kRgb: return "rgb";
    case StreamKind::kFlow: return "flow";
    case StreamKind::kTwoInOne: return "two_in_one";
  }
  return "?";
}

void DetectorConfig::validate() const {
  if (image_size <= 0 || image_size % 4 != 0) {
    throw std::invalid_argument("detector.image_size must be a positive multiple of 4");
  }
  if (num_classes < 1) throw std::invalid_argument("detector.num_classes must be >= 1");
  if (widths.size() != 4) throw std::invalid_argument("detector.widths needs 4 entries");
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument("detector.widths must be positive");
  }
  if (anchor_scales.size() != 2) {
    throw std::invalid_argument("detector.anchor_scales needs 2 entries");
  }
  if (tubelet_len < 1) throw std::invalid_argument("detector.tubelet_len must be >= 1");
  if (head_kernel < 1 || head_kernel % 2 == 0) {
    throw std::invalid_argument("detector.head_kernel must be odd and >= 1");
  }
  if (!(pos_iou > 0 && pos_iou < 1)) {
    throw std::invalid_argument("detector.pos_iou must lie in (0, 1)");
  }
  if (neg_ratio < 0) throw std::invalid_argument("detector.neg_ratio must be >= 0");
}

FrameInput make_frame_input(const Frame& frame, const FlowField& flow,
                            double flow_scale) {
  // Pixels are centred on zero; the network has no normalization layers.
  Tensor image = frame.to_tensor();
  for (double& v : image.data()) v -= 0.5;
  return {std::move(image), flow.to_tensor(flow_scale)};
}

std::vector<SiteGeometry> DetectorNetwork::site_geometry(const DetectorConfig& cfg) {
  return {{Site::kConv1, cfg.widths[0], 1},
          {Site::kConv2, cfg.widths[1], 2},
          {Site::kConv3, cfg.widths[2], 2},
          {Site::kConv4, cfg.widths[3], 4}};
}

DetectorNetwork::Conv DetectorNetwork::make_conv(const std::string& name, int in,
                                                 int out, int k, int stride,
                                                 Rng& rng) {
  Conv c;
  c.weight = store_.add(name + "/weight", he_uniform({out, in, k, k}, in * k * k, rng));
  c.bias = store_.add(name + "/bias", Tensor({out}, 0.0));
  c.stride = stride;
  c.pad = k / 2;
  return c;
}

Var DetectorNetwork::apply(const Conv& c, const Var& x) const {
  return conv2d(x, c.weight, c.bias, c.stride, c.pad);
}

DetectorNetwork::DetectorNetwork(StreamKind kind, const DetectorConfig& cfg,
                                 const ConditionConfig& condition, uint64_t seed,
                                 const std::string& prefix)
    : kind_(kind), cfg_(cfg), condition_cfg_(condition) {
  cfg.validate();
  // Separate streams so every variant shares identical backbone and head
  // weights for a given seed.
  Rng backbone_rng(derive_seed(seed, 1));
  Rng head_rng(derive_seed(seed, 2));
  Rng condition_rng(derive_seed(seed, 3));

  const int in_channels = kind == StreamKind::kFlow ? 2 : 3;
  const int strides[4] = {1, 2, 1, 2};
  int prev = in_channels;
  for (int i = 0; i < 4; ++i) {
    layers_.push_back(make_conv(prefix + "/conv" + std::to_string(i + 1), prev,
                                cfg.widths[i], 3, strides[i], backbone_rng));
    prev = cfg.widths[i];
  }
  const int a = AnchorSet::kPerCell;
  const int k = cfg.tubelet_len;
  for (int level = 0; level < 2; ++level) {
    const int c = k * cfg.widths[2 + level];
    const std::string name = prefix + "/head" + std::to_string(3 + level);
    cls_heads_.push_back(make_conv(name + "/cls", c, a * (cfg.num_classes + 1),
                                     cfg.head_kernel, 1, head_rng));
    box_heads_.push_back(make_conv(name + "/box", c, a * 4 * k, cfg.head_kernel, 1, head_rng));
  }
  if (kind == StreamKind::kTwoInOne) {
    condition_ = std::make_unique<ConditionNetwork>(
        condition, site_geometry(cfg), store_, condition_rng, prefix + "/condition");
  }
  const int s = cfg.image_size;
  anchors_ = generate_anchors({{s / 2, s / 2, cfg.anchor_scales[0]},
                               {s / 4, s / 4, cfg.anchor_scales[1]}});
}

std::vector<Var> DetectorNetwork::backbone(const FrameInput& frame) {
  const Tensor& primary = kind_ == StreamKind::kFlow ? frame.flow : frame.image;
  const int64_t want_c = kind_ == StreamKind::kFlow ? 2 : 3;
  if (primary.shape() != Shape{want_c, cfg_.image_size, cfg_.image_size}) {
    throw std::invalid_argument(
        stream_kind_name(kind_) + " stream expects input [" + std::to_string(want_c) +
        "x" + std::to_string(cfg_.image_size) + "x" + std::to_string(cfg_.image_size) +
        "], got " + shape_to_string(primary.shape()));
  }
  if (condition_) condition_->prepare(Var::constant(frame.flow));

  std::vector<Var> taps;
  Var x = Var::constant(primary);
  for (int i = 0; i < 4; ++i) {
    x = relu(apply(layers_[i], x));
    const Site site = static_cast<Site>(i + 1);
    if (condition_ && condition_->modulates(site)) x = condition_->apply(site, x);
    if (i >= 2) taps.push_back(x);
  }
  return taps;
}

HeadOutput DetectorNetwork::forward(std::span<const FrameInput> frames) {
  if (static_cast<int>(frames.size()) != cfg_.tubelet_len) {
    throw std::invalid_argument("network expects " + std::to_string(cfg_.tubelet_len) +
                                " frames, got " + std::to_string(frames.size()));
  }
  std::vector<std::vector<Var>> per_level(2);
  for (const FrameInput& f : frames) {
    auto taps = backbone(f);
    per_level[0].push_back(taps[0]);
    per_level[1].push_back(taps[1]);
  }
  std::vector<Var> cls_maps, box_maps;
  for (int level = 0; level < 2; ++level) {
    const Var stacked = concat_channels(per_level[level]);
    // Both heads share one im2col pass.
    const Conv& cls = cls_heads_[level];
    const Conv& box = box_heads_[level];
    const Var w[] = {cls.weight, box.weight};
    const Var b[] = {cls.bias, box.bias};
    const Var both = conv2d(stacked, concat_leading(w), concat_leading(b), 1, cls.pad);
    const int64_t split = cls.weight.shape()[0];
    cls_maps.push_back(slice_leading(both, 0, split));
    box_maps.push_back(slice_leading(both, split, both.shape()[0]));
  }
  const int a = AnchorSet::kPerCell;
  return {head_rows(cls_maps, a, cfg_.num_classes + 1),
          head_rows(box_maps, a, 4 * cfg_.tubelet_len)};
}

Var head_rows(std::span<const Var> maps, int per_cell, int width) {
  int64_t rows = 0;
  for (const Var& m : maps) {
    const Shape& s = m.shape();
    if (s.size() != 3 || s[0] != static_cast<int64_t>(per_cell) * width) {
      throw std::invalid_argument("head_rows: map " + shape_to_string(s) +
                                  " does not hold " + std::to_string(per_cell) +
                                  " x " + std::to_string(width) + " channels");
    }
    rows += s[1] * s[2] * per_cell;
  }
  // index[r * width + d] = flat position in the source map
  struct Source {
    std::shared_ptr<Node> node;
    int64_t row_begin;
  };
  std::vector<Source> sources;
  Tensor out({rows, width});
  int64_t row = 0;
  for (const Var& m : maps) {
    sources.push_back({m.node(), row});
    const int64_t h = m.shape()[1], w = m.shape()[2];
    const double* src = m.value().ptr();
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        for (int a = 0; a < per_cell; ++a, ++row)
          for (int d = 0; d < width; ++d)
            out[row * width + d] = src[((a * width + d) * h + y) * w + x];
  }
  return make_result(std::move(out), std::vector<Var>(maps.begin(), maps.end()),
                     [sources, per_cell, width](Node& self) {
    for (const auto& s : sources) {
      if (!s.node->requires_grad) continue;
      const int64_t h = s.node->value.shape()[1], w = s.node->value.shape()[2];
      double* g = s.node->ensure_grad().ptr();
      int64_t row = s.row_begin;
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          for (int a = 0; a < per_cell; ++a, ++row)
            for (int d = 0; d < width; ++d)
              g[((a * width + d) * h + y) * w + x] += self.grad[row * width + d];
    }
  });
}

}  // namespace mcm
