#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mcm/condition/condition.hpp"
#include "mcm/detector/anchors.hpp"
#include "mcm/flow/flow.hpp"
#include "mcm/numerics/autograd.hpp"

namespace mcm {

// What a single network consumes: RGB appearance, flow only, or RGB
// modulated by flow.
enum class StreamKind { kRgb, kFlow, kTwoInOne };

std::string stream_kind_name(StreamKind kind);

struct DetectorConfig {
  int image_size = 64;
  int num_classes = 4;
  // conv1..conv4 output channels; conv2 and conv4 downsample by 2.
  std::vector<int> widths{16, 24, 32, 64};
  // Anchor scale at the conv3 and conv4 heads.
  std::vector<double> anchor_scales{0.22, 0.30};
  int tubelet_len = 1;
  int head_kernel = 3;  // odd; class and box heads share it
  double pos_iou = 0.5;
  int neg_ratio = 3;

  void validate() const;
};

// One frame's network input. `image` is [3, H, W] with pixels shifted to
// [-0.5, 0.5]; `flow` is [2, H, W] already divided by the flow scale. RGB
// streams ignore `flow` and flow streams ignore `image`.
struct FrameInput {
  Tensor image;
  Tensor flow;
};

FrameInput make_frame_input(const Frame& frame, const FlowField& flow,
                            double flow_scale);

struct HeadOutput {
  Var logits;  // [Q, P+1]
  Var boxes;   // [Q, 4K]
};

// Plain conv backbone (3x3 convs + ReLU) with classification and box heads
// on the conv3 and conv4 feature maps. For tubelets, each of the K frames
// runs through the backbone on its own and the per-level feature maps are
// stacked along channels before the heads.
class DetectorNetwork {
 public:
  DetectorNetwork(StreamKind kind, const DetectorConfig& cfg,
                  const ConditionConfig& condition, uint64_t seed,
                  const std::string& prefix = "detector");

  // Exactly cfg.tubelet_len frames.
  HeadOutput forward(std::span<const FrameInput> frames);
  HeadOutput forward(const FrameInput& frame) { return forward({&frame, 1}); }

  StreamKind kind() const { return kind_; }
  const DetectorConfig& config() const { return cfg_; }
  const ConditionConfig& condition_config() const { return condition_cfg_; }
  const AnchorSet& anchors() const { return anchors_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  int64_t parameter_count() const { return store_.trainable_count(); }

  static std::vector<SiteGeometry> site_geometry(const DetectorConfig& cfg);

 private:
  struct Conv {
    Var weight, bias;
    int stride, pad;
  };
  Conv make_conv(const std::string& name, int in, int out, int k, int stride,
                 Rng& rng);
  Var apply(const Conv& c, const Var& x) const;
  std::vector<Var> backbone(const FrameInput& frame);

  StreamKind kind_;
  DetectorConfig cfg_;
  ConditionConfig condition_cfg_;
  ParameterStore store_;
  std::vector<Conv> layers_;
  std::vector<Conv> cls_heads_, box_heads_;
  std::unique_ptr<ConditionNetwork> condition_;
  AnchorSet anchors_;
};

// Reorders head maps [A*D, H, W] into anchor rows [H*W*A, D], levels
// concatenated in order, matching the AnchorSet ordering.
Var head_rows(std::span<const Var> maps, int per_cell, int width);

}  // namespace mcm
