#pragma once

// Flow-conditioned feature modulation.
//
// A small conv stack turns the (scaled) flow field into a condition map;
// per modulation site, two independent 1x1 conv branches map it to a scale
// map beta and a shift map gamma with exactly the site's feature shape, and
// the site's features become beta * F + gamma.

#include <string>
#include <vector>

#include "mcm/flow/flow.hpp"
#include "mcm/numerics/autograd.hpp"
#include "mcm/numerics/random.hpp"

namespace mcm {

enum class Site { kConv1 = 1, kConv2 = 2, kConv3 = 3, kConv4 = 4 };
enum class LastKernel { k1x1, k3x3 };

std::string site_name(Site site);
Site parse_site(const std::string& text);
std::string last_kernel_name(LastKernel k);
LastKernel parse_last_kernel(const std::string& text);

struct ConditionConfig {
  std::vector<int> channels{8, 8, 8, 4};
  LastKernel last_kernel = LastKernel::k3x3;
  std::vector<Site> modulate_at{Site::kConv2};
  double flow_scale = 2.0;  // synthetic motion is a few px/frame

  void validate() const;
};

// Shape of the backbone features at a modulation site.
struct SiteGeometry {
  Site site;
  int channels;
  int downsample;  // input pixels per feature pixel along each axis
};

struct ModulationParams {
  Var beta;
  Var gamma;
};

// The condition stack. Strides of 2 sit on the last layers so that the
// output resolution is the input divided by `downsample`.
class MotionConditionLayer {
 public:
  MotionConditionLayer(const ConditionConfig& cfg, int downsample,
                       ParameterStore& store, const std::string& prefix,
                       Rng& rng);

  // `flow_input` is [2, H, W], already divided by flow_scale.
  Var forward(const Var& flow_input) const;

  int out_channels() const { return out_channels_; }
  int downsample() const { return downsample_; }

 private:
  struct Layer {
    Var weight, bias;
    int stride, pad;
  };
  std::vector<Layer> layers_;
  int out_channels_;
  int downsample_;
};

// Scale/shift branches for one site.
class ModulationLayer {
 public:
  // `stride` bridges the condition resolution and the site resolution
  // when several sites share one condition stack.
  ModulationLayer(int condition_channels, int feature_channels, int stride,
                  ParameterStore& store, const std::string& prefix);

  ModulationParams forward(const Var& psi) const;

  int feature_channels() const { return feature_channels_; }

 private:
  Var beta_w_, beta_b_, gamma_w_, gamma_b_;
  int condition_channels_;
  int feature_channels_;
  int stride_;
};

// Condition map for a raw flow field; flow is divided by cfg.flow_scale.
Var motion_condition(const FlowField& flow, const ConditionConfig& cfg,
                     const MotionConditionLayer& layer);

ModulationParams modulation_params(const Var& psi, const ModulationLayer& layer);

// beta * f + gamma, elementwise; shapes must match.
Var modulate(const Var& f, const ModulationParams& m);

// Everything the two-in-one network adds on top of an RGB backbone: one
// shared condition stack and one modulation layer per site.
class ConditionNetwork {
 public:
  ConditionNetwork(const ConditionConfig& cfg,
                   const std::vector<SiteGeometry>& sites, ParameterStore& store,
                   Rng& rng, const std::string& prefix = "condition");

  // Computes the shared condition map and per-site (beta, gamma).
  void prepare(const Var& flow_input);
  bool modulates(Site site) const;
  Var apply(Site site, const Var& features) const;

  const ConditionConfig& config() const { return cfg_; }

 private:
  ConditionConfig cfg_;
  MotionConditionLayer condition_;
  std::vector<std::pair<Site, ModulationLayer>> branches_;
  std::vector<std::pair<Site, ModulationParams>> prepared_;
};

}  // namespace mcm
