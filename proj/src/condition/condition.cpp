#include "mcm/condition/condition.hpp"

#include <algorithm>
#include <stdexcept>

#include "mcm/numerics/ops.hpp"

namespace mcm {

std::string site_name(Site site) {
  return "conv" + std::to_string(static_cast<int>(site));
}

Site parse_site(const std::string& text) {
  for (Site s : {Site::kConv1, Site::kConv2, Site::kConv3, Site::kConv4}) {
    if (site_name(s) == text) return s;
  }
  throw std::invalid_argument("unknown modulation site '" + text +
                              "' (expected conv1..conv4)");
}

std::string last_kernel_name(LastKernel k) {
  return k == LastKernel::k1x1 ? "1x1" : "3x3";
}

LastKernel parse_last_kernel(const std::string& text) {
  if (text == "1x1") return LastKernel::k1x1;
  if (text == "3x3") return LastKernel::k3x3;
  throw std::invalid_argument("unknown condition kernel '" + text +
                              "' (expected 1x1 or 3x3)");
}

void ConditionConfig::validate() const {
  if (channels.empty()) {
    throw std::invalid_argument("condition.channels must not be empty");
  }
  for (int c : channels) {
    if (c <= 0) throw std::invalid_argument("condition.channels must be positive");
  }
  if (!(flow_scale > 0.0)) {
    throw std::invalid_argument("condition.flow_scale must be positive");
  }
  if (modulate_at.empty()) {
    throw std::invalid_argument("condition.modulate_at must name a site");
  }
  for (size_t i = 0; i < modulate_at.size(); ++i)
    for (size_t j = i + 1; j < modulate_at.size(); ++j)
      if (modulate_at[i] == modulate_at[j]) {
        throw std::invalid_argument("condition.modulate_at lists " +
                                    site_name(modulate_at[i]) + " twice");
      }
}

namespace {

int log2_exact(int v, const char* what) {
  int n = 0;
  while (v > 1 && v % 2 == 0) {
    v /= 2;
    ++n;
  }
  if (v != 1) throw std::invalid_argument(std::string(what) + " must be a power of two");
  return n;
}

}  // namespace

MotionConditionLayer::MotionConditionLayer(const ConditionConfig& cfg,
                                           int downsample, ParameterStore& store,
                                           const std::string& prefix, Rng& rng)
    : out_channels_(cfg.channels.back()), downsample_(downsample) {
  cfg.validate();
  const int n = static_cast<int>(cfg.channels.size());
  const int strided = log2_exact(downsample, "condition downsample factor");
  if (strided > n) {
    throw std::invalid_argument("condition stack has " + std::to_string(n) +
                                " layers, too few to downsample by " +
                                std::to_string(downsample));
  }
  int in_ch = 2;
  for (int i = 0; i < n; ++i) {
    const bool last = i == n - 1;
    const int k = (last && cfg.last_kernel == LastKernel::k3x3) ? 3 : 1;
    const int out_ch = cfg.channels[i];
    const std::string name = prefix + "/mc" + std::to_string(i + 1);
    Layer layer;
    layer.weight = store.add(name + "/weight",
                             he_uniform({out_ch, in_ch, k, k}, in_ch * k * k, rng));
    layer.bias = store.add(name + "/bias", Tensor({out_ch}, 0.0));
    layer.stride = i >= n - strided ? 2 : 1;
    layer.pad = k / 2;
    layers_.push_back(layer);
    in_ch = out_ch;
  }
}

Var MotionConditionLayer::forward(const Var& flow_input) const {
  const Shape& s = flow_input.shape();
  if (s.size() != 3 || s[0] != 2) {
    throw std::invalid_argument("motion condition expects [2,H,W] flow, got " +
                                shape_to_string(s));
  }
  if (s[1] % downsample_ != 0 || s[2] % downsample_ != 0) {
    throw std::invalid_argument("flow resolution " + std::to_string(s[1]) + "x" +
                                std::to_string(s[2]) +
                                " is not divisible by the condition stride " +
                                std::to_string(downsample_));
  }
  Var x = flow_input;
  for (const Layer& l : layers_) x = relu(conv2d(x, l.weight, l.bias, l.stride, l.pad));
  return x;
}

ModulationLayer::ModulationLayer(int condition_channels, int feature_channels,
                                 int stride, ParameterStore& store,
                                 const std::string& prefix)
    : condition_channels_(condition_channels),
      feature_channels_(feature_channels),
      stride_(stride) {
  // beta starts at exactly 1 and gamma at exactly 0 for any condition map.
  const Shape w{feature_channels, condition_channels, 1, 1};
  beta_w_ = store.add(prefix + "/beta/weight", Tensor(w, 0.0));
  beta_b_ = store.add(prefix + "/beta/bias", Tensor({feature_channels}, 1.0));
  gamma_w_ = store.add(prefix + "/gamma/weight", Tensor(w, 0.0));
  gamma_b_ = store.add(prefix + "/gamma/bias", Tensor({feature_channels}, 0.0));
}

ModulationParams ModulationLayer::forward(const Var& psi) const {
  if (psi.shape().size() != 3 || psi.shape()[0] != condition_channels_) {
    throw std::invalid_argument("modulation branch expects " +
                                std::to_string(condition_channels_) +
                                " condition channels, got " +
                                shape_to_string(psi.shape()));
  }
  return {conv2d(psi, beta_w_, beta_b_, stride_, 0),
          conv2d(psi, gamma_w_, gamma_b_, stride_, 0)};
}

Var motion_condition(const FlowField& flow, const ConditionConfig& cfg,
                     const MotionConditionLayer& layer) {
  return layer.forward(Var::constant(flow.to_tensor(cfg.flow_scale)));
}

ModulationParams modulation_params(const Var& psi, const ModulationLayer& layer) {
  return layer.forward(psi);
}

Var modulate(const Var& f, const ModulationParams& m) {
  if (f.shape() != m.beta.shape() || f.shape() != m.gamma.shape()) {
    throw std::invalid_argument("modulate: feature shape " +
                                shape_to_string(f.shape()) + " vs beta " +
                                shape_to_string(m.beta.shape()) + " / gamma " +
                                shape_to_string(m.gamma.shape()));
  }
  return mul_add(m.beta, f, m.gamma);
}

namespace {

int finest_downsample(const ConditionConfig& cfg,
                      const std::vector<SiteGeometry>& sites) {
  cfg.validate();
  int best = 0;
  for (Site s : cfg.modulate_at) {
    auto it = std::find_if(sites.begin(), sites.end(),
                           [s](const SiteGeometry& g) { return g.site == s; });
    if (it == sites.end()) {
      throw std::invalid_argument("backbone has no modulation site " + site_name(s));
    }
    best = best == 0 ? it->downsample : std::min(best, it->downsample);
  }
  return best;
}

}  // namespace

ConditionNetwork::ConditionNetwork(const ConditionConfig& cfg,
                                   const std::vector<SiteGeometry>& sites,
                                   ParameterStore& store, Rng& rng,
                                   const std::string& prefix)
    : cfg_(cfg),
      condition_(cfg, finest_downsample(cfg, sites), store, prefix, rng) {
  for (Site s : cfg.modulate_at) {
    const auto& g = *std::find_if(sites.begin(), sites.end(),
                                  [s](const SiteGeometry& x) { return x.site == s; });
    const int stride = g.downsample / condition_.downsample();
    branches_.emplace_back(
        s, ModulationLayer(condition_.out_channels(), g.channels, stride, store,
                           prefix + "/" + site_name(s)));
  }
}

void ConditionNetwork::prepare(const Var& flow_input) {
  prepared_.clear();
  const Var psi = condition_.forward(flow_input);
  for (const auto& [site, branch] : branches_) {
    prepared_.emplace_back(site, branch.forward(psi));
  }
}

bool ConditionNetwork::modulates(Site site) const {
  return std::any_of(branches_.begin(), branches_.end(),
                     [site](const auto& b) { return b.first == site; });
}

Var ConditionNetwork::apply(Site site, const Var& features) const {
  for (const auto& [s, params] : prepared_) {
    if (s == site) return modulate(features, params);
  }
  throw std::logic_error("ConditionNetwork::apply before prepare for " +
                         site_name(site));
}

}  // namespace mcm
