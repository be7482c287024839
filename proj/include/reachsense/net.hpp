#pragma once

// ReLU feedforward networks: affine and convolutional weighted layers with
// ReLU activations in between. Conv layers carry a precomputed dense
// lowering so the bounds/verification machinery sees one affine code path.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "reachsense/ad.hpp"

namespace reachsense {

struct AffineLayer {
  Mat W;
  Vec b;
};

struct ConvShape {
  int in_ch = 1, in_h = 0, in_w = 0;
  int out_ch = 1, kh = 0, kw = 0;
  int stride = 1, pad = 0;

  int out_h() const { return (in_h + 2 * pad - kh) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kw) / stride + 1; }
  int in_dim() const { return in_ch * in_h * in_w; }
  int out_dim() const { return out_ch * out_h() * out_w(); }
  bool shape_ok() const {
    return kh >= 1 && kw >= 1 && stride >= 1 && pad >= 0 && in_h + 2 * pad >= kh &&
           in_w + 2 * pad >= kw && (in_h + 2 * pad - kh) % stride == 0 &&
           (in_w + 2 * pad - kw) % stride == 0;
  }
};

struct ConvLayer {
  ConvShape shape;
  Vec kernel;  // flat (out_ch, in_ch, kh, kw), row-major in that order
  Vec bias;    // per output channel

  double k(int oc, int ic, int r, int c) const {
    return kernel((((oc * shape.in_ch) + ic) * shape.kh + r) * shape.kw + c);
  }
};

struct ReluLayer {};

using Layer = std::variant<AffineLayer, ConvLayer, ReluLayer>;

// Dense lowering of a conv layer: W x + b == conv(x) for all x, plus the
// parameter index maps needed to differentiate through the lowering.
struct LoweredConv {
  Mat W;
  Vec b;
  ad::LoweringMap weight_map;  // kernel params -> W entries
  ad::LoweringMap bias_map;    // bias params -> b entries
};

inline constexpr long kDefaultLoweringBudget = 64L * 1024 * 1024;

LoweredConv lower_to_affine(const ConvLayer& conv, long entry_budget = kDefaultLoweringBudget);

class Network {
 public:
  Network(std::vector<Layer> layers, int input_dim);

  const std::vector<Layer>& layers() const { return layers_; }
  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  int depth() const { return depth_; }  // number of weighted layers

  // Lowered form of weighted layer `w` (0-based among weighted layers).
  const Mat& weight(int w) const;
  const Vec& bias(int w) const;
  bool relu_after(int w) const { return relu_after_[w]; }
  bool is_conv(int w) const { return conv_geom_[w].has_value(); }
  const LoweredConv& lowered(int w) const;

  long parameter_count() const;

 private:
  std::vector<Layer> layers_;
  std::vector<std::optional<LoweredConv>> conv_geom_;  // per weighted layer
  std::vector<int> weighted_index_;                    // weighted idx -> layer idx
  std::vector<bool> relu_after_;
  int input_dim_ = 0, output_dim_ = 0, depth_ = 0;
};

struct ForwardTrace {
  std::vector<Vec> post;  // post-activation of each weighted layer (after ReLU if present)
  std::vector<Vec> pre;   // pre-activation of each weighted layer
  Vec y;
};

ForwardTrace forward(const Network& net, const Vec& x);
// Batched forward, samples as columns. Returns outputs only.
Mat forward_batch(const Network& net, const Mat& X);

struct ArchDescriptor {
  // Grammar: tokens joined by '-'. First token is either the input dim
  // ("4") or an input shape ("1x28x28"). A plain integer token is a dense
  // layer; "c<oc>k<K>s<S>p<P>" is a conv layer. ReLU is inserted between
  // consecutive weighted layers, never after the last.
  std::string text;
  static ArchDescriptor parse(const std::string& s);
  std::vector<Layer> build_zero() const;  // layers with zero weights
  int input_dim() const;
};

Network init_network(const ArchDescriptor& arch, uint64_t seed);

// Weight vector round trip (flattened in layer order: W row-major, then b;
// conv layers contribute kernel then bias).
Vec flatten_weights(const Network& net);
Network with_weights(const Network& net, const Vec& w);

}  // namespace reachsense
