#include "reachsense/net.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace reachsense {

LoweredConv lower_to_affine(const ConvLayer& conv, long entry_budget) {
  const ConvShape& s = conv.shape;
  if (!s.shape_ok()) throw std::invalid_argument("conv shape does not yield an integer output shape");
  long rows = s.out_dim(), cols = s.in_dim();
  if (rows * cols > entry_budget)
    throw std::runtime_error("conv lowering exceeds size budget (" + std::to_string(rows * cols) +
                             " > " + std::to_string(entry_budget) + " entries)");
  LoweredConv out;
  out.W = Mat::Zero(rows, cols);
  out.b = Vec::Zero(rows);
  out.weight_map.out_rows = (int)rows;
  out.weight_map.out_cols = (int)cols;
  out.bias_map.out_rows = (int)rows;
  out.bias_map.out_cols = 1;
  int oh = s.out_h(), ow = s.out_w();
  for (int oc = 0; oc < s.out_ch; ++oc) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        int row = (oc * oh + oy) * ow + ox;
        out.b(row) = conv.bias(oc);
        out.bias_map.triples.push_back({row, 0, oc});
        for (int ic = 0; ic < s.in_ch; ++ic) {
          for (int r = 0; r < s.kh; ++r) {
            int iy = oy * s.stride + r - s.pad;
            if (iy < 0 || iy >= s.in_h) continue;
            for (int c = 0; c < s.kw; ++c) {
              int ix = ox * s.stride + c - s.pad;
              if (ix < 0 || ix >= s.in_w) continue;
              int col = (ic * s.in_h + iy) * s.in_w + ix;
              int kidx = (((oc * s.in_ch) + ic) * s.kh + r) * s.kw + c;
              out.W(row, col) += conv.kernel(kidx);
              out.weight_map.triples.push_back({row, col, kidx});
            }
          }
        }
      }
    }
  }
  return out;
}

Network::Network(std::vector<Layer> layers, int input_dim)
    : layers_(std::move(layers)), input_dim_(input_dim) {
  if (input_dim_ < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (layers_.empty()) throw std::invalid_argument("network has no layers");
  int dim = input_dim_;
  bool prev_weighted = false;
  for (size_t i = 0; i < layers_.size(); ++i) {
    const Layer& L = layers_[i];
    if (std::holds_alternative<ReluLayer>(L)) {
      if (!prev_weighted)
        throw std::invalid_argument("ReLU layer must be preceded by a weighted layer");
      relu_after_.back() = true;
      prev_weighted = false;
      continue;
    }
    if (const auto* aff = std::get_if<AffineLayer>(&L)) {
      if (aff->W.cols() != dim) throw std::invalid_argument("affine layer input dim mismatch");
      if (aff->W.rows() != aff->b.size()) throw std::invalid_argument("affine rows(W) != len(b)");
      if (!aff->W.allFinite() || !aff->b.allFinite())
        throw std::invalid_argument("non-finite affine weights");
      dim = (int)aff->W.rows();
      conv_geom_.emplace_back(std::nullopt);
    } else {
      const auto& conv = std::get<ConvLayer>(L);
      if (conv.shape.in_dim() != dim) throw std::invalid_argument("conv layer input dim mismatch");
      if (!conv.kernel.allFinite() || !conv.bias.allFinite())
        throw std::invalid_argument("non-finite conv weights");
      if (conv.bias.size() != conv.shape.out_ch)
        throw std::invalid_argument("conv bias size != out channels");
      conv_geom_.emplace_back(lower_to_affine(conv));
      dim = conv.shape.out_dim();
    }
    weighted_index_.push_back((int)i);
    relu_after_.push_back(false);
    prev_weighted = true;
  }
  if (weighted_index_.empty()) throw std::invalid_argument("network has no weighted layers");
  if (!prev_weighted)
    throw std::invalid_argument("network must end with a weighted layer");
  depth_ = (int)weighted_index_.size();
  output_dim_ = dim;
}

const Mat& Network::weight(int w) const {
  if (conv_geom_[w]) return conv_geom_[w]->W;
  return std::get<AffineLayer>(layers_[weighted_index_[w]]).W;
}

const Vec& Network::bias(int w) const {
  if (conv_geom_[w]) return conv_geom_[w]->b;
  return std::get<AffineLayer>(layers_[weighted_index_[w]]).b;
}

const LoweredConv& Network::lowered(int w) const {
  if (!conv_geom_[w]) throw std::invalid_argument("layer is not convolutional");
  return *conv_geom_[w];
}

long Network::parameter_count() const {
  long n = 0;
  for (int w = 0; w < depth_; ++w) {
    if (is_conv(w)) {
      const auto& c = std::get<ConvLayer>(layers_[weighted_index_[w]]);
      n += c.kernel.size() + c.bias.size();
    } else {
      const auto& a = std::get<AffineLayer>(layers_[weighted_index_[w]]);
      n += a.W.size() + a.b.size();
    }
  }
  return n;
}

ForwardTrace forward(const Network& net, const Vec& x) {
  if (x.size() != net.input_dim()) throw std::invalid_argument("forward: input dim mismatch");
  if (!x.allFinite()) throw std::invalid_argument("forward: non-finite input");
  ForwardTrace tr;
  Vec z = x;
  for (int w = 0; w < net.depth(); ++w) {
    Vec pre = net.weight(w) * z + net.bias(w);
    tr.pre.push_back(pre);
    z = net.relu_after(w) ? Vec(pre.cwiseMax(0.0)) : pre;
    tr.post.push_back(z);
  }
  tr.y = z;
  return tr;
}

Mat forward_batch(const Network& net, const Mat& X) {
  if (X.rows() != net.input_dim()) throw std::invalid_argument("forward_batch: input dim mismatch");
  Mat Z = X;
  for (int w = 0; w < net.depth(); ++w) {
    Mat pre = net.weight(w) * Z;
    pre.colwise() += net.bias(w);
    Z = net.relu_after(w) ? Mat(pre.cwiseMax(0.0)) : pre;
  }
  return Z;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

struct ParsedArch {
  int in_ch = 1, in_h = 1, in_w = 1;
  struct Item {
    bool conv = false;
    int units = 0;                     // dense
    int oc = 0, k = 0, s = 1, p = 0;   // conv
  };
  std::vector<Item> items;
};

ParsedArch parse_arch(const std::string& text) {
  ParsedArch a;
  auto toks = split(text, '-');
  if (toks.size() < 2) throw std::invalid_argument("arch descriptor needs input and at least one layer: " + text);
  auto& in = toks[0];
  if (in.find('x') != std::string::npos) {
    auto dims = split(in, 'x');
    if (dims.size() != 3) throw std::invalid_argument("input shape must be CxHxW: " + in);
    a.in_ch = std::stoi(dims[0]);
    a.in_h = std::stoi(dims[1]);
    a.in_w = std::stoi(dims[2]);
  } else {
    a.in_w = std::stoi(in);
  }
  if (a.in_ch < 1 || a.in_h < 1 || a.in_w < 1) throw std::invalid_argument("bad input shape: " + in);
  for (size_t i = 1; i < toks.size(); ++i) {
    const std::string& t = toks[i];
    ParsedArch::Item it;
    if (!t.empty() && t[0] == 'c') {
      it.conv = true;
      size_t kpos = t.find('k');
      size_t spos = t.find('s');
      size_t ppos = t.find('p');
      if (kpos == std::string::npos) throw std::invalid_argument("conv token needs k: " + t);
      it.oc = std::stoi(t.substr(1, kpos - 1));
      size_t kend = std::min(spos == std::string::npos ? t.size() : spos,
                             ppos == std::string::npos ? t.size() : ppos);
      it.k = std::stoi(t.substr(kpos + 1, kend - kpos - 1));
      if (spos != std::string::npos) {
        size_t send = ppos != std::string::npos && ppos > spos ? ppos : t.size();
        it.s = std::stoi(t.substr(spos + 1, send - spos - 1));
      }
      if (ppos != std::string::npos) it.p = std::stoi(t.substr(ppos + 1));
    } else {
      it.units = std::stoi(t);
      if (it.units < 1) throw std::invalid_argument("dense layer needs >=1 units: " + t);
    }
    a.items.push_back(it);
  }
  return a;
}

}  // namespace

ArchDescriptor ArchDescriptor::parse(const std::string& s) {
  parse_arch(s);  // validate eagerly
  return ArchDescriptor{s};
}

int ArchDescriptor::input_dim() const {
  ParsedArch a = parse_arch(text);
  return a.in_ch * a.in_h * a.in_w;
}

std::vector<Layer> ArchDescriptor::build_zero() const {
  ParsedArch a = parse_arch(text);
  std::vector<Layer> layers;
  int ch = a.in_ch, h = a.in_h, w = a.in_w;
  int dim = ch * h * w;
  for (size_t i = 0; i < a.items.size(); ++i) {
    const auto& it = a.items[i];
    if (it.conv) {
      ConvLayer c;
      c.shape = ConvShape{ch, h, w, it.oc, it.k, it.k, it.s, it.p};
      if (!c.shape.shape_ok())
        throw std::invalid_argument("conv layer does not fit input shape in arch " + text);
      c.kernel = Vec::Zero((long)it.oc * ch * it.k * it.k);
      c.bias = Vec::Zero(it.oc);
      ch = it.oc;
      h = c.shape.out_h();
      w = c.shape.out_w();
      dim = ch * h * w;
      layers.emplace_back(std::move(c));
    } else {
      AffineLayer l{Mat::Zero(it.units, dim), Vec::Zero(it.units)};
      dim = it.units;
      ch = 1; h = 1; w = dim;
      layers.emplace_back(std::move(l));
    }
    if (i + 1 < a.items.size()) layers.emplace_back(ReluLayer{});
  }
  return layers;
}

Network init_network(const ArchDescriptor& arch, uint64_t seed) {
  std::vector<Layer> layers = arch.build_zero();
  std::mt19937_64 rng(seed);
  for (auto& L : layers) {
    if (auto* a = std::get_if<AffineLayer>(&L)) {
      double fan_in = (double)a->W.cols(), fan_out = (double)a->W.rows();
      double lim = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-lim, lim);
      for (long i = 0; i < a->W.size(); ++i) a->W(i) = u(rng);
      // biases stay zero
    } else if (auto* c = std::get_if<ConvLayer>(&L)) {
      double fan_in = (double)c->shape.in_ch * c->shape.kh * c->shape.kw;
      double fan_out = (double)c->shape.out_ch * c->shape.kh * c->shape.kw;
      double lim = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-lim, lim);
      for (long i = 0; i < c->kernel.size(); ++i) c->kernel(i) = u(rng);
    }
  }
  return Network(std::move(layers), ArchDescriptor{arch.text}.input_dim());
}

Vec flatten_weights(const Network& net) {
  Vec out(net.parameter_count());
  long pos = 0;
  for (const auto& L : net.layers()) {
    if (const auto* a = std::get_if<AffineLayer>(&L)) {
      for (long r = 0; r < a->W.rows(); ++r)
        for (long c = 0; c < a->W.cols(); ++c) out(pos++) = a->W(r, c);
      for (long i = 0; i < a->b.size(); ++i) out(pos++) = a->b(i);
    } else if (const auto* c = std::get_if<ConvLayer>(&L)) {
      for (long i = 0; i < c->kernel.size(); ++i) out(pos++) = c->kernel(i);
      for (long i = 0; i < c->bias.size(); ++i) out(pos++) = c->bias(i);
    }
  }
  return out;
}

Network with_weights(const Network& net, const Vec& w) {
  if (w.size() != net.parameter_count()) throw std::invalid_argument("weight vector size mismatch");
  std::vector<Layer> layers = net.layers();
  long pos = 0;
  for (auto& L : layers) {
    if (auto* a = std::get_if<AffineLayer>(&L)) {
      for (long r = 0; r < a->W.rows(); ++r)
        for (long c = 0; c < a->W.cols(); ++c) a->W(r, c) = w(pos++);
      for (long i = 0; i < a->b.size(); ++i) a->b(i) = w(pos++);
    } else if (auto* c = std::get_if<ConvLayer>(&L)) {
      for (long i = 0; i < c->kernel.size(); ++i) c->kernel(i) = w(pos++);
      for (long i = 0; i < c->bias.size(); ++i) c->bias(i) = w(pos++);
    }
  }
  return Network(std::move(layers), net.input_dim());
}

}  // namespace reachsense
