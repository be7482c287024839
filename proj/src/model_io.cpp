#include "reachsense/model_io.hpp"

#include <cstring>
#include <fstream>

namespace reachsense {

uint32_t crc32(const unsigned char* data, size_t n) {
  static uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    init = true;
  }
  uint32_t c = 0xFFFFFFFFu;
  for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

namespace {

constexpr char kMagic[4] = {'R', 'S', 'N', 'M'};
constexpr int kSchemaVersion = 1;

json describe_layers(const Network& net) {
  json arr = json::array();
  for (const auto& L : net.layers()) {
    if (const auto* a = std::get_if<AffineLayer>(&L)) {
      arr.push_back({{"type", "affine"}, {"rows", a->W.rows()}, {"cols", a->W.cols()}});
    } else if (const auto* c = std::get_if<ConvLayer>(&L)) {
      const ConvShape& s = c->shape;
      arr.push_back({{"type", "conv"},
                     {"in_ch", s.in_ch}, {"in_h", s.in_h}, {"in_w", s.in_w},
                     {"out_ch", s.out_ch}, {"kh", s.kh}, {"kw", s.kw},
                     {"stride", s.stride}, {"pad", s.pad}});
    } else {
      arr.push_back({{"type", "relu"}});
    }
  }
  return arr;
}

std::vector<Layer> layers_from_json(const json& arr) {
  std::vector<Layer> layers;
  for (const auto& j : arr) {
    std::string type = j.at("type");
    if (type == "affine") {
      layers.emplace_back(AffineLayer{Mat::Zero(j.at("rows").get<long>(), j.at("cols").get<long>()),
                                      Vec::Zero(j.at("rows").get<long>())});
    } else if (type == "conv") {
      ConvLayer c;
      c.shape = ConvShape{j.at("in_ch"), j.at("in_h"), j.at("in_w"), j.at("out_ch"),
                          j.at("kh"),    j.at("kw"),   j.at("stride"), j.at("pad")};
      c.kernel = Vec::Zero((long)c.shape.out_ch * c.shape.in_ch * c.shape.kh * c.shape.kw);
      c.bias = Vec::Zero(c.shape.out_ch);
      layers.emplace_back(std::move(c));
    } else if (type == "relu") {
      layers.emplace_back(ReluLayer{});
    } else {
      throw std::runtime_error("unknown layer type in model file: " + type);
    }
  }
  return layers;
}

}  // namespace

void save_model(const Network& net, const std::string& path, const json& metadata) {
  Vec w = flatten_weights(net);
  json header;
  header["schema"] = kSchemaVersion;
  header["input_dim"] = net.input_dim();
  header["layers"] = describe_layers(net);
  header["metadata"] = metadata;
  header["payload_count"] = w.size();
  header["payload_crc32"] =
      crc32(reinterpret_cast<const unsigned char*>(w.data()), (size_t)w.size() * sizeof(double));
  std::string h = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(kMagic, 4);
  uint32_t hlen = (uint32_t)h.size();
  f.write(reinterpret_cast<const char*>(&hlen), 4);
  f.write(h.data(), (std::streamsize)h.size());
  f.write(reinterpret_cast<const char*>(w.data()), (std::streamsize)(w.size() * sizeof(double)));
  if (!f) throw std::runtime_error("write failure: " + path);
}

LoadedModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open model file: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad magic in model file: " + path);
  uint32_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 4);
  if (!f) throw std::runtime_error("truncated header length: " + path);
  std::string h(hlen, '\0');
  f.read(h.data(), hlen);
  if (!f) throw std::runtime_error("truncated header: " + path);
  json header = json::parse(h);
  int schema = header.at("schema");
  if (schema != kSchemaVersion)
    throw std::runtime_error("unsupported model schema " + std::to_string(schema));
  long count = header.at("payload_count");
  Vec w(count);
  f.read(reinterpret_cast<char*>(w.data()), (std::streamsize)(count * sizeof(double)));
  if (!f) throw std::runtime_error("truncated payload: " + path);
  uint32_t expect = header.at("payload_crc32");
  uint32_t got = crc32(reinterpret_cast<const unsigned char*>(w.data()), (size_t)count * sizeof(double));
  if (got != expect) throw std::runtime_error("payload checksum mismatch in " + path);
  Network skeleton(layers_from_json(header.at("layers")), header.at("input_dim"));
  LoadedModel out{with_weights(skeleton, w), header.value("metadata", json::object())};
  return out;
}

}  // namespace reachsense
