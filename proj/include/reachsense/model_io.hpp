#pragma once

// Model container: "RSNM" magic, little-endian u32 header length, JSON
// header (schema, explicit layer list, metadata, payload checksum), then
// the flattened weights as little-endian IEEE-754 float64.

#include <string>

#include <nlohmann/json.hpp>

#include "reachsense/net.hpp"

namespace reachsense {

using json = nlohmann::json;

struct LoadedModel {
  Network net;
  json metadata;
};

void save_model(const Network& net, const std::string& path, const json& metadata = json::object());
LoadedModel load_model(const std::string& path);

uint32_t crc32(const unsigned char* data, size_t n);

}  // namespace reachsense
