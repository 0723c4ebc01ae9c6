#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cgx {

// FNV-1a 64-bit over the file bytes, hex-encoded.
std::string file_content_hash(const std::string& path);

struct RunManifest {
  std::string command;
  std::string config_json;                    // serialized config snapshot
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;  // path -> content hash
  std::vector<std::string> outputs;
  std::int64_t duration_ms = 0;
};

void write_manifest(const RunManifest& m, const std::string& path);
RunManifest read_manifest(const std::string& path);

}  // namespace cgx
