#include "cgx/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace cgx {

std::string file_content_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file_content_hash: cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void write_manifest(const RunManifest& m, const std::string& path) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config"] = m.config_json.empty() ? nlohmann::json(nullptr)
                                      : nlohmann::json::parse(m.config_json);
  j["seeds"] = m.seeds;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["duration_ms"] = m.duration_ms;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_manifest: cannot write " + path);
  out << j.dump(2) << "\n";
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_manifest: cannot open " + path);
  nlohmann::json j;
  in >> j;
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config_json = j.at("config").is_null() ? "" : j.at("config").dump();
  m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  m.duration_ms = j.at("duration_ms").get<std::int64_t>();
  return m;
}

}  // namespace cgx
