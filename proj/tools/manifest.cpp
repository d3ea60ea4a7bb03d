#include <cstdio>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "takeoff/error.hpp"

#ifndef TAKEOFF_VERSION
#define TAKEOFF_VERSION "unknown"
#endif

namespace takeoff::cli {

std::string tool_version() { return TAKEOFF_VERSION; }

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a_hex(ss.str());
}

nlohmann::ordered_json Manifest::content() const {
  nlohmann::ordered_json j;
  j["format"] = "takeoff-manifest";
  j["version"] = 1;
  j["tool_version"] = tool_version();
  j["command"] = command;
  j["config"] = config;
  j["seeds"] = seeds;
  auto files = [](const std::vector<std::string>& paths) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& p : paths) arr.push_back({{"path", p}, {"fnv1a", file_hash(p)}});
    return arr;
  };
  j["inputs"] = files(inputs);
  j["outputs"] = files(outputs);
  if (!extra.empty()) j["extra"] = extra;
  return j;
}

void Manifest::write(const std::string& path, double wall_seconds) const {
  auto j = content();
  j["content_hash"] = fnv1a_hex(j.dump());
  j["wall_time_seconds"] = wall_seconds;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace takeoff::cli
