#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "scmine/error.hpp"
#include "scmine/io.hpp"
#include "scmine/version.hpp"

// Run manifest written next to every output set: the full flag snapshot,
// input fingerprints, and the produced files. `scmine replay <manifest>`
// re-executes the stored invocation; outputs must come back byte-identical.

namespace scmine::manifest {

struct RunManifest {
  std::string tool = "scmine";
  std::string version = kVersion;
  std::string command;
  std::vector<std::string> args;  // full argv after the program name, verbatim
  std::string created_utc;
  std::map<std::string, std::string> inputs;  // path -> content fingerprint
  std::vector<std::string> outputs;

  nlohmann::json to_json() const {
    return nlohmann::json{{"tool", tool},         {"version", version},
                          {"command", command},   {"args", args},
                          {"created_utc", created_utc}, {"inputs", inputs},
                          {"outputs", outputs}};
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    m.tool = j.value("tool", "scmine");
    m.version = j.value("version", "");
    m.command = j.at("command").get<std::string>();
    m.args = j.at("args").get<std::vector<std::string>>();
    m.created_utc = j.value("created_utc", "");
    if (j.contains("inputs")) m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    if (j.contains("outputs")) m.outputs = j.at("outputs").get<std::vector<std::string>>();
    return m;
  }
};

inline std::filesystem::path path_for(const std::filesystem::path& primary_output) {
  return primary_output.string() + ".manifest.json";
}

inline void write(const RunManifest& m, const std::filesystem::path& path) {
  io::atomic_write(path, m.to_json().dump(2) + "\n");
}

inline RunManifest load(const std::filesystem::path& path) {
  try {
    return RunManifest::from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error("cannot read manifest " + path.string() + ": " + e.what());
  }
}

inline std::string fingerprint_file(const std::filesystem::path& path) {
  return io::fnv1a64_hex(io::read_file(path));
}

}  // namespace scmine::manifest
