#pragma once

// Run manifests: provenance plus a content digest for every output file.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace caplim::app {

std::string sha256_hex(const std::string& data);

struct OutputFile {
  std::string name;
  std::string sha256;
  std::size_t bytes = 0;
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string started_utc;
  double elapsed_seconds = 0.0;
  std::vector<OutputFile> files;
  bool complete = false;
  std::string error;

  nlohmann::ordered_json to_json() const;
};

nlohmann::ordered_json library_versions();

/// Writes `content` to dir/name and records its digest in the manifest.
void write_output(const std::filesystem::path& dir, const std::string& name, const std::string& content,
                  RunManifest& manifest);

std::string utc_now();

}  // namespace caplim::app
