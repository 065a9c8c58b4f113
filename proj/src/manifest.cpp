#include "manifest.hpp"

#include "caplim/error.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>
#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include <chrono>
#include <ctime>
#include <fstream>

namespace caplim::app {

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

nlohmann::ordered_json library_versions() {
  nlohmann::ordered_json v;
  v["caplim"] = "0.1.0";
  v["compiler"] = __VERSION__;
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  v["boost"] = BOOST_LIB_VERSION;
  v["openssl"] = OPENSSL_VERSION_TEXT;
  v["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                       "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  return v;
}

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["versions"] = library_versions();
  j["started_utc"] = started_utc;
  j["elapsed_seconds"] = elapsed_seconds;
  j["workers"] = workers;
  j["complete"] = complete;
  if (!error.empty()) j["error"] = error;
  auto files_json = nlohmann::ordered_json::array();
  for (const auto& f : files) {
    nlohmann::ordered_json e;
    e["name"] = f.name;
    e["sha256"] = f.sha256;
    e["bytes"] = f.bytes;
    files_json.push_back(e);
  }
  j["files"] = files_json;
  return j;
}

void write_output(const std::filesystem::path& dir, const std::string& name, const std::string& content,
                  RunManifest& manifest) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / name).string());
  out << content;
  out.close();
  if (!out) throw Error("write failed for " + (dir / name).string());
  manifest.files.push_back({name, sha256_hex(content), content.size()});
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace caplim::app
