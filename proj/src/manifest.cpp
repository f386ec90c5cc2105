#include "ipr/manifest.hpp"

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ipr/common.hpp"

namespace ipr {
namespace {

std::string utc_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string manifest_path(const std::string& run_dir) {
  return run_dir + "/manifest.jsonl";
}

// Manifested paths are run_dir-relative for managed artifacts and absolute
// for pinned external files; resolve both the same way everywhere.
std::string resolve(const std::string& run_dir, const std::string& path) {
  if (!path.empty() && path.front() == '/') return path;
  return run_dir + "/" + path;
}

}  // namespace

Json manifest_entry_to_json(const ManifestEntry& entry) {
  Json j;
  j["kind"] = entry.kind;
  j["name"] = entry.name;
  j["path"] = entry.path;
  j["sha256"] = entry.sha256;
  j["timestamp"] = entry.timestamp;
  return j;
}

ManifestEntry manifest_entry_from_json(const Json& j) {
  ManifestEntry entry;
  entry.kind = j.at("kind").get<std::string>();
  entry.name = j.at("name").get<std::string>();
  entry.path = j.at("path").get<std::string>();
  entry.sha256 = j.at("sha256").get<std::string>();
  entry.timestamp = j.at("timestamp").get<std::string>();
  return entry;
}

void append_manifest(const std::string& run_dir, const ManifestEntry& entry) {
  ManifestEntry stamped = entry;
  if (stamped.timestamp.empty()) stamped.timestamp = utc_now();
  std::ofstream out(manifest_path(run_dir), std::ios::app);
  if (!out) throw Error("cannot append to " + manifest_path(run_dir));
  out << manifest_entry_to_json(stamped).dump() << "\n";
}

std::vector<ManifestEntry> read_manifest(const std::string& run_dir) {
  std::vector<ManifestEntry> entries;
  std::ifstream in(manifest_path(run_dir));
  if (!in) return entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      entries.push_back(manifest_entry_from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw DataCorruptionError(manifest_path(run_dir) + ":" +
                                std::to_string(line_no) + ": " + e.what());
    }
  }
  return entries;
}

void verify_manifest(const std::string& run_dir) {
  // Latest entry per path is authoritative.
  std::map<std::string, ManifestEntry> latest;
  for (const auto& entry : read_manifest(run_dir))
    if (!entry.path.empty()) latest[entry.path] = entry;
  for (const auto& [path, entry] : latest) {
    std::string full = resolve(run_dir, path);
    if (!std::filesystem::exists(full))
      throw DataCorruptionError("manifest lists " + path +
                                " but the file is missing; refusing to resume");
    std::string actual = sha256_file_hex(full);
    if (actual != entry.sha256)
      throw DataCorruptionError(path + " no longer matches its manifest hash (" +
                                actual.substr(0, 12) + " vs " +
                                entry.sha256.substr(0, 12) +
                                "); refusing to resume");
  }
}

bool manifest_covers(const std::vector<ManifestEntry>& entries,
                     const std::string& run_dir, const std::string& path) {
  const ManifestEntry* found = nullptr;
  for (const auto& entry : entries)
    if (entry.path == path) found = &entry;
  if (!found) return false;
  std::string full = resolve(run_dir, path);
  return std::filesystem::exists(full) && sha256_file_hex(full) == found->sha256;
}

std::string manifest_identity(const std::vector<ManifestEntry>& entries) {
  std::ostringstream out;
  for (const auto& entry : entries) {
    Json j = manifest_entry_to_json(entry);
    j.erase("timestamp");
    out << j.dump() << "\n";
  }
  return out.str();
}

RunLock::RunLock(const std::string& run_dir) : path_(run_dir + "/.lock") {
  if (std::filesystem::exists(path_))
    throw Error("another process owns " + run_dir + " (" + path_ +
                " exists; remove it if that process is gone)");
  std::ofstream out(path_);
  if (!out) throw Error("cannot create " + path_);
  out << "pid " << ::getpid() << "\n";
}

RunLock::~RunLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

}  // namespace ipr
