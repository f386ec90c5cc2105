#pragma once

#include <string>
#include <vector>

#include "ipr/env.hpp"

namespace ipr {

inline constexpr const char* kToolVersion = "ipr 1.0.0";

// One audited artifact. `path` is relative to the run directory and empty for
// entries without a file (the tool version). Timestamps are informational and
// excluded from identity.
struct ManifestEntry {
  std::string kind;  // config | dataset | checkpoint | pairs | metrics | tool
  std::string name;
  std::string path;
  std::string sha256;
  std::string timestamp;
};

Json manifest_entry_to_json(const ManifestEntry& entry);
ManifestEntry manifest_entry_from_json(const Json& j);

// The manifest is append-only JSONL at <run_dir>/manifest.jsonl. When the same
// path is recorded twice the latest entry wins.
void append_manifest(const std::string& run_dir, const ManifestEntry& entry);
std::vector<ManifestEntry> read_manifest(const std::string& run_dir);

// Rehashes every manifested file; a missing file or changed hash means the run
// directory was edited and resuming would silently diverge, so refuse.
void verify_manifest(const std::string& run_dir);

// True when the latest entry for `path` exists and the file still matches it.
bool manifest_covers(const std::vector<ManifestEntry>& entries,
                     const std::string& run_dir, const std::string& path);

// Rendering with timestamps stripped; equal for identical runs.
std::string manifest_identity(const std::vector<ManifestEntry>& entries);

// Single-process ownership of a run directory: creates <run_dir>/.lock
// exclusively and removes it on destruction. A pre-existing lock aborts.
class RunLock {
 public:
  explicit RunLock(const std::string& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::string path_;
};

}  // namespace ipr
