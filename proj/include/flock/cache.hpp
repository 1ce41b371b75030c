#pragma once

#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include "flock/value.hpp"

namespace flockmtl {

/// SHA-256 hex digest.
std::string sha256_hex(std::string_view data);

/// Persistent prediction cache: an append-only JSON-lines file plus an in-memory index.
/// Concurrent readers, serialized writers. An empty path keeps the cache in memory.
class PredictionCache {
 public:
  explicit PredictionCache(std::filesystem::path file = {});

  /// `$FLOCK_CACHE_DIR`, else `<workspace>/.flock/cache`.
  static std::filesystem::path default_dir(const std::filesystem::path& workspace);
  static constexpr const char* kFileName = "predictions.jsonl";

  std::optional<Json> get(const std::string& key) const;
  void put(const std::string& key, const Json& value);
  std::size_t size() const;
  /// Drops all entries and truncates the file.
  void clear();

  const std::filesystem::path& file() const noexcept { return file_; }

 private:
  void load();

  std::filesystem::path file_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, Json> entries_;
};

}  // namespace flockmtl
