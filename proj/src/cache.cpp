#include "flock/cache.hpp"

#include <openssl/evp.h>

#include <cstdlib>
#include <fstream>
#include <mutex>

#include "flock/error.hpp"

namespace flockmtl {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

PredictionCache::PredictionCache(std::filesystem::path file) : file_(std::move(file)) { load(); }

std::filesystem::path PredictionCache::default_dir(const std::filesystem::path& workspace) {
  if (const char* env = std::getenv("FLOCK_CACHE_DIR"); env && *env) return env;
  return workspace / ".flock" / "cache";
}

void PredictionCache::load() {
  if (file_.empty()) return;
  std::ifstream in(file_);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json entry = Json::parse(line, nullptr, false);
    // A torn final line from an interrupted write is skipped.
    if (entry.is_discarded() || !entry.contains("k") || !entry.contains("v")) continue;
    entries_[entry["k"].get<std::string>()] = entry["v"];
  }
}

std::optional<Json> PredictionCache::get(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void PredictionCache::put(const std::string& key, const Json& value) {
  std::unique_lock lock(mutex_);
  auto [it, inserted] = entries_.insert_or_assign(key, value);
  (void)it;
  (void)inserted;
  if (file_.empty()) return;
  if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
  std::ofstream out(file_, std::ios::app);
  if (!out) throw Error(ErrorCode::IoError, "cannot append to cache " + file_.string());
  out << Json{{"k", key}, {"v", value}}.dump() << "\n";
}

std::size_t PredictionCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

void PredictionCache::clear() {
  std::unique_lock lock(mutex_);
  entries_.clear();
  if (!file_.empty() && std::filesystem::exists(file_)) std::filesystem::remove(file_);
}

}  // namespace flockmtl
