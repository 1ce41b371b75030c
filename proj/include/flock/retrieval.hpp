#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace flockmtl {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// Lowercase, split on anything that is not an ASCII letter or digit, drop empty tokens.
std::vector<std::string> tokenize(std::string_view text);

struct Posting {
  std::string doc_id;
  std::size_t tf = 0;
};

/// Immutable BM25 index. Document ids are opaque strings.
class InvertedIndex {
 public:
  /// Throws Error(DuplicateDocId).
  static InvertedIndex build(const std::vector<std::pair<std::string, std::string>>& docs, Bm25Params params = {});

  const std::vector<Posting>& postings(const std::string& term) const;
  std::size_t doc_length(const std::string& doc_id) const;
  std::size_t doc_count() const noexcept { return doc_lengths_.size(); }
  std::size_t document_frequency(const std::string& term) const { return postings(term).size(); }
  double average_doc_length() const noexcept { return avgdl_; }
  const Bm25Params& params() const noexcept { return params_; }
  std::size_t term_count() const noexcept { return postings_.size(); }

  /// ln(1 + (N - df + 0.5) / (df + 0.5)).
  double idf(const std::string& term) const;

  /// Scores of documents containing at least one distinct query term.
  std::unordered_map<std::string, double> match(std::string_view query) const;

 private:
  Bm25Params params_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::unordered_map<std::string, std::size_t> doc_lengths_;
  double avgdl_ = 0.0;
};

/// Throws Error(DimensionMismatch) or Error(ZeroVector).
double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace flockmtl
