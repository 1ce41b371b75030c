#include "flock/retrieval.hpp"

#include <cmath>
#include <set>

#include "flock/error.hpp"

namespace flockmtl {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    bool alnum = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
    if (alnum) {
      current += static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

InvertedIndex InvertedIndex::build(const std::vector<std::pair<std::string, std::string>>& docs, Bm25Params params) {
  InvertedIndex index;
  index.params_ = params;
  std::size_t total = 0;
  for (const auto& [id, text] : docs) {
    if (index.doc_lengths_.count(id)) throw Error(ErrorCode::DuplicateDocId, "duplicate document id '" + id + "'");
    auto tokens = tokenize(text);
    index.doc_lengths_[id] = tokens.size();
    total += tokens.size();
    std::unordered_map<std::string, std::size_t> tf;
    std::vector<std::string> order;
    for (auto& t : tokens) {
      if (tf[t]++ == 0) order.push_back(t);
    }
    for (const auto& t : order) index.postings_[t].push_back({id, tf[t]});
  }
  if (!docs.empty()) index.avgdl_ = static_cast<double>(total) / static_cast<double>(docs.size());
  return index;
}

const std::vector<Posting>& InvertedIndex::postings(const std::string& term) const {
  static const std::vector<Posting> empty;
  auto it = postings_.find(term);
  return it == postings_.end() ? empty : it->second;
}

std::size_t InvertedIndex::doc_length(const std::string& doc_id) const {
  auto it = doc_lengths_.find(doc_id);
  return it == doc_lengths_.end() ? 0 : it->second;
}

double InvertedIndex::idf(const std::string& term) const {
  double n = static_cast<double>(doc_count());
  double df = static_cast<double>(document_frequency(term));
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

std::unordered_map<std::string, double> InvertedIndex::match(std::string_view query) const {
  std::unordered_map<std::string, double> scores;
  auto terms = tokenize(query);
  std::set<std::string> distinct(terms.begin(), terms.end());
  for (const auto& term : distinct) {
    const auto& list = postings(term);
    if (list.empty()) continue;
    double w = idf(term);
    for (const auto& p : list) {
      double tf = static_cast<double>(p.tf);
      double len = static_cast<double>(doc_length(p.doc_id));
      double norm = params_.k1 * (1.0 - params_.b + params_.b * len / avgdl_);
      scores[p.doc_id] += w * tf * (params_.k1 + 1.0) / (tf + norm);
    }
  }
  return scores;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch, "cosine similarity of arrays with length " + std::to_string(a.size()) +
                                                  " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine similarity of a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace flockmtl
