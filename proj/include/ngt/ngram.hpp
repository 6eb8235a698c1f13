#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ngt {

using TokenSequence = std::vector<std::string>;
using NGram = std::vector<std::string>;
using IndexTuple = std::vector<std::uint32_t>;

/// Lowercases, maps every character outside [a-z0-9'] to a space, splits on
/// whitespace runs. Multi-byte UTF-8 characters fall outside the kept set and
/// act as separators.
inline TokenSequence tokenize(std::string_view text) {
  TokenSequence out;
  std::string cur;
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
    bool keep = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'';
    if (keep) {
      cur.push_back(static_cast<char>(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Sliding windows (w_j, ..., w_{j+n-1}) for j = 1 ... |seq|-n+1, order and
/// multiplicity preserved. Empty when the sequence is shorter than n.
inline std::vector<NGram> extract_ngrams(const TokenSequence& seq, std::size_t n) {
  if (n < 1) throw std::invalid_argument("extract_ngrams: order must be >= 1");
  std::vector<NGram> out;
  if (seq.size() < n) return out;
  out.reserve(seq.size() - n + 1);
  for (std::size_t j = 0; j + n <= seq.size(); ++j)
    out.emplace_back(seq.begin() + j, seq.begin() + j + n);
  return out;
}

/// Distinct tokens of a group's n-grams with a 1-based token<->index bijection.
/// Immutable once built; ordering is first occurrence.
class Vocabulary {
 public:
  Vocabulary() = default;

  /// Returns the 1-based index, inserting the token on first sight.
  std::uint32_t add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    tokens_.push_back(token);
    std::uint32_t idx = static_cast<std::uint32_t>(tokens_.size());
    index_.emplace(token, idx);
    return idx;
  }

  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  /// 1-based index of a known token; throws naming the token otherwise.
  std::uint32_t index_of(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end())
      throw std::out_of_range("vocabulary: unknown token '" + token + "'");
    return it->second;
  }

  const std::string& token_at(std::uint32_t index) const {
    if (index < 1 || index > tokens_.size())
      throw std::out_of_range("vocabulary: index out of range");
    return tokens_[index - 1];
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Newline-delimited token list; the 1-based line number is the index.
  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("vocabulary: cannot write " + path);
    for (const auto& t : tokens_) os << t << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("vocabulary: cannot read " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) v.add(line);
    }
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// Collects distinct tokens over all tuples of all sequences, first-occurrence
/// ordered. Tokens of documents too short to produce a window never appear.
inline Vocabulary build_vocabulary(const std::vector<std::vector<NGram>>& group_ngrams) {
  Vocabulary v;
  for (const auto& seq : group_ngrams)
    for (const auto& gram : seq)
      for (const auto& tok : gram) v.add(tok);
  return v;
}

/// pi(g): coordinatewise application of the vocabulary bijection.
inline IndexTuple index_ngram(const Vocabulary& vocab, const NGram& gram) {
  IndexTuple out;
  out.reserve(gram.size());
  for (const auto& tok : gram) out.push_back(vocab.index_of(tok));
  return out;
}

}  // namespace ngt
