#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ngt/corpus.hpp"
#include "ngt/ngram.hpp"

namespace ngt {

/// ROUGE-L F1: longest common subsequence precision/recall against the
/// reference, 0 when either side is empty or nothing is shared.
inline double rouge_l(const TokenSequence& candidate, const TokenSequence& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const std::size_t m = candidate.size();
  const std::size_t n = reference.size();
  std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      if (candidate[i - 1] == reference[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  std::size_t lcs = prev[n];
  if (lcs == 0) return 0.0;
  double p = static_cast<double>(lcs) / static_cast<double>(m);
  double r = static_cast<double>(lcs) / static_cast<double>(n);
  return 2.0 * p * r / (p + r);
}

/// Add-one-smoothed n-gram language model (order 1 or 2) over the training
/// vocabulary plus an unknown symbol. Bigram contexts are counted as bigram
/// starts so every conditional distribution sums to exactly 1.
class NgramLm {
 public:
  static NgramLm train(const std::vector<Document>& train_docs, std::size_t order) {
    if (order < 1 || order > 2)
      throw std::invalid_argument("language model order must be 1 or 2");
    if (train_docs.empty()) throw std::invalid_argument("empty corpus");
    NgramLm lm;
    lm.order_ = order;
    for (const auto& doc : train_docs) {
      TokenSequence toks = tokenize(doc.text);
      std::uint32_t prev_id = 0;
      for (std::size_t i = 0; i < toks.size(); ++i) {
        std::uint32_t id = lm.intern(toks[i]);
        lm.unigram_counts_[id] += 1;
        lm.total_tokens_ += 1;
        if (order == 2 && i > 0) {
          lm.bigram_counts_[pack(prev_id, id)] += 1;
          lm.context_counts_[prev_id] += 1;
        }
        prev_id = id;
      }
    }
    if (lm.total_tokens_ == 0) throw std::invalid_argument("empty corpus");
    return lm;
  }

  std::size_t order() const { return order_; }
  std::size_t vocab_size_with_unk() const { return ids_.size() + 1; }

  /// P(token) with add-one smoothing; unknown tokens share the unk symbol.
  double prob_unigram(const std::string& token) const {
    std::uint32_t id = lookup(token);
    std::size_t c = 0;
    auto it = unigram_counts_.find(id);
    if (it != unigram_counts_.end()) c = it->second;
    return static_cast<double>(c + 1) /
           static_cast<double>(total_tokens_ + vocab_size_with_unk());
  }

  /// P(token | prev) with add-one smoothing over bigram-start contexts.
  double prob_bigram(const std::string& prev, const std::string& token) const {
    std::uint32_t pid = lookup(prev);
    std::uint32_t id = lookup(token);
    std::size_t c2 = 0;
    auto it2 = bigram_counts_.find(pack(pid, id));
    if (it2 != bigram_counts_.end()) c2 = it2->second;
    std::size_t c1 = 0;
    auto it1 = context_counts_.find(pid);
    if (it1 != context_counts_.end()) c1 = it1->second;
    return static_cast<double>(c2 + 1) /
           static_cast<double>(c1 + vocab_size_with_unk());
  }

  /// Probability of position i in a token sequence; bigram models score the
  /// first token with the unigram distribution.
  double prob_at(const TokenSequence& toks, std::size_t i) const {
    if (order_ == 1 || i == 0) return prob_unigram(toks[i]);
    return prob_bigram(toks[i - 1], toks[i]);
  }

 private:
  static std::uint64_t pack(std::uint32_t a, std::uint32_t b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }

  std::uint32_t intern(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    std::uint32_t id = static_cast<std::uint32_t>(ids_.size() + 1);  // 0 is unk
    ids_.emplace(token, id);
    return id;
  }

  std::uint32_t lookup(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? 0u : it->second;
  }

  std::size_t order_ = 2;
  std::size_t total_tokens_ = 0;
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::unordered_map<std::uint32_t, std::size_t> unigram_counts_;
  std::unordered_map<std::uint32_t, std::size_t> context_counts_;
  std::unordered_map<std::uint64_t, std::size_t> bigram_counts_;
};

/// exp of the mean negative log-likelihood per token.
inline double perplexity(const NgramLm& lm, const Document& doc) {
  TokenSequence toks = tokenize(doc.text);
  if (toks.empty())
    throw std::invalid_argument("perplexity: document '" + doc.id +
                                "' tokenizes to nothing");
  double nll = 0.0;
  for (std::size_t i = 0; i < toks.size(); ++i) nll -= std::log(lm.prob_at(toks, i));
  return std::exp(nll / static_cast<double>(toks.size()));
}

enum class ScoreDirection : int { higher_is_positive = 0, lower_is_positive = 1 };

inline std::string to_string(ScoreDirection d) {
  return d == ScoreDirection::higher_is_positive ? "higher_is_positive"
                                                 : "lower_is_positive";
}

struct CalibratedThreshold {
  double threshold = 0.0;
  ScoreDirection direction = ScoreDirection::higher_is_positive;
  double j_statistic = 0.0;
};

namespace detail {

inline double youden_j(const std::vector<double>& scores, const std::vector<int>& labels,
                       double threshold, ScoreDirection dir) {
  std::size_t tp = 0, fp = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    bool pred = dir == ScoreDirection::higher_is_positive ? scores[i] >= threshold
                                                          : scores[i] <= threshold;
    if (labels[i]) {
      ++pos;
      if (pred) ++tp;
    } else {
      ++neg;
      if (pred) ++fp;
    }
  }
  double tpr = pos ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
  double fpr = neg ? static_cast<double>(fp) / static_cast<double>(neg) : 0.0;
  return tpr - fpr;
}

}  // namespace detail

/// Maximizes J = TPR - FPR over midpoints of consecutive distinct scores in
/// both direction conventions. Ties break toward the smaller threshold, then
/// toward higher_is_positive.
inline CalibratedThreshold youden_threshold(const std::vector<double>& scores,
                                            const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("youden: score/label count mismatch");
  if (scores.empty()) throw std::invalid_argument("youden: empty calibration data");
  bool has_pos = false, has_neg = false;
  for (int y : labels) (y ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    throw std::invalid_argument("youden: calibration data holds a single class");

  std::vector<double> distinct = scores;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<double> candidates;
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i)
    candidates.push_back(0.5 * (distinct[i] + distinct[i + 1]));
  if (candidates.empty()) candidates.push_back(distinct.front());

  CalibratedThreshold best;
  bool first = true;
  for (double th : candidates) {
    for (ScoreDirection dir :
         {ScoreDirection::higher_is_positive, ScoreDirection::lower_is_positive}) {
      double j = detail::youden_j(scores, labels, th, dir);
      if (first || j > best.j_statistic) {
        best = CalibratedThreshold{th, dir, j};
        first = false;
      }
    }
  }
  return best;
}

/// Applies a calibrated threshold; a score exactly at the threshold counts as
/// positive in either direction.
inline std::vector<int> threshold_classify(const std::vector<double>& scores,
                                           const CalibratedThreshold& cal) {
  std::vector<int> out;
  out.reserve(scores.size());
  for (double s : scores) {
    bool pred = cal.direction == ScoreDirection::higher_is_positive
                    ? s >= cal.threshold
                    : s <= cal.threshold;
    out.push_back(pred ? 1 : 0);
  }
  return out;
}

}  // namespace ngt
