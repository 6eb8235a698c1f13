#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ngt/corpus.hpp"
#include "ngt/ngram.hpp"

namespace ngt {

enum class WeightVariant : int { frequency = 0, binary = 1, log_frequency = 2 };

inline std::string to_string(WeightVariant v) {
  switch (v) {
    case WeightVariant::frequency: return "freq";
    case WeightVariant::binary: return "binary";
    default: return "log";
  }
}

inline WeightVariant parse_variant(const std::string& s) {
  if (s == "freq" || s == "frequency") return WeightVariant::frequency;
  if (s == "binary") return WeightVariant::binary;
  if (s == "log" || s == "log_frequency") return WeightVariant::log_frequency;
  throw std::invalid_argument("unknown weight variant '" + s + "'");
}

struct TensorEntry {
  IndexTuple indices;  // 1-based, one per mode
  double value = 0.0;
};

/// Order-N count tensor in coordinate form. Entries are sorted
/// lexicographically by coordinates and no explicit zeros are stored.
class SparseCountTensor {
 public:
  SparseCountTensor() = default;
  SparseCountTensor(std::size_t order, std::size_t dim, std::vector<TensorEntry> entries,
                    WeightVariant variant)
      : order_(order), dim_(dim), entries_(std::move(entries)), variant_(variant) {
    if (order_ < 2) throw std::invalid_argument("tensor order must be >= 2");
    for (const auto& e : entries_) {
      if (e.indices.size() != order_)
        throw std::invalid_argument("tensor entry arity mismatch");
      for (auto i : e.indices)
        if (i < 1 || i > dim_)
          throw std::out_of_range("tensor entry index outside 1..dim");
    }
    std::sort(entries_.begin(), entries_.end(),
              [](const TensorEntry& a, const TensorEntry& b) {
                return a.indices < b.indices;
              });
  }

  std::size_t order() const { return order_; }
  std::size_t dim() const { return dim_; }
  WeightVariant variant() const { return variant_; }
  const std::vector<TensorEntry>& entries() const { return entries_; }
  std::size_t nnz() const { return entries_.size(); }

  double sum() const {
    double s = 0.0;
    for (const auto& e : entries_) s += e.value;
    return s;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (const auto& e : entries_) s += e.value * e.value;
    return std::sqrt(s);
  }

  /// 0 for any coordinate not stored.
  double value_at(const IndexTuple& idx) const {
    if (idx.size() != order_) throw std::invalid_argument("coordinate arity mismatch");
    auto it = std::lower_bound(entries_.begin(), entries_.end(), idx,
                               [](const TensorEntry& e, const IndexTuple& key) {
                                 return e.indices < key;
                               });
    if (it != entries_.end() && it->indices == idx) return it->value;
    return 0.0;
  }

  /// Text lines "i1 i2 ... iN value", coordinate-sorted, for oracle checks.
  void dump(std::ostream& os) const {
    for (const auto& e : entries_) {
      for (std::size_t m = 0; m < order_; ++m) {
        if (m) os << ' ';
        os << e.indices[m];
      }
      os << ' ' << e.value << '\n';
    }
  }

 private:
  std::size_t order_ = 2;
  std::size_t dim_ = 0;
  std::vector<TensorEntry> entries_;
  WeightVariant variant_ = WeightVariant::frequency;
};

/// Counts every member document's N-gram windows against the group vocabulary.
/// Windows never span document boundaries.
inline SparseCountTensor build_count_tensor(const LabeledGroup& group, std::size_t n,
                                            const Vocabulary& vocab) {
  if (n < 2) throw std::invalid_argument("tensor order must be >= 2");
  std::map<IndexTuple, double> counts;
  for (const auto& doc : group.members) {
    TokenSequence toks = tokenize(doc.text);
    for (const auto& gram : extract_ngrams(toks, n)) {
      counts[index_ngram(vocab, gram)] += 1.0;
    }
  }
  std::vector<TensorEntry> entries;
  entries.reserve(counts.size());
  for (auto& [idx, c] : counts) entries.push_back(TensorEntry{idx, c});
  return SparseCountTensor(n, vocab.size(), std::move(entries),
                           WeightVariant::frequency);
}

/// frequency -> identity, binary -> indicator, log_frequency -> ln(1 + c).
/// The sparsity pattern never changes; only frequency tensors may be remapped.
inline SparseCountTensor apply_variant(const SparseCountTensor& t, WeightVariant v) {
  if (t.variant() != WeightVariant::frequency)
    throw std::invalid_argument("apply_variant requires a frequency tensor");
  std::vector<TensorEntry> entries = t.entries();
  if (v == WeightVariant::binary) {
    for (auto& e : entries) e.value = 1.0;
  } else if (v == WeightVariant::log_frequency) {
    for (auto& e : entries) e.value = std::log1p(e.value);
  }
  return SparseCountTensor(t.order(), t.dim(), std::move(entries), v);
}

struct SparseColumn {
  std::uint64_t col_id = 0;  // 0-based logical column index
  std::vector<std::pair<std::uint32_t, double>> cells;  // (0-based row, value), row-sorted
};

/// Mode-n unfolding stored column-compacted: only columns holding a nonzero
/// appear, identified by their logical index among the dim^(N-1) columns.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::uint64_t logical_cols,
               std::vector<SparseColumn> cols)
      : rows_(rows), logical_cols_(logical_cols), cols_(std::move(cols)) {}

  std::size_t rows() const { return rows_; }
  std::uint64_t logical_cols() const { return logical_cols_; }
  const std::vector<SparseColumn>& stored_columns() const { return cols_; }
  std::size_t stored_col_count() const { return cols_.size(); }

  std::size_t nnz() const {
    std::size_t s = 0;
    for (const auto& c : cols_) s += c.cells.size();
    return s;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (const auto& c : cols_)
      for (const auto& [r, v] : c.cells) s += v * v;
    return std::sqrt(s);
  }

  /// 1-based logical lookup, zero when absent; for tests and oracles.
  double at(std::size_t row1, std::uint64_t col1) const {
    if (row1 < 1 || row1 > rows_ || col1 < 1 || col1 > logical_cols_)
      throw std::out_of_range("sparse matrix index out of range");
    std::uint64_t cid = col1 - 1;
    auto it = std::lower_bound(cols_.begin(), cols_.end(), cid,
                               [](const SparseColumn& c, std::uint64_t key) {
                                 return c.col_id < key;
                               });
    if (it == cols_.end() || it->col_id != cid) return 0.0;
    std::uint32_t r0 = static_cast<std::uint32_t>(row1 - 1);
    auto cit = std::lower_bound(
        it->cells.begin(), it->cells.end(), r0,
        [](const std::pair<std::uint32_t, double>& c, std::uint32_t key) {
          return c.first < key;
        });
    if (cit != it->cells.end() && cit->first == r0) return cit->second;
    return 0.0;
  }

 private:
  std::size_t rows_ = 0;
  std::uint64_t logical_cols_ = 0;
  std::vector<SparseColumn> cols_;
};

/// Mode-n matricization, shape dim x dim^(N-1). The remaining modes linearize
/// in ascending order with the lowest remaining mode varying fastest.
inline SparseMatrix unfold(const SparseCountTensor& t, std::size_t mode) {
  if (mode < 1 || mode > t.order())
    throw std::invalid_argument("unfold mode out of range");
  const std::size_t order = t.order();
  const std::uint64_t dim = t.dim();

  std::vector<std::size_t> rem;
  for (std::size_t m = 1; m <= order; ++m)
    if (m != mode) rem.push_back(m);

  std::vector<std::uint64_t> stride(rem.size());
  std::uint64_t s = 1;
  std::uint64_t logical_cols = 1;
  for (std::size_t t2 = 0; t2 < rem.size(); ++t2) {
    stride[t2] = s;
    if (dim != 0 && s > UINT64_MAX / dim)
      throw std::overflow_error("unfolding column space exceeds addressable range");
    s *= dim;
    logical_cols = s;
  }
  if (dim == 0) logical_cols = 0;

  std::map<std::uint64_t, std::vector<std::pair<std::uint32_t, double>>> by_col;
  for (const auto& e : t.entries()) {
    std::uint64_t col = 0;
    for (std::size_t t2 = 0; t2 < rem.size(); ++t2)
      col += static_cast<std::uint64_t>(e.indices[rem[t2] - 1] - 1) * stride[t2];
    by_col[col].emplace_back(e.indices[mode - 1] - 1, e.value);
  }

  std::vector<SparseColumn> cols;
  cols.reserve(by_col.size());
  for (auto& [cid, cells] : by_col) {
    std::sort(cells.begin(), cells.end());
    cols.push_back(SparseColumn{cid, std::move(cells)});
  }
  return SparseMatrix(t.dim(), logical_cols, std::move(cols));
}

inline double tensor_frobenius_norm(const SparseCountTensor& t) {
  return t.frobenius_norm();
}

}  // namespace ngt
