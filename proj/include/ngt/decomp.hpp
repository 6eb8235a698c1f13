#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ngt/linalg.hpp"
#include "ngt/tensor.hpp"

namespace ngt {

enum class DecompKind : int { svd = 0, tucker = 1, cp = 2 };

inline std::string to_string(DecompKind k) {
  switch (k) {
    case DecompKind::svd: return "svd";
    case DecompKind::tucker: return "tucker";
    default: return "cp";
  }
}

inline DecompKind parse_decomp_kind(const std::string& s) {
  if (s == "svd") return DecompKind::svd;
  if (s == "tucker") return DecompKind::tucker;
  if (s == "cp" || s == "cpd") return DecompKind::cp;
  throw std::invalid_argument("unknown decomposition kind '" + s + "'");
}

struct DecompConfig {
  DecompKind kind = DecompKind::svd;
  std::size_t k = 20;                     // feature vector length
  std::size_t cp_rank = 0;                // 0 means "use k"
  std::vector<std::size_t> tucker_ranks;  // empty means min(dim, 10) per mode
  std::size_t max_iters = 100;
  double tol = 1e-6;
  std::uint64_t seed = 0;

  std::size_t resolved_cp_rank() const { return cp_rank ? cp_rank : k; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["kind"] = to_string(kind);
    j["k"] = k;
    j["cp_rank"] = cp_rank;
    j["tucker_ranks"] = tucker_ranks;
    j["max_iters"] = max_iters;
    j["tol"] = tol;
    j["seed"] = seed;
    return j;
  }

  static DecompConfig from_json(const nlohmann::json& j) {
    DecompConfig c;
    c.kind = parse_decomp_kind(j.value("kind", std::string("svd")));
    c.k = j.value("k", std::size_t{20});
    c.cp_rank = j.value("cp_rank", std::size_t{0});
    c.tucker_ranks = j.value("tucker_ranks", std::vector<std::size_t>{});
    c.max_iters = j.value("max_iters", std::size_t{100});
    c.tol = j.value("tol", 1e-6);
    c.seed = j.value("seed", std::uint64_t{0});
    return c;
  }
};

struct FeatureProvenance {
  std::string group_id;
  DecompKind kind = DecompKind::svd;
  std::size_t ngram_order = 2;
  std::size_t group_size = 1;
};

struct FeatureVector {
  std::vector<double> values;  // length k after crop/pad
  int label = 0;               // 1 = hallucinated
  FeatureProvenance provenance;
};

namespace detail {

// Internal seed for the Lanczos start vector; svd_singular_values takes no
// seed because exact spectra are seed-independent, but the iteration needs a
// deterministic start.
inline constexpr std::uint64_t kSvdLanczosSeed = 0x53564453ull;

/// Row-compacted view of a SparseMatrix: only rows and columns that actually
/// hold a nonzero take part in the spectral work. Dropped all-zero rows and
/// columns contribute nothing to nonzero singular values.
struct CompactedMatrix {
  std::vector<std::uint32_t> row_map;  // compact row -> physical row
  std::vector<std::vector<std::pair<std::uint32_t, double>>> cols;  // compact rows

  std::size_t nrows() const { return row_map.size(); }
  std::size_t ncols() const { return cols.size(); }
};

inline CompactedMatrix compact(const SparseMatrix& m) {
  std::vector<char> seen(m.rows(), 0);
  for (const auto& c : m.stored_columns())
    for (const auto& [r, v] : c.cells) seen[r] = 1;
  CompactedMatrix out;
  std::vector<std::uint32_t> phys_to_compact(m.rows(), 0);
  for (std::uint32_t r = 0; r < m.rows(); ++r)
    if (seen[r]) {
      phys_to_compact[r] = static_cast<std::uint32_t>(out.row_map.size());
      out.row_map.push_back(r);
    }
  out.cols.reserve(m.stored_col_count());
  for (const auto& c : m.stored_columns()) {
    std::vector<std::pair<std::uint32_t, double>> cells;
    cells.reserve(c.cells.size());
    for (const auto& [r, v] : c.cells) cells.emplace_back(phys_to_compact[r], v);
    out.cols.push_back(std::move(cells));
  }
  return out;
}

/// Gram of the row side: G = A Aᵀ over compact rows.
inline la::Matrix row_gram(const CompactedMatrix& m) {
  la::Matrix g(m.nrows(), m.nrows());
  for (const auto& col : m.cols)
    for (const auto& [ra, va] : col)
      for (const auto& [rb, vb] : col) g(ra, rb) += va * vb;
  return g;
}

/// Gram of the (stored) column side: G = Ãᵀ Ã.
inline la::Matrix col_gram(const CompactedMatrix& m) {
  std::size_t nc = m.ncols();
  la::Matrix g(nc, nc);
  for (std::size_t a = 0; a < nc; ++a) {
    for (std::size_t b = a; b < nc; ++b) {
      const auto& ca = m.cols[a];
      const auto& cb = m.cols[b];
      double dot = 0.0;
      std::size_t i = 0, j = 0;
      while (i < ca.size() && j < cb.size()) {
        if (ca[i].first < cb[j].first) ++i;
        else if (cb[j].first < ca[i].first) ++j;
        else dot += ca[i++].second * cb[j++].second;
      }
      g(a, b) = g(b, a) = dot;
    }
  }
  return g;
}

struct SpectralResult {
  std::vector<double> values;   // eigenvalues of the Gram, non-increasing
  la::Matrix vectors;           // eigenvectors in the compact small-side space
  bool row_side = false;        // true when the Gram was over compact rows
};

inline constexpr std::size_t kDenseGramLimit = 256;

inline SpectralResult gram_eigs(const CompactedMatrix& m, std::size_t top) {
  SpectralResult out;
  out.row_side = m.nrows() <= m.ncols();
  std::size_t side = out.row_side ? m.nrows() : m.ncols();
  if (side == 0) return out;

  if (side <= kDenseGramLimit) {
    la::Matrix g = out.row_side ? row_gram(m) : col_gram(m);
    la::EighResult eig = la::jacobi_eigh(g);
    std::size_t keep = std::min(top, side);
    out.values.assign(eig.values.begin(), eig.values.begin() + keep);
    out.vectors = la::Matrix(side, keep);
    for (std::size_t j = 0; j < keep; ++j)
      for (std::size_t i = 0; i < side; ++i) out.vectors(i, j) = eig.vectors(i, j);
    return out;
  }

  la::LinearOp op;
  if (out.row_side) {
    op = [&m](const std::vector<double>& x, std::vector<double>& y) {
      y.assign(x.size(), 0.0);
      for (const auto& col : m.cols) {
        double t = 0.0;
        for (const auto& [r, v] : col) t += v * x[r];
        for (const auto& [r, v] : col) y[r] += v * t;
      }
    };
  } else {
    op = [&m](const std::vector<double>& x, std::vector<double>& y) {
      std::vector<double> z(m.nrows(), 0.0);
      for (std::size_t j = 0; j < m.ncols(); ++j)
        for (const auto& [r, v] : m.cols[j]) z[r] += v * x[j];
      y.assign(x.size(), 0.0);
      for (std::size_t j = 0; j < m.ncols(); ++j) {
        double t = 0.0;
        for (const auto& [r, v] : m.cols[j]) t += v * z[r];
        y[j] = t;
      }
    };
  }
  la::LanczosResult lr =
      la::lanczos_topk(op, side, std::min(top, side), kSvdLanczosSeed, 1e-10);
  out.values = lr.values;
  out.vectors = lr.vectors;
  return out;
}

}  // namespace detail

struct SvdResult {
  std::vector<double> values;  // singular values, non-increasing
  la::Matrix left;             // physical-row left singular vectors, one column each
};

/// Top singular values and left singular vectors. Values below a 1e-12
/// relative rank cutoff are dropped; an all-zero matrix yields empty results.
inline SvdResult svd_topk(const SparseMatrix& m, std::size_t top) {
  SvdResult out;
  out.left = la::Matrix(m.rows(), 0);
  if (top == 0 || m.nnz() == 0) return out;
  detail::CompactedMatrix cm = detail::compact(m);
  detail::SpectralResult sr = detail::gram_eigs(cm, top);
  if (sr.values.empty()) return out;

  std::vector<double> sigma;
  for (double lam : sr.values) sigma.push_back(std::sqrt(std::max(lam, 0.0)));
  double s1 = sigma.empty() ? 0.0 : sigma.front();
  std::size_t keep = 0;
  while (keep < sigma.size() && sigma[keep] > s1 * 1e-12 && sigma[keep] > 0.0) ++keep;
  if (keep == 0) return out;
  sigma.resize(keep);

  out.left = la::Matrix(m.rows(), keep);
  if (sr.row_side) {
    for (std::size_t j = 0; j < keep; ++j)
      for (std::size_t i = 0; i < cm.nrows(); ++i)
        out.left(cm.row_map[i], j) = sr.vectors(i, j);
  } else {
    // u = Ã w / σ lifts right singular vectors to the row space.
    for (std::size_t j = 0; j < keep; ++j) {
      std::vector<double> u(cm.nrows(), 0.0);
      for (std::size_t c = 0; c < cm.ncols(); ++c) {
        double w = sr.vectors(c, j);
        if (w == 0.0) continue;
        for (const auto& [r, v] : cm.cols[c]) u[r] += v * w;
      }
      for (std::size_t i = 0; i < cm.nrows(); ++i)
        out.left(cm.row_map[i], j) = u[i] / sigma[j];
    }
  }
  la::detail::canonicalize_columns(out.left);
  out.values = std::move(sigma);
  return out;
}

/// min(top, rank) largest singular values, non-increasing. Empty for an
/// all-zero matrix.
inline std::vector<double> svd_singular_values(const SparseMatrix& m, std::size_t top) {
  if (top < 1) throw std::invalid_argument("svd: top must be >= 1");
  return svd_topk(m, top).values;
}

namespace detail {

inline void core_accumulate(const std::vector<la::Matrix>& factors,
                            const IndexTuple& idx, double value, std::size_t mode,
                            double partial, std::size_t flat_base,
                            const std::vector<std::size_t>& strides,
                            std::vector<double>& core) {
  const la::Matrix& u = factors[mode];
  std::size_t row = idx[mode] - 1;
  bool last = (mode + 1 == factors.size());
  for (std::size_t j = 0; j < u.cols; ++j) {
    double p = partial * u(row, j);
    if (p == 0.0) continue;
    std::size_t base = flat_base + j * strides[mode];
    if (last)
      core[base] += p * value;
    else
      core_accumulate(factors, idx, value, mode + 1, p, base, strides, core);
  }
}

}  // namespace detail

/// Higher-order SVD: per-mode truncated SVD of the unfoldings gives the factor
/// matrices, the core is the tensor contracted with their transposes. Returns
/// the cfg.k largest |core| entries, descending, as absolute values.
inline std::vector<double> tucker_features(const SparseCountTensor& t,
                                           const DecompConfig& cfg) {
  if (t.nnz() == 0) return {};
  const std::size_t order = t.order();
  std::vector<std::size_t> ranks = cfg.tucker_ranks;
  if (ranks.empty()) ranks.assign(order, std::min<std::size_t>(t.dim(), 10));
  if (ranks.size() != order)
    throw std::invalid_argument("tucker_ranks arity does not match tensor order");
  for (std::size_t r : ranks)
    if (r < 1 || r > t.dim())
      throw std::invalid_argument("tucker rank outside 1..dim");

  std::vector<la::Matrix> factors;
  factors.reserve(order);
  for (std::size_t m = 1; m <= order; ++m) {
    SvdResult s = svd_topk(unfold(t, m), ranks[m - 1]);
    if (s.values.empty()) return {};
    factors.push_back(std::move(s.left));
  }

  std::vector<std::size_t> strides(order);
  std::size_t total = 1;
  for (std::size_t m = 0; m < order; ++m) {
    strides[m] = total;
    total *= factors[m].cols;
  }
  std::vector<double> core(total, 0.0);
  for (const auto& e : t.entries())
    detail::core_accumulate(factors, e.indices, e.value, 0, 1.0, 0, strides, core);

  for (auto& v : core) v = std::fabs(v);
  std::sort(core.begin(), core.end(), std::greater<double>());
  if (core.size() > cfg.k) core.resize(cfg.k);
  return core;
}

struct CpResult {
  std::vector<double> lambda;     // component weights, as updated last
  std::vector<double> fit_trace;  // fit = 1 - relative error, one per sweep
};

/// CP decomposition by alternating least squares with column-normalized
/// factors and an explicit weight vector. Deterministic for a fixed seed.
inline CpResult cp_als(const SparseCountTensor& t, const DecompConfig& cfg) {
  if (t.order() < 3) throw std::invalid_argument("cp requires tensor order >= 3");
  CpResult out;
  if (t.nnz() == 0) return out;
  const std::size_t order = t.order();
  const std::size_t dim = t.dim();
  const std::size_t rank = cfg.resolved_cp_rank();
  if (rank < 1) throw std::invalid_argument("cp rank must be >= 1");
  const double ridge = 1e-10;

  Rng rng(cfg.seed);
  std::vector<la::Matrix> u(order);
  for (std::size_t m = 0; m < order; ++m) {
    u[m] = la::Matrix(dim, rank);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < rank; ++j) u[m](i, j) = rng.uniform(-1.0, 1.0);
    for (std::size_t j = 0; j < rank; ++j) {
      double nrm = 0.0;
      for (std::size_t i = 0; i < dim; ++i) nrm += u[m](i, j) * u[m](i, j);
      nrm = std::sqrt(nrm);
      if (nrm > 0.0)
        for (std::size_t i = 0; i < dim; ++i) u[m](i, j) /= nrm;
    }
  }

  auto gram = [&](std::size_t m) {
    la::Matrix g(rank, rank);
    for (std::size_t a = 0; a < rank; ++a)
      for (std::size_t b = 0; b < rank; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < dim; ++i) s += u[m](i, a) * u[m](i, b);
        g(a, b) = s;
      }
    return g;
  };
  std::vector<la::Matrix> grams(order);
  for (std::size_t m = 0; m < order; ++m) grams[m] = gram(m);

  std::vector<double> lambda(rank, 1.0);
  const double x_norm2 = t.frobenius_norm() * t.frobenius_norm();
  double prev_fit = -1.0;

  for (std::size_t sweep = 0; sweep < cfg.max_iters; ++sweep) {
    for (std::size_t m = 0; m < order; ++m) {
      // MTTKRP straight off the nonzeros.
      la::Matrix mk(dim, rank);
      for (const auto& e : t.entries()) {
        std::size_t row = e.indices[m] - 1;
        for (std::size_t j = 0; j < rank; ++j) {
          double p = e.value;
          for (std::size_t p2 = 0; p2 < order; ++p2) {
            if (p2 == m) continue;
            p *= u[p2](e.indices[p2] - 1, j);
            if (p == 0.0) break;
          }
          mk(row, j) += p;
        }
      }
      la::Matrix v(rank, rank);
      for (std::size_t a = 0; a < rank; ++a)
        for (std::size_t b = 0; b < rank; ++b) {
          double h = 1.0;
          for (std::size_t p2 = 0; p2 < order; ++p2)
            if (p2 != m) h *= grams[p2](a, b);
          v(a, b) = h;
        }
      for (std::size_t a = 0; a < rank; ++a) v(a, a) += ridge;

      la::Cholesky chol(v);
      std::vector<double> rhs(rank);
      for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < rank; ++j) rhs[j] = mk(i, j);
        std::vector<double> x = chol.solve(rhs);
        for (std::size_t j = 0; j < rank; ++j) u[m](i, j) = x[j];
      }
      for (std::size_t j = 0; j < rank; ++j) {
        double nrm = 0.0;
        for (std::size_t i = 0; i < dim; ++i) nrm += u[m](i, j) * u[m](i, j);
        nrm = std::sqrt(nrm);
        lambda[j] = nrm;
        if (nrm > 0.0)
          for (std::size_t i = 0; i < dim; ++i) u[m](i, j) /= nrm;
      }
      grams[m] = gram(m);
    }

    // fit = 1 - ||X - X̂|| / ||X|| without materializing X̂.
    double inner = 0.0;
    for (const auto& e : t.entries()) {
      double s = 0.0;
      for (std::size_t j = 0; j < rank; ++j) {
        double p = lambda[j];
        for (std::size_t m = 0; m < order; ++m) p *= u[m](e.indices[m] - 1, j);
        s += p;
      }
      inner += e.value * s;
    }
    double model_norm2 = 0.0;
    for (std::size_t a = 0; a < rank; ++a)
      for (std::size_t b = 0; b < rank; ++b) {
        double h = lambda[a] * lambda[b];
        for (std::size_t m = 0; m < order; ++m) h *= grams[m](a, b);
        model_norm2 += h;
      }
    double err2 = std::max(x_norm2 - 2.0 * inner + model_norm2, 0.0);
    double fit = 1.0 - std::sqrt(err2 / x_norm2);
    out.fit_trace.push_back(fit);
    if (prev_fit >= 0.0 && std::fabs(fit - prev_fit) < cfg.tol) break;
    prev_fit = fit;
  }

  out.lambda = lambda;
  return out;
}

/// CP weight features: λ sorted non-increasing by absolute value.
inline std::vector<double> cp_features(const SparseCountTensor& t,
                                       const DecompConfig& cfg) {
  CpResult r = cp_als(t, cfg);
  std::sort(r.lambda.begin(), r.lambda.end(),
            [](double a, double b) { return std::fabs(a) > std::fabs(b); });
  return r.lambda;
}

/// Concatenate segments verbatim in the order given (producers emit them
/// already ordered), then crop to k or right-pad with zeros.
inline FeatureVector assemble_feature_vector(std::vector<std::vector<double>> segments,
                                             std::size_t k, int label,
                                             FeatureProvenance prov = {}) {
  if (k < 1) throw std::invalid_argument("feature length must be >= 1");
  FeatureVector fv;
  fv.label = label;
  fv.provenance = std::move(prov);
  for (auto& seg : segments)
    fv.values.insert(fv.values.end(), seg.begin(), seg.end());
  if (fv.values.size() > k) fv.values.resize(k);
  while (fv.values.size() < k) fv.values.push_back(0.0);
  return fv;
}

}  // namespace ngt
