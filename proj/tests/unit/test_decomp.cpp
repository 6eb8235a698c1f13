#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "ngt/decomp.hpp"
#include "ngt/prng.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using ngt::DecompConfig;
using ngt::DecompKind;

namespace {

std::vector<std::vector<double>> random_dense(std::size_t rows, std::size_t cols,
                                              std::uint64_t seed) {
  ngt::Rng rng(seed);
  std::vector<std::vector<double>> m(rows, std::vector<double>(cols));
  for (auto& row : m)
    for (auto& v : row) v = rng.uniform(-2.0, 2.0);
  return m;
}

// Rank-1 order-3 tensor 7 * (a ∘ b ∘ c) with unit-norm a, b, c.
ngt::SparseCountTensor rank1_norm7() {
  std::vector<double> a{1, 2, 3}, b{2, 1, 1}, c{1, 1, 2};
  for (auto* v : {&a, &b, &c}) {
    double n = 0.0;
    for (double x : *v) n += x * x;
    n = std::sqrt(n);
    for (double& x : *v) x /= n;
  }
  std::vector<std::pair<ngt::IndexTuple, double>> entries;
  for (std::uint32_t i = 1; i <= 3; ++i)
    for (std::uint32_t j = 1; j <= 3; ++j)
      for (std::uint32_t l = 1; l <= 3; ++l)
        entries.push_back({{i, j, l}, 7.0 * a[i - 1] * b[j - 1] * c[l - 1]});
  return synth::tensor_from_entries(3, 3, entries);
}

}  // namespace

TEST_CASE("svd_singular_values on diagonal and identity matrices") {
  auto diag = synth::sparse_from_dense({{3, 0}, {0, 1}});
  auto vals = ngt::svd_singular_values(diag, 5);
  REQUIRE(vals.size() == 2);
  CHECK(vals[0] == Catch::Approx(3.0).margin(1e-12));
  CHECK(vals[1] == Catch::Approx(1.0).margin(1e-12));

  auto ident = synth::sparse_from_dense({{1, 0}, {0, 1}});
  vals = ngt::svd_singular_values(ident, 2);
  REQUIRE(vals.size() == 2);
  CHECK(vals[0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(vals[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("svd_singular_values matches the gram eigen-oracle on random 20x20 matrices") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto dense = random_dense(20, 20, 1000 + seed);
    auto m = synth::sparse_from_dense(dense);
    auto vals = ngt::svd_singular_values(m, 20);
    auto expect = oracle::singular_values_via_gram(oracle::to_dense(m));
    REQUIRE(vals.size() <= expect.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
      double scale = std::max(expect[0], 1.0);
      CHECK(std::fabs(vals[i] - expect[i]) <= 1e-6 * scale);
    }
  }
}

TEST_CASE("svd scale equivariance") {
  auto dense = random_dense(12, 15, 7);
  auto base = ngt::svd_singular_values(synth::sparse_from_dense(dense), 12);
  for (double c : {2.0, 0.25, 10.0}) {
    auto scaled = dense;
    for (auto& row : scaled)
      for (auto& v : row) v *= c;
    auto vals = ngt::svd_singular_values(synth::sparse_from_dense(scaled), 12);
    REQUIRE(vals.size() == base.size());
    for (std::size_t i = 0; i < vals.size(); ++i)
      CHECK(std::fabs(vals[i] - c * base[i]) <= 1e-12 * c * base[0]);
  }
}

TEST_CASE("svd edge cases: zero matrix, top validation, truncation") {
  auto zero = synth::sparse_from_dense({{0, 0}, {0, 0}});
  CHECK(ngt::svd_singular_values(zero, 3).empty());
  CHECK_THROWS_AS(ngt::svd_singular_values(zero, 0), std::invalid_argument);

  auto dense = random_dense(8, 8, 3);
  auto all = ngt::svd_singular_values(synth::sparse_from_dense(dense), 8);
  auto top3 = ngt::svd_singular_values(synth::sparse_from_dense(dense), 3);
  REQUIRE(top3.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(top3[i] == Catch::Approx(all[i]).margin(1e-9));
}

TEST_CASE("svd_topk left vectors are orthonormal and span correctly") {
  auto dense = random_dense(10, 14, 21);
  auto m = synth::sparse_from_dense(dense);
  auto r = ngt::svd_topk(m, 6);
  REQUIRE(r.values.size() == 6);
  Eigen::MatrixXd a = oracle::to_dense(m);
  for (std::size_t p = 0; p < 6; ++p) {
    for (std::size_t q = 0; q < 6; ++q) {
      double dot = 0.0;
      for (std::size_t i = 0; i < 10; ++i) dot += r.left(i, p) * r.left(i, q);
      CHECK(dot == Catch::Approx(p == q ? 1.0 : 0.0).margin(1e-8));
    }
    // ||Aᵀ u_p|| = σ_p for left singular vectors.
    Eigen::VectorXd u(10);
    for (std::size_t i = 0; i < 10; ++i) u(static_cast<Eigen::Index>(i)) = r.left(i, p);
    CHECK((a.transpose() * u).norm() == Catch::Approx(r.values[p]).margin(1e-8));
  }
}

TEST_CASE("svd handles a tall single-column matrix through the lifting path") {
  // Entries confined to one stored column force the column-side gram.
  std::vector<std::pair<ngt::IndexTuple, double>> entries;
  double norm2 = 0.0;
  for (std::uint32_t i = 1; i <= 6; ++i) {
    entries.push_back({{i, 1}, static_cast<double>(i)});
    norm2 += static_cast<double>(i) * i;
  }
  auto t = synth::tensor_from_entries(2, 6, entries);
  auto r = ngt::svd_topk(ngt::unfold(t, 1), 3);
  REQUIRE(r.values.size() == 1);
  double sigma = std::sqrt(norm2);
  CHECK(r.values[0] == Catch::Approx(sigma).margin(1e-10));
  for (std::uint32_t i = 0; i < 6; ++i)
    CHECK(r.left(i, 0) == Catch::Approx((i + 1) / sigma).margin(1e-10));
}

TEST_CASE("svd iterative path matches the known spectrum beyond the dense limit") {
  // Diagonal tensor of side 300: the gram side exceeds the dense threshold.
  std::vector<std::pair<ngt::IndexTuple, double>> entries;
  for (std::uint32_t i = 1; i <= 300; ++i)
    entries.push_back({{i, i}, static_cast<double>(301 - i)});
  auto t = synth::tensor_from_entries(2, 300, entries);
  auto vals = ngt::svd_singular_values(ngt::unfold(t, 1), 6);
  REQUIRE(vals.size() == 6);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(vals[i] == Catch::Approx(300.0 - static_cast<double>(i)).epsilon(1e-8));
}

TEST_CASE("tucker_features on an order-2 tensor with full ranks equals the svd spectrum") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto t = synth::random_tensor(2, 8, 30, 500 + seed);
    auto svd = ngt::svd_singular_values(ngt::unfold(t, 1), 8);
    DecompConfig cfg;
    cfg.kind = DecompKind::tucker;
    cfg.k = 8;
    cfg.tucker_ranks = {8, 8};
    auto tuck = ngt::tucker_features(t, cfg);
    REQUIRE(tuck.size() >= svd.size());
    for (std::size_t i = 0; i < svd.size(); ++i)
      CHECK(std::fabs(tuck[i] - svd[i]) <= 1e-6 * std::max(svd[0], 1.0));
    for (std::size_t i = svd.size(); i < tuck.size(); ++i)
      CHECK(tuck[i] <= 1e-8 * std::max(svd[0], 1.0));
  }
}

TEST_CASE("tucker_features recovers the norm of a rank-1 order-3 tensor") {
  auto t = rank1_norm7();
  CHECK(t.frobenius_norm() == Catch::Approx(7.0).margin(1e-12));
  DecompConfig cfg;
  cfg.kind = DecompKind::tucker;
  cfg.k = 5;
  auto feats = ngt::tucker_features(t, cfg);
  REQUIRE(!feats.empty());
  CHECK(feats[0] == Catch::Approx(7.0).margin(1e-6));
  for (std::size_t i = 1; i < feats.size(); ++i) CHECK(feats[i] <= 1e-8);
}

TEST_CASE("tucker_features validates ranks and handles the zero tensor") {
  auto t = synth::random_tensor(3, 4, 10, 9);
  DecompConfig cfg;
  cfg.kind = DecompKind::tucker;
  cfg.tucker_ranks = {2, 2};
  CHECK_THROWS_AS(ngt::tucker_features(t, cfg), std::invalid_argument);
  cfg.tucker_ranks = {2, 2, 9};
  CHECK_THROWS_AS(ngt::tucker_features(t, cfg), std::invalid_argument);

  ngt::SparseCountTensor zero(3, 4, {}, ngt::WeightVariant::frequency);
  DecompConfig z;
  z.kind = DecompKind::tucker;
  CHECK(ngt::tucker_features(zero, z).empty());
}

TEST_CASE("cp_features recovers a rank-1 tensor weight") {
  auto t = rank1_norm7();
  DecompConfig cfg;
  cfg.kind = DecompKind::cp;
  cfg.cp_rank = 1;
  cfg.seed = 11;
  auto feats = ngt::cp_features(t, cfg);
  REQUIRE(feats.size() == 1);
  CHECK(std::fabs(feats[0] - 7.0) <= 1e-4 * 7.0);
}

TEST_CASE("cp_als fit trace is non-decreasing within slack") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto t = synth::random_tensor(3, 10, 120, 900 + seed);
    DecompConfig cfg;
    cfg.kind = DecompKind::cp;
    cfg.cp_rank = 5;
    cfg.seed = seed;
    auto r = ngt::cp_als(t, cfg);
    REQUIRE(!r.fit_trace.empty());
    for (std::size_t i = 0; i + 1 < r.fit_trace.size(); ++i)
      CHECK(r.fit_trace[i + 1] >= r.fit_trace[i] - 1e-10);
  }
}

TEST_CASE("cp_als is deterministic for a fixed seed and rejects order 2") {
  auto t = synth::random_tensor(3, 6, 40, 77);
  DecompConfig cfg;
  cfg.kind = DecompKind::cp;
  cfg.cp_rank = 3;
  cfg.seed = 5;
  auto a = ngt::cp_als(t, cfg);
  auto b = ngt::cp_als(t, cfg);
  REQUIRE(a.lambda.size() == b.lambda.size());
  for (std::size_t i = 0; i < a.lambda.size(); ++i) CHECK(a.lambda[i] == b.lambda[i]);
  REQUIRE(a.fit_trace.size() == b.fit_trace.size());

  auto mat = synth::random_tensor(2, 6, 10, 3);
  CHECK_THROWS_AS(ngt::cp_als(mat, cfg), std::invalid_argument);

  ngt::SparseCountTensor zero(3, 4, {}, ngt::WeightVariant::frequency);
  CHECK(ngt::cp_features(zero, cfg).empty());
}

TEST_CASE("cp_features are sorted non-increasing by magnitude") {
  auto t = synth::random_tensor(3, 8, 80, 13);
  DecompConfig cfg;
  cfg.kind = DecompKind::cp;
  cfg.cp_rank = 4;
  cfg.seed = 2;
  auto feats = ngt::cp_features(t, cfg);
  REQUIRE(feats.size() == 4);
  for (std::size_t i = 0; i + 1 < feats.size(); ++i)
    CHECK(std::fabs(feats[i]) >= std::fabs(feats[i + 1]));
}

TEST_CASE("assemble_feature_vector concatenates, crops, and pads") {
  auto a = ngt::assemble_feature_vector({{5, 3}, {4, 2}}, 4, 1);
  CHECK(a.values == std::vector<double>{5, 3, 4, 2});
  CHECK(a.label == 1);

  auto b = ngt::assemble_feature_vector({{5, 3, 4, 2}}, 3, 0);
  CHECK(b.values == std::vector<double>{5, 3, 4});

  auto c = ngt::assemble_feature_vector({{5, 3}}, 4, 0);
  CHECK(c.values == std::vector<double>{5, 3, 0, 0});

  // Segments pass through verbatim; ordering is the producer's contract.
  auto d = ngt::assemble_feature_vector({{1, 9, 4}}, 3, 1);
  CHECK(d.values == std::vector<double>{1, 9, 4});

  CHECK_THROWS_AS(ngt::assemble_feature_vector({{1.0}}, 0, 0), std::invalid_argument);
}

TEST_CASE("decomp config json round trip and kind parsing") {
  DecompConfig cfg;
  cfg.kind = DecompKind::cp;
  cfg.k = 32;
  cfg.cp_rank = 6;
  cfg.tucker_ranks = {4, 4, 4};
  cfg.max_iters = 55;
  cfg.tol = 1e-8;
  cfg.seed = 99;
  auto back = DecompConfig::from_json(cfg.to_json());
  CHECK(back.kind == cfg.kind);
  CHECK(back.k == cfg.k);
  CHECK(back.cp_rank == cfg.cp_rank);
  CHECK(back.tucker_ranks == cfg.tucker_ranks);
  CHECK(back.max_iters == cfg.max_iters);
  CHECK(back.tol == cfg.tol);
  CHECK(back.seed == cfg.seed);

  CHECK(ngt::parse_decomp_kind("cpd") == DecompKind::cp);
  CHECK(ngt::parse_decomp_kind("svd") == DecompKind::svd);
  CHECK_THROWS_AS(ngt::parse_decomp_kind("qr"), std::invalid_argument);

  DecompConfig d;
  d.k = 12;
  CHECK(d.resolved_cp_rank() == 12);
  d.cp_rank = 3;
  CHECK(d.resolved_cp_rank() == 3);
}
