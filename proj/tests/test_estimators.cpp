#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>

#include "sdr/estimators.hpp"
#include "sdr/rng.hpp"

using namespace sdr;
using Catch::Approx;

namespace {

/// Brute-force pair enumeration, the independent oracle for contour_matrix.
std::pair<Matrix, long> enumerate_contour(const Matrix& x, const Vector& y,
                                          double c) {
  const Index n = x.rows();
  Matrix h = Matrix::Zero(x.cols(), x.cols());
  long count = 0;
  for (Index j = 1; j < n; ++j)
    for (Index i = 0; i < j; ++i)
      if (std::abs(y[j] - y[i]) <= c) {
        const Vector d = x.row(j) - x.row(i);
        h += d * d.transpose();
        ++count;
      }
  h /= 0.5 * double(n) * double(n - 1);
  return {h, count};
}

double rho_to_span(const FitResult& fit, const Matrix& span_cols) {
  return subspace_distance(fit.basis, orthonormalize(span_cols));
}

Matrix unit_span(Index p, std::initializer_list<Index> axes) {
  Matrix m = Matrix::Zero(p, static_cast<Index>(axes.size()));
  Index j = 0;
  for (Index a : axes) m(a, j++) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("contour_matrix hand example with three points") {
  Matrix x(3, 2);
  x << 0, 0, 1, 0, 0, 2;
  Vector y(3);
  y << 0, 0.1, 5;
  ContourCut cut;
  cut.value = 0.5;
  const auto [h, pairs] = contour_matrix(x, y, cut);
  REQUIRE(pairs == 1);
  REQUIRE(h.mat()(0, 0) == 1.0 / 3.0);
  REQUIRE(h.mat()(0, 1) == 0.0);
  REQUIRE(h.mat()(1, 0) == 0.0);
  REQUIRE(h.mat()(1, 1) == 0.0);
}

TEST_CASE("contour_matrix equals pair enumeration") {
  SECTION("constant response includes every pair") {
    Matrix x(4, 2);
    x << 0, 1, 2, -1, 1, 3, -2, 0.5;
    const Vector y = Vector::Constant(4, 7.0);
    ContourCut cut;
    cut.value = 1.0;
    const auto [h, pairs] = contour_matrix(x, y, cut);
    const auto [oracle, oracle_pairs] = enumerate_contour(x, y, 1.0);
    REQUIRE(pairs == 6);
    REQUIRE(pairs == oracle_pairs);
    REQUIRE((h.mat() - oracle).cwiseAbs().maxCoeff() < 1e-12);
    // All-pairs scatter doubles the unbiased covariance.
    const Matrix centered = x.rowwise() - x.colwise().mean();
    const Matrix cov_unbiased =
        centered.transpose() * centered / double(x.rows() - 1);
    REQUIRE((h.mat() - 2.0 * cov_unbiased).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("random data, several cuts") {
    Rng rng(21);
    const Matrix x = rng.normal_matrix(60, 3);
    const Vector y = rng.normal_vector(60);
    for (double c : {0.05, 0.3, 1.0, 5.0}) {
      ContourCut cut;
      cut.value = c;
      const auto [h, pairs] = contour_matrix(x, y, cut);
      const auto [oracle, oracle_pairs] = enumerate_contour(x, y, c);
      REQUIRE(pairs == oracle_pairs);
      REQUIRE((h.mat() - oracle).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SECTION("pairs included grows with the cut") {
    Rng rng(22);
    const Matrix x = rng.normal_matrix(80, 2);
    const Vector y = rng.normal_vector(80);
    long last = 0;
    for (double c : {0.1, 0.2, 0.5, 1.0, 2.0, 10.0}) {
      ContourCut cut;
      cut.value = c;
      const auto pairs = contour_matrix(x, y, cut).second;
      REQUIRE(pairs >= last);
      last = pairs;
    }
    REQUIRE(last == 80L * 79L / 2L);
  }
}

TEST_CASE("contour_matrix pair-fraction mode") {
  Rng rng(23);
  const Index n = 150;
  const Matrix x = rng.normal_matrix(n, 2);
  const Vector y = rng.normal_vector(n);

  // Brute-force k-th order statistic over all pair distances.
  std::vector<double> dist;
  std::vector<double> ys(y.data(), y.data() + n);
  std::sort(ys.begin(), ys.end());
  for (Index j = 1; j < n; ++j)
    for (Index i = 0; i < j; ++i) dist.push_back(ys[j] - ys[i]);
  std::sort(dist.begin(), dist.end());

  for (double f : {0.05, 0.12, 0.5, 0.9}) {
    const auto k = static_cast<long long>(
        std::ceil(f * 0.5 * double(n) * double(n - 1)));
    const double expected_cut = dist[static_cast<size_t>(k - 1)];
    ContourCut cut;
    cut.fraction = f;
    const auto pairs = contour_matrix(x, y, cut).second;
    REQUIRE(pairs >= k);

    ContourCut exact;
    exact.value = expected_cut;
    REQUIRE(contour_matrix(x, y, exact).second == pairs);
    REQUIRE(detail::kth_pair_distance(ys, k) == expected_cut);
  }
}

TEST_CASE("contour_matrix error paths") {
  Matrix x(3, 1);
  x << 0, 1, 2;
  Vector y(3);
  y << 0, 100, 200;
  ContourCut cut;
  cut.value = 0.5;
  REQUIRE_THROWS_AS(contour_matrix(x, y, cut), NoPairsWithinCut);
  cut.value = -1.0;
  REQUIRE_THROWS_AS(contour_matrix(x, y, cut), InvalidInput);
  ContourCut both;
  SdrConfig bad = SdrConfig::cr(1, 0.5);
  bad.pair_fraction = 0.1;
  REQUIRE_THROWS_AS(ContourCut::from_config(bad), InvalidInput);
}

TEST_CASE("contour_matrix is independent of the thread count") {
  Rng rng(24);
  const Matrix x = rng.normal_matrix(500, 4);
  const Vector y = rng.normal_vector(500);
  ContourCut cut;
  cut.value = 0.4;

  setenv("SDR_THREADS", "1", 1);
  const Matrix serial = contour_matrix(x, y, cut).first.mat();
  setenv("SDR_THREADS", "5", 1);
  const Matrix threaded = contour_matrix(x, y, cut).first.mat();
  unsetenv("SDR_THREADS");
  REQUIRE((serial - threaded).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sir oracles") {
  SECTION("constant response carries no slice signal") {
    Rng rng(25);
    const Index n = 5000;
    const Matrix x = rng.normal_matrix(n, 2);
    const Vector y = Vector::Zero(n);
    const FitResult res = sir(x, y, SdrConfig::sir(1, 5));
    REQUIRE(res.eigenvalues[0] < 0.1);
  }
  SECTION("monotone single index, two slices") {
    Rng rng(26);
    const Index n = 5000;
    const Matrix x = rng.normal_matrix(n, 2);
    const Vector y = x.col(0);
    const FitResult res = sir(x, y, SdrConfig::sir(1, 2));
    REQUIRE(rho_to_span(res, unit_span(2, {0})) < 0.05);
  }
  SECTION("row permutation leaves the basis unchanged") {
    Rng rng(27);
    const Index n = 97;
    const Matrix x = rng.normal_matrix(n, 3);
    const Vector y = (x.col(0).array() * x.col(0).array()).matrix();
    const FitResult base = sir(x, y, SdrConfig::sir(2, 4));

    std::vector<Index> perm(n);
    std::iota(perm.begin(), perm.end(), Index{0});
    std::mt19937_64 shuffler(42);
    std::shuffle(perm.begin(), perm.end(), shuffler);
    Matrix xp(n, 3);
    Vector yp(n);
    for (Index i = 0; i < n; ++i) {
      xp.row(i) = x.row(perm[static_cast<size_t>(i)]);
      yp[i] = y[perm[static_cast<size_t>(i)]];
    }
    const FitResult shuffled = sir(xp, yp, SdrConfig::sir(2, 4));
    REQUIRE((base.basis.columns() - shuffled.basis.columns())
                .cwiseAbs()
                .maxCoeff() < 1e-10);
  }
  SECTION("too few rows per slice") {
    Rng rng(28);
    const Matrix x = rng.normal_matrix(7, 2);
    const Vector y = rng.normal_vector(7);
    REQUIRE_THROWS_AS(sir(x, y, SdrConfig::sir(1, 4)), DegenerateSlicing);
  }
}

TEST_CASE("phd oracles") {
  SECTION("pure quadratic, response-based") {
    Rng rng(29);
    const Index n = 5000;
    const Matrix x = rng.normal_matrix(n, 2);
    const Vector y = (x.col(0).array().square() - 1.0).matrix();
    const FitResult res = phd(x, y, SdrConfig::phd(1));
    REQUIRE(rho_to_span(res, unit_span(2, {0})) < 0.05);
  }
  SECTION("linear regression functions vanish under the residual variant") {
    Rng rng(30);
    const Index n = 5000;
    const Matrix x = rng.normal_matrix(n, 3);
    const Vector y =
        (2.0 * x.col(0) - x.col(1) + 0.5 * rng.normal_vector(n)).eval();
    const FitResult res =
        phd(x, y, SdrConfig::phd(1, PhdVariant::residual_based));
    REQUIRE(std::abs(res.eigenvalues[0]) < 0.1);
  }
  SECTION("spectrum is reported signed, ordered by magnitude") {
    Rng rng(31);
    const Index n = 3000;
    const Matrix x = rng.normal_matrix(n, 3);
    const Vector y = (x.col(0).array().square() -
                      2.0 * x.col(1).array().square())
                         .matrix();
    const FitResult res = phd(x, y, SdrConfig::phd(2));
    REQUIRE(std::abs(res.eigenvalues[0]) >= std::abs(res.eigenvalues[1]));
    REQUIRE(std::abs(res.eigenvalues[1]) >= std::abs(res.eigenvalues[2]));
    // The stronger (negative) curvature belongs to the second coordinate.
    REQUIRE(res.eigenvalues[0] < 0.0);
  }
}

TEST_CASE("ols oracles") {
  SECTION("noisy single index") {
    Rng rng(32);
    const Index n = 5000;
    const Matrix x = rng.normal_matrix(n, 4);
    const Vector y = (x.col(0) + 0.25 * rng.normal_vector(n)).eval();
    const FitResult res = ols_direction(x, y);
    REQUIRE(rho_to_span(res, unit_span(4, {0})) < 0.02);
  }
  SECTION("exactly symmetric design degenerates") {
    // Antisymmetric pairs with an even response: the covariance is exactly 0.
    Matrix x(6, 2);
    x << 1, 0.5, -1, -0.5, 2, -1, -2, 1, 0.5, 2, -0.5, -2;
    const Vector y = (x.col(0).array().square()).matrix();
    REQUIRE_THROWS_AS(ols_direction(x, y), DegenerateDirection);
  }
  SECTION("strength flag is small under symmetric signal") {
    Rng rng(33);
    const Index n = 5000;
    const Matrix x = rng.normal_matrix(n, 2);
    const Vector y = (x.col(0).array().square()).matrix();
    const FitResult res = ols_direction(x, y);
    REQUIRE(res.meta.direction_strength < 0.1);
  }
  SECTION("anisotropic scaling still finds the exact index") {
    Rng rng(34);
    const Index n = 2000;
    Matrix x = rng.normal_matrix(n, 2);
    x.col(1) *= 2.0;
    const Vector y = x.col(1);
    const FitResult res = ols_direction(x, y);
    REQUIRE(rho_to_span(res, unit_span(2, {1})) < 1e-10);
  }
}

TEST_CASE("cr oracles") {
  SECTION("single index with faint noise") {
    Rng rng(35);
    const Index n = 2000;
    const Matrix x = rng.normal_matrix(n, 2);
    const Vector y = (x.col(0) + 0.01 * rng.normal_vector(n)).eval();
    const FitResult res = cr(x, y, SdrConfig::cr(1, 0.3));
    REQUIRE(rho_to_span(res, unit_span(2, {0})) < 0.05);
  }
  SECTION("independent response leaves the fitted plane unanchored") {
    Rng rng(36);
    double total = 0.0;
    const int reps = 15;
    for (int rep = 0; rep < reps; ++rep) {
      const Index n = 400;
      const Matrix x = rng.normal_matrix(n, 6);
      const Vector y = rng.normal_vector(n);
      const FitResult res = cr(x, y, SdrConfig::cr(2, 0.5));
      total += rho_to_span(res, unit_span(6, {0, 1}));
    }
    REQUIRE(total / reps > 0.5);
  }
  SECTION("selection uses the smallest eigenvalues") {
    Rng rng(37);
    const Index n = 1500;
    const Matrix x = rng.normal_matrix(n, 3);
    const Vector y = (x.col(2) + 0.01 * rng.normal_vector(n)).eval();
    const FitResult res = cr(x, y, SdrConfig::cr(1, 0.3));
    for (Index k = 1; k < res.eigenvalues.size(); ++k)
      REQUIRE(res.eigenvalues[k - 1] <= res.eigenvalues[k]);
    REQUIRE(rho_to_span(res, unit_span(3, {2})) < 0.05);
  }
}

TEST_CASE("cr and cr_factorized agree through random corrections") {
  Rng rng(38);
  for (int trial = 0; trial < 10; ++trial) {
    const Index p = 3 + trial % 3;
    const Index n = 120;
    const Matrix w = rng.normal_matrix(n, p);
    Vector y(n);
    for (Index i = 0; i < n; ++i)
      y[i] = w(i, 0) * w(i, 0) + w(i, 1) + 0.1 * rng.normal();

    Matrix a = rng.normal_matrix(p, p);
    a += 2.5 * Matrix::Identity(p, p);
    Matrix root = rng.normal_matrix(p, p);
    const SymMatrix s2(
        (root * root.transpose() + Matrix::Identity(p, p)).eval());
    CovEstimates est{Scheme::validation, (a * s2.mat()).eval(), s2,
                     std::nullopt, std::nullopt};

    const PrimarySample primary(y, w);
    const SdrConfig cfg = SdrConfig::cr(2, 0.5);
    const Adjustment adj = make_adjustment(est, sample_mean(w));
    const AdjustedSample adjusted = adjust(primary, adj);
    const FitResult direct = cr(adjusted.u, adjusted.y, cfg);
    const FitResult factorized = cr_factorized(primary, est, cfg);
    REQUIRE(subspace_distance(direct.basis, factorized.basis) < 1e-8);
    REQUIRE(direct.meta.pairs_included == factorized.meta.pairs_included);
  }

  SECTION("identity correction reproduces cr on the centered surrogate") {
    const Index p = 3, n = 200;
    const Matrix w = rng.normal_matrix(n, p);
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = w(i, 0) + 0.05 * rng.normal();
    const PrimarySample primary(y, w);
    const CovEstimates est =
        estimate_from_replication(ReplicationSample(w, w));
    const SdrConfig cfg = SdrConfig::cr(1, 0.4);
    const FitResult factorized = cr_factorized(primary, est, cfg);
    const Matrix centered = w.rowwise() - sample_mean(w).transpose();
    const FitResult direct = cr(centered, y, cfg);
    REQUIRE(subspace_distance(direct.basis, factorized.basis) < 1e-8);
  }
}

TEST_CASE("affine invariance of the estimated spans") {
  Rng rng(39);
  const Index n = 600, p = 4;
  const Matrix x = rng.normal_matrix(n, p);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    const double t1 = x(i, 0) + x(i, 1);
    const double t2 = x(i, 2);
    y[i] = 0.7 * t1 * t1 + 2.0 * t2 + 0.05 * rng.normal();
  }
  Matrix t = rng.normal_matrix(p, p);
  t += 3.0 * Matrix::Identity(p, p);
  const Matrix xt = x * t.transpose();
  const Matrix back = t.inverse().transpose();

  for (const SdrConfig& cfg :
       {SdrConfig::sir(2, 6), SdrConfig::phd(2), SdrConfig::cr(2, 0.5)}) {
    const FitResult original = fit(x, y, cfg);
    const FitResult transformed = fit(xt, y, cfg);
    const Basis mapped = orthonormalize(back * original.basis.columns());
    REQUIRE(subspace_distance(transformed.basis, mapped) < 1e-6);
  }
}

TEST_CASE("fit result invariants") {
  Rng rng(40);
  const Index n = 400, p = 5;
  const Matrix x = rng.normal_matrix(n, p);
  Vector y(n);
  for (Index i = 0; i < n; ++i)
    y[i] = x(i, 0) + x(i, 1) * x(i, 1) + 0.1 * rng.normal();

  for (const SdrConfig& cfg :
       {SdrConfig::sir(2, 5), SdrConfig::phd(2), SdrConfig::cr(2, 0.5),
        SdrConfig::ols()}) {
    const FitResult res = fit(x, y, cfg);
    REQUIRE(res.eigenvalues.size() == p);
    REQUIRE(res.basis.ambient_dim() == p);
    REQUIRE(res.basis.rank() == cfg.target_dim);
    const Matrix gram = res.basis.columns().transpose() * res.basis.columns();
    REQUIRE((gram - Matrix::Identity(res.basis.rank(), res.basis.rank()))
                .cwiseAbs()
                .maxCoeff() < 1e-10);
  }
  REQUIRE_THROWS_AS(fit(x, y, SdrConfig::sir(9, 4)), InvalidInput);
}
