#include <catch2/catch_amalgamated.hpp>

#include "sdr/rng.hpp"
#include "sdr/surrogate.hpp"

using namespace sdr;
using Catch::Approx;

namespace {

Matrix col(std::initializer_list<double> values) {
  Matrix m(static_cast<Index>(values.size()), 1);
  Index i = 0;
  for (double v : values) m(i++, 0) = v;
  return m;
}

}  // namespace

TEST_CASE("validation estimates") {
  SECTION("x = w forces sigma_xw == sigma_w") {
    Rng rng(1);
    const Matrix w = rng.normal_matrix(40, 3);
    const CovEstimates est = estimate_from_validation(ValidationSample(w, w));
    REQUIRE(est.scheme == Scheme::validation);
    REQUIRE((est.sigma_xw - est.sigma_w_aux.mat()).cwiseAbs().maxCoeff() <
            1e-12);
  }
  SECTION("3-row scalar toy, divisor m") {
    const CovEstimates est = estimate_from_validation(
        ValidationSample(col({1, 2, 3}), col({2, 4, 6})));
    REQUIRE(est.sigma_xw(0, 0) == Approx(4.0 / 3.0));
    REQUIRE(est.sigma_w_aux.mat()(0, 0) == Approx(8.0 / 3.0));
  }
  SECTION("recovers Sigma_X * Gamma at large m") {
    const Index p = 3, m = 50000;
    Matrix gamma(p, p);
    gamma << 1.0, 0.4, 0.0, 0.2, 1.0, 0.3, 0.0, -0.5, 1.0;
    const Vector x_sd = (Vector(p) << 1.0, std::sqrt(2.0), 0.7).finished();
    Rng rng(2);
    Matrix x(m, p), w(m, p);
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j < p; ++j) x(i, j) = x_sd[j] * rng.normal();
      w.row(i) = x.row(i) * gamma;
      for (Index j = 0; j < p; ++j) w(i, j) += 0.3 * rng.normal();
    }
    const CovEstimates est = estimate_from_validation(ValidationSample(x, w));
    const Matrix target = x_sd.array().square().matrix().asDiagonal() * gamma;
    REQUIRE((est.sigma_xw - target).norm() / target.norm() < 0.05);
  }
  SECTION("too-small samples are rejected") {
    REQUIRE_THROWS_AS(ValidationSample(Matrix::Zero(2, 3), Matrix::Zero(2, 3)),
                      InsufficientData);
  }
}

TEST_CASE("replication estimates") {
  SECTION("identical replicates mean no measurement error") {
    Rng rng(3);
    const Matrix w = rng.normal_matrix(30, 4);
    const CovEstimates est = estimate_from_replication(ReplicationSample(w, w));
    REQUIRE(est.sigma_delta->mat().cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE((est.sigma_w_aux.mat() - sample_covariance(w).mat())
                .cwiseAbs()
                .maxCoeff() < 1e-14);
  }
  SECTION("2-row scalar toy, divisor m") {
    const CovEstimates est = estimate_from_replication(
        ReplicationSample(col({0, 2}), col({0, 0})));
    REQUIRE(est.sigma_delta->mat()(0, 0) == Approx(0.5));
    REQUIRE(est.sigma_w_aux.mat()(0, 0) == Approx(0.5));
  }
  SECTION("recovers Sigma_delta at large m") {
    const Index p = 6, m = 50000;
    const double sd = 1.0 / 6.0;
    Rng rng(4);
    Matrix w1(m, p), w2(m, p);
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < p; ++j) {
        const double x = rng.normal();
        w1(i, j) = x + sd * rng.normal();
        w2(i, j) = x + sd * rng.normal();
      }
    const CovEstimates est =
        estimate_from_replication(ReplicationSample(w1, w2));
    const Matrix target = sd * sd * Matrix::Identity(p, p);
    REQUIRE((est.sigma_delta->mat() - target).norm() / target.norm() < 0.05);
  }
  SECTION("internal consistency: sigma_w - sigma_delta estimates Sigma_X") {
    Rng rng(5);
    const Matrix w1 = rng.normal_matrix(200, 3);
    const Matrix w2 = w1 + 0.5 * rng.normal_matrix(200, 3);
    const CovEstimates est =
        estimate_from_replication(ReplicationSample(w1, w2));
    const Matrix sum_cov = sample_covariance(w1 + w2).mat();
    const Matrix diff_cov = sample_covariance(w1 - w2).mat();
    const Matrix lhs = est.sigma_w_aux.mat() - est.sigma_delta->mat();
    REQUIRE((lhs - lhs.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((lhs - (0.25 * sum_cov - 0.25 * diff_cov)).cwiseAbs().maxCoeff() <
            1e-12);
    REQUIRE((est.sigma_xw - lhs).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("split-halves estimates") {
  SECTION("equal halves mean zero error variance") {
    Rng rng(6);
    const Vector a = rng.normal_vector(20);
    const Vector b = rng.normal_vector(20);
    const SplitHalvesSample sample({{0, a, a}, {1, b, b}}, {});
    const CovEstimates est = estimate_from_split_halves(sample);
    REQUIRE(est.sigma_delta->mat().cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("scalar toy: var(a-b)/4") {
    const Vector a = col({1, 3}).col(0);
    const Vector b = col({1, 1}).col(0);
    const SplitHalvesSample sample({{0, a, b}}, {});
    const CovEstimates est = estimate_from_split_halves(sample);
    REQUIRE(est.sigma_delta->mat()(0, 0) == Approx(0.25));
  }
  SECTION("diagonal structure with an exact zero for error-free coordinates") {
    Rng rng(7);
    const Index m = 50;
    std::vector<SplitHalvesSample::HalvedCoord> prone;
    for (Index j : {0, 1, 2})
      prone.push_back({j, rng.normal_vector(m), rng.normal_vector(m)});
    std::vector<SplitHalvesSample::ExactCoord> exact;
    exact.push_back({3, rng.normal_vector(m)});
    const SplitHalvesSample sample(std::move(prone), std::move(exact));
    const CovEstimates est = estimate_from_split_halves(sample);
    const Matrix d = est.sigma_delta->mat();
    REQUIRE(d.rows() == 4);
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < 4; ++j)
        if (i != j) REQUIRE(d(i, j) == 0.0);
    REQUIRE(d(3, 3) == 0.0);
    for (Index j : {0, 1, 2}) REQUIRE(d(j, j) > 0.0);
    REQUIRE(est.sigma_w_aux.dim() == 4);
  }
  SECTION("coordinate partition is validated") {
    Rng rng(8);
    const Vector v = rng.normal_vector(10);
    REQUIRE_THROWS_AS(SplitHalvesSample({{0, v, v}, {0, v, v}}, {}),
                      InvalidInput);
    REQUIRE_THROWS_AS(SplitHalvesSample({{1, v, v}}, {}), InvalidInput);
  }
}

TEST_CASE("make_adjustment") {
  SECTION("no measurement error gives the identity") {
    Rng rng(9);
    const Matrix w = rng.normal_matrix(30, 3);
    const CovEstimates est = estimate_from_replication(ReplicationSample(w, w));
    const Adjustment adj = make_adjustment(est, Vector::Zero(3));
    REQUIRE((adj.matrix_a - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <
            1e-10);
  }
  SECTION("scalar validation: 1/2") {
    CovEstimates est{Scheme::validation, Matrix::Constant(1, 1, 1.0),
                     SymMatrix(Matrix::Constant(1, 1, 2.0)), std::nullopt,
                     std::nullopt};
    const Adjustment adj = make_adjustment(est, Vector::Zero(1));
    REQUIRE(adj.matrix_a(0, 0) == Approx(0.5));
  }
  SECTION("2x2 replication by hand") {
    Matrix delta(2, 2), w(2, 2);
    delta << 1, 0, 0, 0;
    w << 2, 0, 0, 2;
    CovEstimates est{Scheme::replication, (w - delta).eval(), SymMatrix(w),
                     std::nullopt, SymMatrix(delta)};
    const Adjustment adj = make_adjustment(est, Vector::Zero(2));
    REQUIRE(adj.matrix_a(0, 0) == Approx(0.5));
    REQUIRE(adj.matrix_a(1, 1) == Approx(1.0));
    REQUIRE(adj.matrix_a(0, 1) == Approx(0.0).margin(1e-14));
  }
  SECTION("missing fields per scheme") {
    Rng rng(10);
    const Matrix w = rng.normal_matrix(20, 2);
    CovEstimates repl = estimate_from_replication(
        ReplicationSample(w, (w + 0.1 * rng.normal_matrix(20, 2)).eval()));
    REQUIRE_THROWS_AS(make_adjustment(repl, Vector::Zero(2), true),
                      InvalidEstimates);

    std::vector<SplitHalvesSample::HalvedCoord> prone;
    prone.push_back({0, rng.normal_vector(20), rng.normal_vector(20)});
    prone.push_back({1, rng.normal_vector(20), rng.normal_vector(20)});
    const CovEstimates sh =
        estimate_from_split_halves(SplitHalvesSample(std::move(prone), {}));
    REQUIRE_THROWS_AS(make_adjustment(sh, Vector::Zero(2)), InvalidEstimates);
    const CovEstimates completed =
        sh.with_primary_sigma_w(SymMatrix(Matrix::Identity(2, 2)));
    REQUIRE_NOTHROW(make_adjustment(completed, Vector::Zero(2)));
  }
}

TEST_CASE("adjust") {
  SECTION("identity adjustment centers the sample") {
    Rng rng(11);
    const Matrix w = rng.normal_matrix(25, 3);
    const Vector y = rng.normal_vector(25);
    const PrimarySample sample(y, w);
    const Adjustment adj(Matrix::Identity(3, 3), sample_mean(w));
    const AdjustedSample out = adjust(sample, adj);
    const Matrix centered = w.rowwise() - sample_mean(w).transpose();
    REQUIRE((out.u - centered).cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE((out.y - y).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("scalar: A = 1/2, W = 4 gives 2") {
    const PrimarySample sample(col({1, 1}).col(0), col({4, 4}));
    const Adjustment adj(Matrix::Constant(1, 1, 0.5), Vector::Zero(1));
    REQUIRE(adjust(sample, adj).u(0, 0) == Approx(2.0));
  }
  SECTION("dimension mismatch") {
    const PrimarySample sample(col({1, 2}).col(0), col({1, 2}));
    const Adjustment adj(Matrix::Identity(2, 2), Vector::Zero(2));
    REQUIRE_THROWS_AS(adjust(sample, adj), InvalidInput);
  }
  SECTION("decomposition identity with true population matrices") {
    // W = Gamma' X + delta with known covariances; the adjusted predictor
    // must satisfy U - Sigma_U Sigma_X^{-1} X = Sigma_XW Sigma_W^{-1} delta
    // entrywise.
    const Index p = 4, n = 60;
    Rng rng(12);
    Matrix gamma(p, p);
    gamma.setIdentity();
    gamma(0, 1) = 0.5;
    gamma(2, 3) = -0.25;
    const double sd_delta = 0.4;
    const Matrix sigma_x = Matrix::Identity(p, p);
    const Matrix sigma_w = gamma.transpose() * sigma_x * gamma +
                           sd_delta * sd_delta * Matrix::Identity(p, p);
    const Matrix sigma_xw = sigma_x * gamma;
    const Matrix a = sigma_xw * sigma_w.inverse();
    const Matrix sigma_u = a * sigma_xw.transpose();

    const Matrix x = rng.normal_matrix(n, p);
    const Matrix delta = rng.normal_matrix(n, p, sd_delta);
    const Matrix w = x * gamma + delta;

    const Matrix u = w * a.transpose();
    const Matrix lhs = u - x * (sigma_u * sigma_x.inverse()).transpose();
    const Matrix rhs = delta * a.transpose();
    REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
  }
  SECTION("translation equivariance is exact on dyadic data") {
    // Integer-valued data and power-of-two shifts: (w + c) - (center + c)
    // incurs no rounding, so the adjusted rows must match bit for bit.
    Rng rng(13);
    Matrix w(8, 2);
    for (Index i = 0; i < w.size(); ++i)
      w(i / 2, i % 2) = double(int(rng.uniform() * 64) - 32);
    const Vector y = rng.normal_vector(8);
    Matrix a(2, 2);
    a << 0.75, -0.25, 0.5, 1.25;
    const Vector center = (Vector(2) << 4.0, -8.0).finished();
    const Vector shift = (Vector(2) << 16.0, 256.0).finished();

    const AdjustedSample base =
        adjust(PrimarySample(y, w), Adjustment(a, center));
    const Matrix w_shifted = w.rowwise() + shift.transpose();
    const AdjustedSample shifted =
        adjust(PrimarySample(y, w_shifted), Adjustment(a, center + shift));
    REQUIRE((base.u - shifted.u).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("surrogate_sigma_u") {
  SECTION("identity inputs") {
    CovEstimates est{Scheme::validation, Matrix::Identity(2, 2),
                     SymMatrix(Matrix::Identity(2, 2)), std::nullopt,
                     std::nullopt};
    const Matrix s =
        surrogate_sigma_u(est, SymMatrix(Matrix::Identity(2, 2))).mat();
    REQUIRE((s - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("scalar factorization: 1 * (1/2) * 4 * (1/2) * 1") {
    CovEstimates est{Scheme::validation, Matrix::Constant(1, 1, 1.0),
                     SymMatrix(Matrix::Constant(1, 1, 2.0)), std::nullopt,
                     std::nullopt};
    const Matrix s =
        surrogate_sigma_u(est, SymMatrix(Matrix::Constant(1, 1, 4.0))).mat();
    REQUIRE(s(0, 0) == Approx(1.0));
  }
  SECTION("matches the direct covariance of the adjusted sample") {
    Rng rng(14);
    for (int trial = 0; trial < 10; ++trial) {
      const Index p = 2 + trial % 3;
      const Index n = 40 + 5 * trial;
      const Matrix w = rng.normal_matrix(n, p);
      const Vector y = rng.normal_vector(n);

      Matrix root = rng.normal_matrix(p, p);
      const SymMatrix sigma_w_aux(
          (root * root.transpose() + 0.5 * Matrix::Identity(p, p)).eval());
      const Matrix sigma_xw = rng.normal_matrix(p, p);
      CovEstimates est{Scheme::validation, sigma_xw, sigma_w_aux, std::nullopt,
                       std::nullopt};

      const Adjustment adj = make_adjustment(est, sample_mean(w));
      const AdjustedSample adjusted = adjust(PrimarySample(y, w), adj);
      const Matrix direct = sample_covariance(adjusted.u).mat();
      const Matrix factorized =
          surrogate_sigma_u(est, sample_covariance(w)).mat();
      REQUIRE((direct - factorized).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("degenerate schemes agree") {
  Rng rng(15);
  const Matrix w = rng.normal_matrix(30, 3);
  const Adjustment via_repl = make_adjustment(
      estimate_from_replication(ReplicationSample(w, w)), sample_mean(w));
  const Adjustment via_valid = make_adjustment(
      estimate_from_validation(ValidationSample(w, w)), sample_mean(w));
  REQUIRE((via_repl.matrix_a - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <
          1e-10);
  REQUIRE((via_valid.matrix_a - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <
          1e-10);
}
