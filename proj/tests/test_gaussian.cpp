#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "qfb/gaussian.hpp"

using namespace qfb;

namespace {

// Open-loop stationary state of the parametric oscillator, written out.
Matrix nopo_open(double chi) {
  const double g = 0.5 / (1 - 4 * chi * chi);
  const double s = chi / (1 - 4 * chi * chi);
  return oracle::pattern(g, g, s, -s);
}

}  // namespace

TEST(SymplecticForm, SingleMode) {
  Matrix expected(2, 2);
  expected << 0, 1, -1, 0;
  EXPECT_EQ(symplectic_form(1), expected);
}

TEST(SymplecticForm, TwoModesIsDirectSum) { EXPECT_EQ(symplectic_form(2), oracle::sigma2()); }

TEST(SymplecticForm, OrthogonalAndAntisymmetric) {
  for (int n = 1; n <= 5; ++n) {
    const Matrix s = symplectic_form(n);
    EXPECT_EQ(s * s.transpose(), Matrix::Identity(2 * n, 2 * n));
    EXPECT_EQ(s.transpose(), -s);
  }
}

TEST(SymplecticForm, RejectsZeroModes) { EXPECT_THROW(symplectic_form(0), InputError); }

TEST(CovarianceMatrix, Validation) {
  EXPECT_THROW(CovarianceMatrix(Matrix::Identity(3, 3)), InputError);
  EXPECT_THROW(CovarianceMatrix(Matrix::Identity(2, 4)), InputError);
  Matrix bad = Matrix::Identity(2, 2);
  bad(0, 1) = std::nan("");
  EXPECT_THROW(CovarianceMatrix{bad}, InputError);
  Matrix asym = Matrix::Identity(2, 2);
  asym(0, 1) = 0.2;
  const CovarianceMatrix v(asym);
  EXPECT_DOUBLE_EQ(v(0, 1), 0.1);
  EXPECT_DOUBLE_EQ(v(1, 0), 0.1);
}

TEST(IsPhysical, VacuumAndBelowVacuum) {
  EXPECT_TRUE(is_physical(CovarianceMatrix::vacuum(2), 1e-9));
  EXPECT_FALSE(is_physical(CovarianceMatrix(0.25 * Matrix::Identity(4, 4)), 1e-9));
  EXPECT_TRUE(is_physical(CovarianceMatrix(nopo_open(0.25)), 1e-9));
}

TEST(IsPhysical, AgreesWithSymplecticOracle) {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 50; ++k) {
    const Matrix v = oracle::random_physical(rng);
    EXPECT_TRUE(is_physical(CovarianceMatrix(v)));
    const double nu = oracle::symplectic_eigs(v).front();
    // Scaling by just below (1/2)/nu pushes the smallest eigenvalue under 1/2.
    EXPECT_FALSE(is_physical(CovarianceMatrix(v * (0.5 / nu) * 0.99)));
  }
}

TEST(SymplecticEigenvalues, Vacuum) {
  const auto s = symplectic_eigenvalues(CovarianceMatrix::vacuum(2));
  ASSERT_EQ(s.values.size(), 2u);
  EXPECT_NEAR(s.values[0], 0.5, 1e-12);
  EXPECT_NEAR(s.values[1], 0.5, 1e-12);
}

TEST(SymplecticEigenvalues, OpenLoopOscillator) {
  const double nu = 1.0 / std::sqrt(3.0);
  const auto s = symplectic_eigenvalues(CovarianceMatrix(nopo_open(0.25)));
  EXPECT_NEAR(s.largest(), nu, 1e-12);
  EXPECT_NEAR(s.smallest(), nu, 1e-12);
  const auto o = oracle::symplectic_eigs(nopo_open(0.25));
  EXPECT_NEAR(o[0], nu, 1e-12);
}

TEST(SymplecticEigenvalues, OptimalConditionalStateIsPure) {
  const auto s = symplectic_eigenvalues(CovarianceMatrix(oracle::pattern(0.625, 0.625, 0.375, -0.375)));
  EXPECT_NEAR(s.largest(), 0.5, 1e-12);
  EXPECT_NEAR(s.smallest(), 0.5, 1e-12);
}

TEST(SymplecticEigenvalues, RandomStatesMatchOracles) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 100; ++k) {
    const Matrix v = oracle::random_physical(rng);
    const auto s = symplectic_eigenvalues(CovarianceMatrix(v));
    const auto o = oracle::symplectic_eigs(v);
    const auto [lo, hi] = oracle::two_mode_nu(v, false);
    EXPECT_NEAR(s.smallest(), o[0], 1e-8);
    EXPECT_NEAR(s.largest(), o[1], 1e-8);
    EXPECT_NEAR(s.smallest(), lo, 1e-8);
    EXPECT_NEAR(s.largest(), hi, 1e-8);
    EXPECT_GE(s.smallest(), 0.5 - 1e-9);
  }
}

TEST(SymplecticEigenvalues, WilliamsonInvariance) {
  // Symplectic congruence preserves the spectrum.
  std::mt19937_64 rng(8);
  const Matrix v = oracle::random_physical(rng);
  const double r = 0.3;
  Matrix s = Matrix::Identity(4, 4);
  s(0, 0) = std::exp(-r);
  s(1, 1) = std::exp(r);
  const auto a = symplectic_eigenvalues(CovarianceMatrix(v));
  const auto b = symplectic_eigenvalues(CovarianceMatrix(s * v * s.transpose()));
  EXPECT_NEAR(a.smallest(), b.smallest(), 1e-10);
  EXPECT_NEAR(a.largest(), b.largest(), 1e-10);
}

TEST(PartialTranspose, VacuumInvariantAndInvolution) {
  EXPECT_EQ(partial_transpose(CovarianceMatrix::vacuum(2), 1).matrix(), CovarianceMatrix::vacuum(2).matrix());
  std::mt19937_64 rng(3);
  const CovarianceMatrix v(oracle::random_physical(rng));
  EXPECT_EQ(partial_transpose(partial_transpose(v, 1), 1).matrix(), v.matrix());
  EXPECT_EQ(partial_transpose(partial_transpose(v, 0), 0).matrix(), v.matrix());
}

TEST(PartialTranspose, FlipsMomentumCorrelation) {
  const double chi = 0.25;
  const double spp = chi / (1 - 4 * chi * chi);
  const CovarianceMatrix t = partial_transpose(CovarianceMatrix(nopo_open(chi)), 1);
  EXPECT_NEAR(t(1, 3), spp, 1e-15);
  EXPECT_NEAR(t(3, 1), spp, 1e-15);
  EXPECT_NEAR(t(0, 2), spp, 1e-15);  // sigma_qq untouched
}

TEST(PartialTranspose, RejectsBadMode) {
  EXPECT_THROW(partial_transpose(CovarianceMatrix::vacuum(2), 2), InputError);
  EXPECT_THROW(partial_transpose(CovarianceMatrix::vacuum(2), -1), InputError);
}

TEST(LogNegativity, VacuumIsZero) { EXPECT_EQ(log_negativity(CovarianceMatrix::vacuum(2)), 0.0); }

TEST(LogNegativity, OpenLoopClosedForm) {
  for (int k = 0; k < 10; ++k) {
    const double chi = 0.05 * k;
    EXPECT_NEAR(log_negativity(CovarianceMatrix(nopo_open(chi))), std::log2(1 + 2 * chi), 1e-12) << chi;
  }
  EXPECT_NEAR(log_negativity(CovarianceMatrix(nopo_open(0.25))), 0.584962500721156, 1e-12);
}

TEST(LogNegativity, CaseFourState) {
  const Matrix v = oracle::pattern(0.5, 2.0 / 3.0, 0.25, -1.0 / 3.0);
  const double expected = -std::log2(2.0 * std::sqrt(1.0 / 12.0));
  EXPECT_NEAR(log_negativity(CovarianceMatrix(v)), expected, 1e-12);
  EXPECT_NEAR(expected, 0.792481250360578, 1e-12);
}

TEST(LogNegativity, RandomStatesMatchTwoModeFormula) {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 100; ++k) {
    const Matrix v = oracle::random_physical(rng);
    EXPECT_NEAR(log_negativity(CovarianceMatrix(v)), oracle::log_neg(v), 1e-8);
    EXPECT_GE(log_negativity(CovarianceMatrix(v)), 0.0);
  }
}

TEST(LogNegativity, LocalSymplecticInvariance) {
  std::mt19937_64 rng(22);
  const Matrix v = oracle::random_physical(rng);
  Matrix s = Matrix::Identity(4, 4);
  s.block(2, 2, 2, 2) << std::cos(0.7), std::sin(0.7), -std::sin(0.7), std::cos(0.7);
  EXPECT_NEAR(log_negativity(CovarianceMatrix(v)), log_negativity(CovarianceMatrix(s * v * s.transpose())), 1e-9);
}

TEST(EntropyFunction, Values) {
  EXPECT_EQ(entropy_function(0.5), 0.0);
  EXPECT_NEAR(entropy_function(1.5), 2.0 * std::log2(2.0) - 1.0 * std::log2(1.0), 1e-15);
  EXPECT_NEAR(entropy_function(0.5 + 1e-10), 0.0, 1e-8);
  EXPECT_THROW(entropy_function(0.4), InputError);
}

TEST(VonNeumannEntropy, PureStates) {
  EXPECT_EQ(von_neumann_entropy(CovarianceMatrix::vacuum(2)), 0.0);
  EXPECT_NEAR(von_neumann_entropy(CovarianceMatrix(oracle::pattern(0.625, 0.625, 0.375, -0.375))), 0.0, 1e-8);
}

TEST(VonNeumannEntropy, OpenLoopOscillator) {
  const double nu = 1.0 / std::sqrt(3.0);
  const double s = von_neumann_entropy(CovarianceMatrix(nopo_open(0.25)));
  EXPECT_NEAR(s, 2.0 * oracle::g(nu), 1e-10);
  EXPECT_NEAR(s, 0.803, 5e-4);
}

TEST(VonNeumannEntropy, RandomStatesMatchOracle) {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 50; ++k) {
    const Matrix v = oracle::random_physical(rng);
    const auto nu = oracle::symplectic_eigs(v);
    EXPECT_NEAR(von_neumann_entropy(CovarianceMatrix(v)), oracle::g(nu[0]) + oracle::g(nu[1]), 1e-7);
  }
}

TEST(EprVariance, OpenLoopAndVacuum) {
  for (double th = 0.0; th < 6.3; th += 0.37) {
    EXPECT_NEAR(epr_variance(CovarianceMatrix(nopo_open(0.25)), th), 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(epr_variance(CovarianceMatrix::vacuum(2), th), 1.0, 1e-12);
  }
}

TEST(EprVariance, ThetaIndependentOnSymmetricFamily) {
  const CovarianceMatrix v(oracle::pattern(0.7, 0.7, 0.3, -0.3));
  double lo = INFINITY;
  double hi = -INFINITY;
  for (int k = 0; k < 100; ++k) {
    const double e = epr_variance(v, 2.0 * M_PI * k / 100.0);
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  EXPECT_LE(hi - lo, 1e-10);
}

TEST(EprVariance, MatchesQuadratureVariances) {
  // Direct quadratic forms for q1 - q2 (theta = 0) and p1 + p2 (theta = pi/2).
  std::mt19937_64 rng(2);
  const Matrix v = oracle::random_physical(rng);
  const double direct = v(0, 0) + v(2, 2) - 2 * v(0, 2);
  EXPECT_NEAR(epr_variance(CovarianceMatrix(v), 0.0), direct, 1e-12);
  const double momentum = v(1, 1) + v(3, 3) + 2 * v(1, 3);
  EXPECT_NEAR(epr_variance(CovarianceMatrix(v), M_PI / 2), momentum, 1e-12);
}

TEST(TwoModeBlocks, OpenLoopAndVacuum) {
  const auto b = two_mode_blocks(CovarianceMatrix(nopo_open(0.25)));
  EXPECT_NEAR(b.gamma1(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(b.gamma1(1, 1), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(b.sigma(0, 0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(b.sigma(1, 1), -1.0 / 3.0, 1e-15);
  EXPECT_EQ(b.gamma1(0, 1), 0.0);

  const auto vac = two_mode_blocks(CovarianceMatrix::vacuum(2));
  EXPECT_EQ(vac.gamma1, Eigen::Matrix2d::Identity() * 0.5);
  EXPECT_EQ(vac.gamma2, Eigen::Matrix2d::Identity() * 0.5);
  EXPECT_EQ(vac.sigma, Eigen::Matrix2d::Zero());
}

TEST(TwoModeBlocks, RoundTripIsBitIdentical) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 20; ++k) {
    const CovarianceMatrix v(oracle::random_physical(rng));
    EXPECT_EQ(two_mode_blocks(v).assemble().matrix(), v.matrix());
  }
  EXPECT_THROW(two_mode_blocks(CovarianceMatrix::vacuum(3)), InputError);
}

TEST(TwoModeBlocks, InvariantFormulaMatchesSpectrum) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 30; ++k) {
    const CovarianceMatrix v(oracle::random_physical(rng));
    const auto inv = two_mode_symplectic_invariants(two_mode_blocks(v));
    const auto s = symplectic_eigenvalues(v);
    EXPECT_NEAR(inv[0], s.largest(), 1e-8);
    EXPECT_NEAR(inv[1], s.smallest(), 1e-8);
    EXPECT_NEAR(two_mode_partial_transposed_smallest(two_mode_blocks(v)),
                symplectic_eigenvalues(partial_transpose(v, 1)).smallest(), 1e-8);
  }
}
