#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "cquant/measures.hpp"
#include "cquant/quantizer.hpp"

using namespace cquant;
using P2 = Point<2>;

TEST(UniformCircle, FourNodesAtQuarterAngles) {
  const auto P = uniform_circle<2>(P2{{0, 0}}, 1.0, 4);
  ASSERT_EQ(P.size(), 4u);
  const double expect[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(P.atoms()[k][0], expect[k][0], 1e-15);
    EXPECT_NEAR(P.atoms()[k][1], expect[k][1], 1e-15);
    EXPECT_DOUBLE_EQ(P.weights()[k], 0.25);
  }
  EXPECT_EQ(P.kind(), MeasureKind::AnalyticQuadrature);
}

TEST(UniformCircle, Integrals) {
  const auto P = uniform_circle<2>(P2{{0, 0}}, 1.0, 4096);
  EXPECT_NEAR(P.integrate([](const P2& x) { return norm(x); }), 1.0, 1e-9);
  EXPECT_NEAR(P.integrate([](const P2& x) { return x[0]; }), 0.0, 1e-12);
  EXPECT_NEAR(P.integrate([](const P2& x) { return x[0] * x[0]; }), 0.5, 1e-12);
}

TEST(UniformCircle, RejectsFewNodes) {
  EXPECT_THROW(uniform_circle<2>(P2{{0, 0}}, 1.0, 2), ConfigError);
  EXPECT_THROW(uniform_circle<2>(P2{{0, 0}}, 0.0, 8), ConfigError);
}

TEST(CantorMeasure, DepthOneMidpoints) {
  const auto P = cantor_measure<1>(Point<1>{{0}}, Point<1>{{1}}, 1);
  ASSERT_EQ(P.size(), 2u);
  EXPECT_NEAR(P.atoms()[0][0], 1.0 / 6, 1e-15);
  EXPECT_NEAR(P.atoms()[1][0], 5.0 / 6, 1e-15);
  EXPECT_DOUBLE_EQ(P.weights()[0], 0.5);
  EXPECT_EQ(P.kind(), MeasureKind::Ifs);
}

TEST(CantorMeasure, MeanAndVariance) {
  const auto P = cantor_measure<1>(Point<1>{{0}}, Point<1>{{1}}, 10);
  ASSERT_EQ(P.size(), 1024u);
  EXPECT_NEAR(P.mean()[0], 0.5, 1e-12);
  // Brute-force second moment over the atoms.
  double var = 0.0;
  for (std::size_t j = 0; j < P.size(); ++j) var += P.weights()[j] * std::pow(P.atoms()[j][0] - 0.5, 2);
  EXPECT_NEAR(var, 1.0 / 8, 1e-4);
  // Var(depth k) = (1 - 9^-k) / 8 for midpoint atoms.
  EXPECT_NEAR(var, (1.0 - std::pow(9.0, -10)) / 8, 1e-14);
}

TEST(CantorMeasure, DepthBounds) {
  EXPECT_THROW(cantor_measure<1>(Point<1>{{0}}, Point<1>{{1}}, 0), ConfigError);
  EXPECT_THROW(cantor_measure<1>(Point<1>{{0}}, Point<1>{{1}}, 25), ResourceError);
}

TEST(CantorMeasure, AtomsAlongArbitrarySegment) {
  const auto P = cantor_measure<2>(P2{{1, 1}}, P2{{3, 1}}, 2);
  ASSERT_EQ(P.size(), 4u);
  EXPECT_NEAR(P.atoms()[0][0], 1 + 2.0 / 18, 1e-15);
  for (const auto& a : P.atoms()) EXPECT_DOUBLE_EQ(a[1], 1.0);
}

TEST(Dirac, SingleAtomAndIntegral) {
  const auto P = dirac<2>(P2{{0, 0}});
  ASSERT_EQ(P.size(), 1u);
  EXPECT_DOUBLE_EQ(P.weights()[0], 1.0);
  EXPECT_DOUBLE_EQ(P.integrate([](const P2& x) { return 3 + x[0] + std::cos(x[1]); }), 4.0);
}

TEST(Dirac, PushforwardOntoCircleIsAngleZeroRepresentative) {
  const auto P = dirac<2>(P2{{0, 0}});
  ConstraintSet<2> S(Sphere<2>{P2{{0, 0}}, 1.0});
  const auto Q = pushforward(P, S);
  ASSERT_EQ(Q.size(), 1u);
  EXPECT_DOUBLE_EQ(Q.atoms()[0][0], 1.0);
  EXPECT_DOUBLE_EQ(Q.atoms()[0][1], 0.0);
  EXPECT_DOUBLE_EQ(Q.weights()[0], 1.0);
}

TEST(Pushforward, CircleOntoHalfBallIsUniformOnHalfCircle) {
  const auto P = uniform_circle<2>(P2{{0, 0}}, 1.0, 4096);
  ConstraintSet<2> S(ClosedBall<2>{P2{{0, 0}}, 0.5});
  const auto Q = pushforward(P, S);
  ASSERT_EQ(Q.size(), 4096u);
  for (std::size_t j = 0; j < Q.size(); ++j) {
    EXPECT_NEAR(norm(Q.atoms()[j]), 0.5, 1e-15);
    EXPECT_DOUBLE_EQ(Q.weights()[j], 1.0 / 4096);
  }
  EXPECT_NEAR(Q.integrate([](const P2& x) { return x[0] * x[0]; }), 0.125, 1e-12);
}

TEST(Pushforward, CantorOntoLineIsTranslated) {
  const auto P = cantor_measure<2>(P2{{0, 0}}, P2{{1, 0}}, 8);
  ConstraintSet<2> S(Segment<2>{P2{{-1, 1}}, P2{{2, 1}}});
  const auto Q = pushforward(P, S);
  ASSERT_EQ(Q.size(), P.size());
  for (std::size_t j = 0; j < Q.size(); ++j) {
    EXPECT_NEAR(Q.atoms()[j][0], P.atoms()[j][0], 1e-15);
    EXPECT_NEAR(Q.atoms()[j][1], 1.0, 1e-15);
  }
}

TEST(PushforwardProperty, MassConservationAndSupportInclusion) {
  std::vector<std::pair<DiscreteMeasure<2>, ConstraintSet<2>>> scenes;
  scenes.emplace_back(uniform_circle<2>(P2{{0, 0}}, 1.0, 999), ConstraintSet<2>(ClosedBall<2>{P2{{0.3, 0}}, 0.4}));
  scenes.emplace_back(uniform_circle<2>(P2{{0, 0}}, 1.0, 512),
                      ConstraintSet<2>(FinitePointSet<2>{{P2{{0, 0}}, P2{{2, 0}}, P2{{0, 2}}}}));
  scenes.emplace_back(cantor_measure<2>(P2{{0, 0}}, P2{{1, 0}}, 9),
                      ConstraintSet<2>(CantorSegment<2>{P2{{0, 1}}, P2{{1, 1}}, 3}));
  scenes.emplace_back(uniform_polyline<2>({P2{{-1, -1}}, P2{{0, 0}}, P2{{1, -1}}}, 401),
                      ConstraintSet<2>(Sphere<2>{P2{{0, 0}}, 2.0}));
  for (const auto& [P, S] : scenes) {
    const auto Q = pushforward(P, S);
    double total = 0.0;
    for (double w : Q.weights()) total += w;
    EXPECT_NEAR(total, 1.0, 1e-12);
    for (const auto& a : Q.atoms()) EXPECT_LE(S.distance(a), S.proj_tol());
    EXPECT_LE(Q.size(), P.size());
  }
}

TEST(Pushforward, CollapsedMassIsMerged) {
  const auto P = uniform_circle<2>(P2{{0, 0}}, 1.0, 400);
  ConstraintSet<2> S(FinitePointSet<2>{{P2{{5, 0}}}});
  const auto Q = pushforward(P, S);
  ASSERT_EQ(Q.size(), 1u);
  EXPECT_NEAR(Q.weights()[0], 1.0, 1e-12);
}

TEST(UniformPolyline, TrapezoidWeightsAndApexAtom) {
  const auto P = uniform_polyline<2>({P2{{-1, -1}}, P2{{0, 0}}, P2{{1, -1}}}, 5);
  ASSERT_EQ(P.size(), 5u);
  EXPECT_NEAR(P.atoms()[2][0], 0.0, 1e-15);
  EXPECT_NEAR(P.atoms()[2][1], 0.0, 1e-15);
  EXPECT_NEAR(P.weights()[0], 0.125, 1e-15);
  EXPECT_NEAR(P.weights()[1], 0.25, 1e-15);
  EXPECT_THROW(uniform_polyline<2>({P2{{0, 0}}}, 5), ConfigError);
  EXPECT_THROW(uniform_polyline<2>({P2{{0, 0}}, P2{{1, 0}}}, 1), ConfigError);
}

TEST(FromSamples, NormalizesAndRejectsBadInput) {
  const auto P = from_samples<2>({P2{{0, 0}}, P2{{1, 0}}}, {1.0, 3.0});
  EXPECT_DOUBLE_EQ(P.weights()[0], 0.25);
  EXPECT_DOUBLE_EQ(P.weights()[1], 0.75);
  EXPECT_EQ(P.kind(), MeasureKind::File);
  EXPECT_THROW(from_samples<2>({P2{{0, 0}}}, {-1.0}), ConfigError);
  EXPECT_THROW(from_samples<2>({P2{{0, 0}}}, {std::nan("")}), ConfigError);
  EXPECT_THROW(from_samples<2>({P2{{std::nan(""), 0}}}, {1.0}), ConfigError);
  EXPECT_THROW(from_samples<2>({}, {}), ConfigError);
  EXPECT_THROW(from_samples<2>({P2{{0, 0}}}, {0.0}), ConfigError);
}

TEST(LoadSamples, ReadsRowsAndComments) {
  const auto path = std::filesystem::temp_directory_path() / "cquant_samples_test.txt";
  {
    std::ofstream out(path);
    out << "# x y weight\n0 0 1\n\n1 2 1  # trailing\n";
  }
  const auto P = load_samples<2>(path.string());
  ASSERT_EQ(P.size(), 2u);
  EXPECT_DOUBLE_EQ(P.atoms()[1][1], 2.0);
  EXPECT_DOUBLE_EQ(P.weights()[1], 0.5);
  {
    std::ofstream out(path);
    out << "0 0\n";
  }
  EXPECT_THROW(load_samples<2>(path.string()), ConfigError);
  {
    std::ofstream out(path);
    out << "0 x 1\n";
  }
  EXPECT_THROW(load_samples<2>(path.string()), ConfigError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_samples<2>(path.string()), ConfigError);
}

TEST(DiscreteMeasureInvariants, ConstructorChecks) {
  EXPECT_THROW(DiscreteMeasure<2>({}, {}, MeasureKind::File), ConfigError);
  EXPECT_THROW(DiscreteMeasure<2>({P2{{0, 0}}}, {0.5}, MeasureKind::File), ConfigError);
  EXPECT_THROW(DiscreteMeasure<2>({P2{{0, 0}}}, {1.0, 0.0}, MeasureKind::File), ConfigError);
  EXPECT_THROW(DiscreteMeasure<2>({P2{{INFINITY, 0}}}, {1.0}, MeasureKind::File), NumericalError);
}

// Downstream quantities computed under N and 2N nodes differ by at most C / N.
TEST(QuadratureRefinement, FixedCodebookErrorsConvergeAtRateOneOverN) {
  const PointList<2> cb{P2{{0.8, 0.1}}, P2{{-0.3, 0.7}}, P2{{-0.4, -0.6}}};
  ConstraintSet<2> half(ClosedBall<2>{P2{{0, 0}}, 0.5});
  const double C = 10.0;
  for (int N : {64, 128, 256, 512, 1024, 2048}) {
    const auto a = uniform_circle<2>(P2{{0, 0}}, 1.0, N);
    const auto b = uniform_circle<2>(P2{{0, 0}}, 1.0, 2 * N);
    for (double r : {1.0, 2.0, 3.0}) EXPECT_LE(std::abs(error<2>(a, cb, r) - error<2>(b, cb, r)), C / N) << N;
    EXPECT_LE(std::abs(e_infinity(a, half, 2.0) - e_infinity(b, half, 2.0)), C / N);
  }
}
