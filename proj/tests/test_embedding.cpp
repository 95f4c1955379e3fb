#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "bphmm/embedding.hpp"

using namespace bphmm;

namespace {

ModelFit smallFit() {
    ModelFit fit;
    for (int k = 0; k < 3; ++k) {
        ArState s;
        s.coeffs = Eigen::MatrixXd::Zero(1, 1);
        s.covariance = Eigen::MatrixXd::Identity(1, 1);
        fit.states.push_back(s);
    }
    fit.featureMatrix.resize(2, 3);
    fit.featureMatrix << 1, 1, 0, 0, 1, 1;
    SeriesHmm a;
    a.id = "a";
    a.active = {0, 1};
    a.trans.resize(2, 2);
    a.trans << 0.9, 0.1, 0.5, 0.5;  // stationary (5/6, 1/6)
    SeriesHmm b;
    b.id = "b";
    b.active = {1, 2};
    b.trans.resize(2, 2);
    b.trans << 0.5, 0.5, 0.5, 0.5;  // stationary (1/2, 1/2)
    fit.hmms = {a, b};
    StateSequence sa, sb;
    sa.id = "a";
    sa.z = {0, 1};
    sb.id = "b";
    sb.z = {1, 2};
    fit.sequences = {sa, sb};
    return fit;
}

DistanceMatrix plantedDistances() {
    // two tight groups of 3 far from each other
    DistanceMatrix dm;
    const int n = 6;
    dm.measure = "likelihood";
    dm.values = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        dm.ids.push_back("s" + std::to_string(i));
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            bool same = (i < 3) == (j < 3);
            dm.values(i, j) = same ? 1.0 : 20.0;
        }
    }
    return dm;
}

}  // namespace

TEST_CASE("stationary representation scatters rows into global state slots") {
    Representation rep = stationaryRepresentation(smallFit());
    REQUIRE(rep.dim() == 3);
    REQUIRE(rep.ids == std::vector<std::string>{"a", "b"});
    CHECK(rep.kind == "stationary");
    CHECK(rep.vectors(0, 0) == doctest::Approx(5.0 / 6.0).epsilon(1e-10));
    CHECK(rep.vectors(0, 1) == doctest::Approx(1.0 / 6.0).epsilon(1e-10));
    CHECK(rep.vectors(0, 2) == 0.0);
    CHECK(rep.vectors(1, 0) == 0.0);
    CHECK(rep.vectors(1, 1) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(rep.vectors(1, 2) == doctest::Approx(0.5).epsilon(1e-10));
    for (int i = 0; i < 2; ++i) {
        CHECK(rep.vectors.row(i).sum() == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(rep.vectors.row(i).minCoeff() >= 0.0);
    }
}

TEST_CASE("single-state series gets a one-hot stationary row") {
    ModelFit fit = smallFit();
    fit.hmms[1].active = {2};
    fit.hmms[1].trans = Eigen::MatrixXd::Ones(1, 1);
    fit.sequences[1].z = {2, 2};
    fit.featureMatrix(1, 1) = 0;
    Representation rep = stationaryRepresentation(fit);
    CHECK(rep.vectors(1, 2) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.vectors(1, 0) == 0.0);
    CHECK(rep.vectors(1, 1) == 0.0);
}

TEST_CASE("normalized Laplacian has the expected spectrum bounds") {
    DistanceMatrix dm = plantedDistances();
    for (bool affinity : {false, true}) {
        Eigen::MatrixXd lap = normalizedLaplacian(dm, affinity);
        CHECK((lap - lap.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap);
        CHECK(solver.eigenvalues().minCoeff() > -1e-10);
        CHECK(solver.eigenvalues().maxCoeff() < 2.0 + 1e-10);
    }
}

TEST_CASE("spectral columns are orthonormal eigenvectors of the Laplacian") {
    DistanceMatrix dm = plantedDistances();
    const int k = 3;
    Representation rep = spectralRepresentation(dm, k);
    REQUIRE(rep.dim() == k);
    Eigen::MatrixXd gram = rep.vectors.transpose() * rep.vectors;
    CHECK((gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-8);
    Eigen::MatrixXd lap = normalizedLaplacian(dm);
    for (int c = 0; c < k; ++c) {
        Eigen::VectorXd v = rep.vectors.col(c);
        Eigen::VectorXd lv = lap * v;
        double lambda = v.dot(lv);
        CHECK((lv - lambda * v).norm() < 1e-8);
    }
}

TEST_CASE("K equal to N spans the whole eigenbasis") {
    DistanceMatrix dm = plantedDistances();
    Representation rep = spectralRepresentation(dm, 6);
    Eigen::MatrixXd gram = rep.vectors * rep.vectors.transpose();
    CHECK((gram - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("affinity variant separates a planted partition") {
    DistanceMatrix dm = plantedDistances();
    Representation rep = spectralRepresentation(dm, 2, /*gaussianAffinity=*/true);
    // rows of the same group coincide, across groups they differ
    double within = std::max((rep.vectors.row(0) - rep.vectors.row(2)).norm(),
                             (rep.vectors.row(3) - rep.vectors.row(5)).norm());
    double between = (rep.vectors.row(0) - rep.vectors.row(3)).norm();
    CHECK(within < 1e-6);
    CHECK(between > 0.1);
}

TEST_CASE("spectral representation is deterministic") {
    DistanceMatrix dm = plantedDistances();
    Representation a = spectralRepresentation(dm, 4);
    Representation b = spectralRepresentation(dm, 4);
    CHECK(a.vectors == b.vectors);
    CHECK(a.kind == "spectral-likelihood");
}

TEST_CASE("spectral K out of range throws") {
    DistanceMatrix dm = plantedDistances();
    CHECK_THROWS_AS(spectralRepresentation(dm, 0), std::invalid_argument);
    CHECK_THROWS_AS(spectralRepresentation(dm, 7), std::invalid_argument);
}

TEST_CASE("isolated vertex in the default graph throws a named error") {
    DistanceMatrix dm;
    dm.measure = "likelihood";
    dm.ids = {"a", "lonely", "c"};
    dm.values = Eigen::MatrixXd::Zero(3, 3);
    dm.values(0, 2) = dm.values(2, 0) = 1.0;  // row 1 has zero weight
    CHECK_THROWS_WITH_AS(normalizedLaplacian(dm), doctest::Contains("lonely"),
                         std::invalid_argument);
}
