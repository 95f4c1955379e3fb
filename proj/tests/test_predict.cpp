#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "bphmm/predict.hpp"
#include "bphmm/rng.hpp"

using namespace bphmm;

namespace {

Representation randomRep(int n, int d, Rng& rng, const std::string& kind = "stationary") {
    Representation rep;
    rep.kind = kind;
    rep.vectors.resize(n, d);
    for (int i = 0; i < n; ++i) {
        rep.ids.push_back("s" + std::to_string(i));
        for (int c = 0; c < d; ++c) rep.vectors(i, c) = rng.normal();
    }
    return rep;
}

}  // namespace

TEST_CASE("pearson is exact on hand data and invariant to affine maps") {
    std::vector<double> a{1, 2, 3, 4};
    std::vector<double> up{2, 4, 6, 8};
    std::vector<double> down{8, 6, 4, 2};
    CHECK(pearson(a, up) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson(a, down) == doctest::Approx(-1.0).epsilon(1e-12));
    std::vector<double> b{0.3, -1.2, 2.0, 0.7};
    double base = pearson(a, b);
    std::vector<double> shifted;
    for (double v : b) shifted.push_back(3.0 * v - 7.0);
    CHECK(pearson(a, shifted) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("loocv ridge predictions match the closed form on a tiny problem") {
    // n=4, d=1; replicate the recipe by hand: standardize x and center y on
    // the full sample (population std), then per fold solve
    // w = x'y / (x'x + lambda) on the remaining rows
    Eigen::MatrixXd x(4, 1);
    x << 1.0, 2.0, 3.0, 4.0;
    std::vector<double> y{2.0, 4.1, 5.9, 8.2};
    const double lambda = 0.5;
    std::vector<double> preds = loocvRidgePredictions(x, y, lambda);
    REQUIRE(preds.size() == 4);
    double xm = 0.0, ym = 0.0;
    for (int i = 0; i < 4; ++i) {
        xm += x(i, 0) / 4.0;
        ym += y[static_cast<std::size_t>(i)] / 4.0;
    }
    double var = 0.0;
    for (int i = 0; i < 4; ++i) var += (x(i, 0) - xm) * (x(i, 0) - xm) / 4.0;
    double sd = std::sqrt(var);
    for (int held = 0; held < 4; ++held) {
        double xtx = 0.0, xty = 0.0;
        for (int i = 0; i < 4; ++i) {
            if (i == held) continue;
            double xs = (x(i, 0) - xm) / sd;
            xtx += xs * xs;
            xty += xs * (y[static_cast<std::size_t>(i)] - ym);
        }
        double w = xty / (xtx + lambda);
        double expected = w * (x(held, 0) - xm) / sd + ym;
        CHECK(preds[static_cast<std::size_t>(held)] ==
              doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("noiseless linear targets are recovered almost perfectly") {
    Rng rng(7);
    Representation rep = randomRep(40, 3, rng);
    Eigen::Vector3d w(1.5, -2.0, 0.5);
    std::vector<double> y;
    for (int i = 0; i < 40; ++i) y.push_back(rep.vectors.row(i).dot(w));
    for (RegressorKind kind : {RegressorKind::Ridge, RegressorKind::KernelRidge}) {
        PredictionReport report = loocv(rep, y, kind, 1);
        CHECK(report.rho >= 0.995);
        CHECK(report.folds == 40);
        CHECK(report.dropped == 0);
    }
    // forest is a step-function learner: looser but still strong
    CHECK(loocv(rep, y, RegressorKind::RandomForest, 1).rho >= 0.7);
}

TEST_CASE("prediction rho is near zero for permuted targets") {
    Rng rng(13);
    Representation rep = randomRep(60, 4, rng);
    std::vector<double> y;
    for (int i = 0; i < 60; ++i) y.push_back(rng.normal());  // independent of x
    double sumAbs = 0.0;
    int count = 0;
    for (RegressorKind kind : {RegressorKind::Ridge, RegressorKind::KernelRidge}) {
        PredictionReport report = loocv(rep, y, kind, 3);
        sumAbs += std::abs(report.rho);
        ++count;
    }
    // grid maximization inflates the null somewhat; stay well below signal level
    CHECK(sumAbs / count < 0.45);
}

TEST_CASE("prediction is invariant to affine feature maps for ridge") {
    Rng rng(29);
    Representation rep = randomRep(30, 2, rng);
    std::vector<double> y;
    for (int i = 0; i < 30; ++i) {
        y.push_back(rep.vectors(i, 0) - 0.5 * rep.vectors(i, 1) + 0.05 * rng.normal());
    }
    Representation scaled = rep;
    scaled.vectors.col(0) = rep.vectors.col(0) * 100.0;
    scaled.vectors.col(1) = rep.vectors.col(1).array() - 42.0;
    PredictionReport a = loocv(rep, y, RegressorKind::Ridge, 1);
    PredictionReport b = loocv(scaled, y, RegressorKind::Ridge, 1);
    // feature standardization makes the scaling irrelevant
    CHECK(a.rho == doctest::Approx(b.rho).epsilon(1e-9));
}

TEST_CASE("missing construct values are dropped from the folds") {
    Rng rng(5);
    Representation rep = randomRep(20, 2, rng);
    std::vector<double> y;
    for (int i = 0; i < 20; ++i) y.push_back(rep.vectors(i, 0));
    y[3] = std::nan("");
    y[11] = std::nan("");
    PredictionReport report = loocv(rep, y, RegressorKind::Ridge, 1);
    CHECK(report.folds == 18);
    CHECK(report.dropped == 2);
    CHECK(report.rho > 0.99);
}

TEST_CASE("degenerate inputs throw") {
    Rng rng(2);
    Representation rep = randomRep(10, 2, rng);
    std::vector<double> constant(10, 3.0);
    CHECK_THROWS_AS(loocv(rep, constant, RegressorKind::Ridge), std::invalid_argument);
    Representation tiny = randomRep(2, 2, rng);
    CHECK_THROWS_AS(loocv(tiny, {1.0, 2.0}, RegressorKind::Ridge), std::invalid_argument);
    std::vector<double> wrongLength(9, 1.0);
    CHECK_THROWS_AS(loocv(rep, wrongLength, RegressorKind::Ridge), std::invalid_argument);
}

TEST_CASE("huge ridge penalty collapses to the grand-mean prediction") {
    Eigen::MatrixXd x(5, 1);
    x << -2, -1, 0, 1, 2;
    std::vector<double> y{1.0, 3.0, 5.0, 7.0, 9.0};
    std::vector<double> preds = loocvRidgePredictions(x, y, 1e12);
    // weights shrink to ~0; prediction reverts to the sample intercept
    for (int held = 0; held < 5; ++held) {
        CHECK(preds[static_cast<std::size_t>(held)] == doctest::Approx(5.0).epsilon(1e-4));
    }
}

TEST_CASE("random forest is deterministic under a fixed seed") {
    Rng rng(17);
    Representation rep = randomRep(25, 3, rng);
    std::vector<double> y;
    for (int i = 0; i < 25; ++i) y.push_back(rep.vectors(i, 1) + 0.1 * rng.normal());
    PredictionReport a = loocv(rep, y, RegressorKind::RandomForest, 9);
    PredictionReport b = loocv(rep, y, RegressorKind::RandomForest, 9);
    CHECK(a.rho == b.rho);
    CHECK(a.rmse == b.rmse);
}

TEST_CASE("state attribution ranks the driving state first") {
    // stationary mass on state 1 fully determines y
    ModelFit fit;
    const int n = 12;
    for (int k = 0; k < 3; ++k) {
        ArState s;
        s.coeffs = Eigen::MatrixXd::Zero(1, 1);
        s.covariance = Eigen::MatrixXd::Identity(1, 1);
        fit.states.push_back(s);
    }
    fit.featureMatrix = Eigen::MatrixXi::Ones(n, 3);
    Rng rng(3);
    std::vector<double> y;
    for (int i = 0; i < n; ++i) {
        SeriesHmm hmm;
        hmm.id = "s" + std::to_string(i);
        hmm.active = {0, 1, 2};
        double p = 0.1 + 0.6 * rng.uniform();
        double split = rng.uniform();  // decorrelate the two filler states
        Eigen::VectorXd stat(3);
        stat << (1.0 - p) * split, p, (1.0 - p) * (1.0 - split);
        // transition matrix with rows equal to stat has stat as its stationary law
        hmm.trans.resize(3, 3);
        for (int r = 0; r < 3; ++r) hmm.trans.row(r) = stat.transpose();
        fit.hmms.push_back(hmm);
        StateSequence seq;
        seq.id = hmm.id;
        seq.z = {0, 1, 2};
        fit.sequences.push_back(seq);
        y.push_back(10.0 * p);
    }
    StateAttribution attr = attributeStates(fit, y, "target");
    CHECK(attr.construct == "target");
    REQUIRE(attr.coefficients.size() == 3);
    CHECK(attr.ranking[0] == 1);
    CHECK(std::abs(attr.coefficients[1]) > std::abs(attr.coefficients[0]));
    CHECK(std::abs(attr.coefficients[1]) > std::abs(attr.coefficients[2]));
}

TEST_CASE("regressor names round-trip") {
    for (const std::string& name : {"ridge", "kernel-ridge", "random-forest"}) {
        CHECK(toString(regressorFromString(name)) == name);
    }
    CHECK_THROWS_AS(regressorFromString("svm"), std::invalid_argument);
}
