#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "bphmm/markov.hpp"
#include "bphmm/model.hpp"

using namespace bphmm;

namespace {

MultiSeries seriesFrom(const std::string& id, const Eigen::MatrixXd& values) {
    MultiSeries s;
    s.id = id;
    s.values = values;
    for (int c = 0; c < values.cols(); ++c) s.schema.names.push_back("ch" + std::to_string(c));
    return s;
}

// AR(1) sample path with scalar coefficient a and noise std sigma per channel.
Eigen::MatrixXd arPath(int t, int d, double a, double sigma, Rng& rng) {
    Eigen::MatrixXd values(t, d);
    for (int c = 0; c < d; ++c) values(0, c) = rng.normal();
    for (int s = 1; s < t; ++s) {
        for (int c = 0; c < d; ++c) {
            values(s, c) = a * values(s - 1, c) + sigma * rng.normal();
        }
    }
    return values;
}

}  // namespace

TEST_CASE("ibp prior row and column moments match theory") {
    // E[dishes per customer] = alpha; E[total dishes] = alpha * H_n.
    Rng rng(2024);
    const int n = 50;
    const double alpha = 2.0;
    const int reps = 400;
    double totalDishes = 0.0;
    double firstRow = 0.0;
    for (int r = 0; r < reps; ++r) {
        Eigen::MatrixXi f = sampleIbpPrior(n, alpha, rng, /*forceNonempty=*/false);
        totalDishes += static_cast<double>(f.cols());
        firstRow += static_cast<double>(f.row(0).sum());
    }
    double harmonic = 0.0;
    for (int j = 1; j <= n; ++j) harmonic += 1.0 / j;
    double meanDishes = totalDishes / reps;
    // sd of total dishes is sqrt(alpha*H_n) ~ 3; 3 standard errors over 400 reps
    CHECK(std::abs(meanDishes - alpha * harmonic) < 3.0 * std::sqrt(alpha * harmonic / reps));
    CHECK(std::abs(firstRow / reps - alpha) < 3.0 * std::sqrt(alpha / reps));
}

TEST_CASE("ibp nonempty guard leaves no empty rows") {
    Rng rng(5);
    for (int r = 0; r < 50; ++r) {
        Eigen::MatrixXi f = sampleIbpPrior(8, 0.3, rng, /*forceNonempty=*/true);
        for (int i = 0; i < f.rows(); ++i) CHECK(f.row(i).sum() >= 1);
    }
}

TEST_CASE("arLogLik matches the multivariate normal density by hand") {
    // lag 0, identity covariance, y = 0 in 2d: log N(0; 0, I) = -log(2*pi)
    ArState state;
    state.coeffs = Eigen::MatrixXd::Zero(2, 0);
    state.covariance = Eigen::MatrixXd::Identity(2, 2);
    double ll = arLogLik(state, Eigen::VectorXd::Zero(2), Eigen::VectorXd(0));
    CHECK(ll == doctest::Approx(-std::log(2.0 * M_PI)).epsilon(1e-12));
}

TEST_CASE("arLogLik matches an independent Gaussian oracle with lag") {
    // diagonal A and Sigma decouple channels; compare to scalar normal pdfs
    ArState state;
    state.coeffs = Eigen::MatrixXd::Zero(2, 2);
    state.coeffs(0, 0) = 0.5;
    state.coeffs(1, 1) = -0.25;
    state.covariance = Eigen::Vector2d(0.7, 1.9).asDiagonal();
    Eigen::VectorXd history(2), y(2);
    history << 1.2, -0.4;
    y << 0.9, 0.3;
    auto normalLogPdf = [](double x, double mu, double var) {
        return -0.5 * (std::log(2.0 * M_PI * var) + (x - mu) * (x - mu) / var);
    };
    double oracle = normalLogPdf(y(0), 0.5 * history(0), 0.7) +
                    normalLogPdf(y(1), -0.25 * history(1), 1.9);
    CHECK(arLogLik(state, y, history) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("emissionLogLik lines up columns with lagged history") {
    ArState state;
    state.coeffs = Eigen::MatrixXd::Constant(1, 1, 0.5);
    state.covariance = Eigen::MatrixXd::Identity(1, 1);
    Eigen::MatrixXd values(3, 1);
    values << 2.0, 1.0, -1.0;
    Eigen::MatrixXd logE = emissionLogLik(seriesFrom("a", values), {state}, 1);
    REQUIRE(logE.rows() == 1);
    REQUIRE(logE.cols() == 2);
    auto normalLogPdf = [](double x, double mu) {
        return -0.5 * (std::log(2.0 * M_PI) + (x - mu) * (x - mu));
    };
    CHECK(logE(0, 0) == doctest::Approx(normalLogPdf(1.0, 1.0)).epsilon(1e-12));
    CHECK(logE(0, 1) == doctest::Approx(normalLogPdf(-1.0, 0.5)).epsilon(1e-12));
}

TEST_CASE("mniw prior draws center on the prior mean") {
    Rng rng(11);
    MniwPrior prior = MniwPrior::standard(2, 1);
    prior.meanCoeffs.setConstant(0.3);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(2, 2);
    const int reps = 4000;
    for (int r = 0; r < reps; ++r) {
        sum += sampleArParams({}, prior, rng).coeffs;
    }
    CHECK((sum / reps - prior.meanCoeffs).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("mniw posterior concentrates on the generating coefficient") {
    // scalar AR(1) with a = 0.8, sigma = 0.1, lots of data
    Rng rng(12);
    std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> obs;
    double x = 0.0;
    for (int t = 0; t < 20000; ++t) {
        double y = 0.8 * x + 0.1 * rng.normal();
        obs.push_back({Eigen::VectorXd::Constant(1, y), Eigen::VectorXd::Constant(1, x)});
        x = y;
    }
    MniwPrior prior = MniwPrior::standard(1, 1);
    double coeffSum = 0.0, varSum = 0.0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
        ArState s = sampleArParams(obs, prior, rng);
        coeffSum += s.coeffs(0, 0);
        varSum += s.covariance(0, 0);
    }
    CHECK(std::abs(coeffSum / reps - 0.8) < 0.02);
    CHECK(std::abs(varSum / reps - 0.01) < 0.005);
}

TEST_CASE("sampled transitions are row-stochastic and sticky") {
    Rng rng(4);
    StateSequence seq;
    seq.id = "a";
    seq.z = {0, 0, 1, 1, 0, 2, 2, 2, 1, 0};
    SeriesHmm hmm = sampleTransitions(seq, {0, 1, 2}, "a", 1.0, 1e6, rng);
    for (int i = 0; i < 3; ++i) {
        CHECK(hmm.trans.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(hmm.trans(i, i) > 0.999);  // kappa dominates
    }
}

TEST_CASE("transition posterior mean tracks observed counts") {
    Rng rng(9);
    StateSequence seq;
    seq.id = "a";
    // 0 -> 1 always, 1 -> 0 always
    for (int t = 0; t < 400; ++t) seq.z.push_back(t % 2);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(2, 2);
    const int reps = 2000;
    for (int r = 0; r < reps; ++r) {
        sum += sampleTransitions(seq, {0, 1}, "a", 1.0, 1.0, rng).trans;
    }
    Eigen::MatrixXd mean = sum / reps;
    // Dirichlet posterior mean: (counts + gamma + kappa on diag) / total
    CHECK(mean(0, 1) == doctest::Approx((199.0 + 1.0) / 203.0).epsilon(0.02));
    CHECK(mean(1, 0) == doctest::Approx((200.0 + 1.0) / 204.0).epsilon(0.02));
}

TEST_CASE("prior mean transitions have the closed form") {
    Eigen::MatrixXd p = priorMeanTransitions(3, 1.0, 10.0);
    CHECK(p(0, 0) == doctest::Approx(11.0 / 13.0).epsilon(1e-14));
    CHECK(p(0, 1) == doctest::Approx(1.0 / 13.0).epsilon(1e-14));
    CHECK(p.row(2).sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("birth and death acceptance ratios follow the prior odds at equal fit") {
    // with no likelihood change, accept prob = lambda / (u + 1) for birth
    const double alpha = 2.0;
    const int n = 8;
    const double lambda = alpha / n;
    CHECK(birthLogAcceptRatio(0.0, alpha, n, 0) ==
          doctest::Approx(std::log(lambda / 1.0)).epsilon(1e-14));
    CHECK(birthLogAcceptRatio(0.0, alpha, n, 3) ==
          doctest::Approx(std::log(lambda / 4.0)).epsilon(1e-14));
    CHECK(deathLogAcceptRatio(0.0, alpha, n, 2) ==
          doctest::Approx(std::log(2.0 / lambda)).epsilon(1e-14));
    // likelihood shift moves the ratio one-for-one in log space
    CHECK(birthLogAcceptRatio(1.5, alpha, n, 0) ==
          doctest::Approx(1.5 + std::log(lambda)).epsilon(1e-14));
}

TEST_CASE("fit with zero sweeps returns the single-state initialization") {
    Rng rng(3);
    Dataset ds;
    ds.series.push_back(seriesFrom("a", arPath(60, 2, 0.5, 1.0, rng)));
    ds.series.push_back(seriesFrom("b", arPath(60, 2, 0.5, 1.0, rng)));
    Hyperparams hyper;
    hyper.mcmc.sweeps = 0;
    ModelFit result = fit(ds, hyper);
    CHECK(result.stateCount() == 1);
    CHECK(result.featureMatrix == Eigen::MatrixXi::Ones(2, 1));
    REQUIRE(result.sequences.size() == 2);
    CHECK(result.sequences[0].z == std::vector<int>(59, 0));
    CHECK(result.loglikTrace.size() == 1);
}

TEST_CASE("fit is deterministic under a fixed seed") {
    Rng rng(8);
    Dataset ds;
    for (int i = 0; i < 3; ++i) {
        ds.series.push_back(seriesFrom("s" + std::to_string(i),
                                       arPath(80, 1, i % 2 ? 0.9 : -0.5, 0.5, rng)));
    }
    Hyperparams hyper;
    hyper.mcmc.sweeps = 15;
    hyper.mcmc.seed = 77;
    ModelFit a = fit(ds, hyper);
    ModelFit b = fit(ds, hyper);
    CHECK(a.featureMatrix == b.featureMatrix);
    REQUIRE(a.loglikTrace.size() == b.loglikTrace.size());
    for (std::size_t i = 0; i < a.loglikTrace.size(); ++i) {
        CHECK(a.loglikTrace[i] == b.loglikTrace[i]);
    }
    for (int i = 0; i < 3; ++i) {
        CHECK(a.sequences[static_cast<std::size_t>(i)].z ==
              b.sequences[static_cast<std::size_t>(i)].z);
        CHECK(a.hmms[static_cast<std::size_t>(i)].trans ==
              b.hmms[static_cast<std::size_t>(i)].trans);
    }
}

TEST_CASE("fit log joint trends upward from the cold start") {
    Rng rng(21);
    Dataset ds;
    for (int i = 0; i < 4; ++i) {
        ds.series.push_back(seriesFrom("s" + std::to_string(i),
                                       arPath(150, 1, i % 2 ? 0.9 : -0.7, 0.3, rng)));
    }
    Hyperparams hyper;
    hyper.mcmc.sweeps = 40;
    hyper.mcmc.seed = 5;
    ModelFit result = fit(ds, hyper);
    REQUIRE(result.loglikTrace.size() == 41);
    double first = result.loglikTrace.front();
    double last = result.loglikTrace.back();
    CHECK(last > first);  // stochastic but overwhelmingly reliable at this gap
    result.validate();
}

TEST_CASE("jointLogLik is invariant under a global state relabeling") {
    Rng rng(31);
    Dataset ds;
    ds.series.push_back(seriesFrom("a", arPath(50, 1, 0.6, 0.5, rng)));
    Hyperparams hyper;
    hyper.mcmc.sweeps = 10;
    hyper.mcmc.seed = 2;
    ModelFit result = fit(ds, hyper);
    if (result.stateCount() >= 2) {
        ModelFit permuted = result;
        // swap states 0 and 1 everywhere
        std::swap(permuted.states[0], permuted.states[1]);
        permuted.featureMatrix.col(0).swap(permuted.featureMatrix.col(1));
        for (auto& hmm : permuted.hmms) {
            std::vector<int> remapped;
            for (int g : hmm.active) remapped.push_back(g == 0 ? 1 : (g == 1 ? 0 : g));
            Eigen::MatrixXd reordered = hmm.trans;
            std::vector<int> order(remapped.size());
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](int x, int y) {
                return remapped[static_cast<std::size_t>(x)] <
                       remapped[static_cast<std::size_t>(y)];
            });
            Eigen::MatrixXd newTrans(hmm.trans.rows(), hmm.trans.cols());
            for (std::size_t a = 0; a < order.size(); ++a) {
                for (std::size_t b = 0; b < order.size(); ++b) {
                    newTrans(static_cast<int>(a), static_cast<int>(b)) =
                        hmm.trans(order[a], order[b]);
                }
            }
            std::sort(remapped.begin(), remapped.end());
            hmm.active = remapped;
            hmm.trans = newTrans;
        }
        for (auto& seq : permuted.sequences) {
            for (auto& z : seq.z) z = z == 0 ? 1 : (z == 1 ? 0 : z);
        }
        CHECK(jointLogLik(permuted, ds) ==
              doctest::Approx(jointLogLik(result, ds)).epsilon(1e-10));
    }
}

TEST_CASE("pruneRareStates drops rare states and re-decodes") {
    Rng rng(6);
    Dataset ds;
    for (int i = 0; i < 10; ++i) {
        ds.series.push_back(seriesFrom("s" + std::to_string(i), arPath(30, 1, 0.5, 1.0, rng)));
    }
    Hyperparams hyper;
    hyper.mcmc.sweeps = 0;
    ModelFit base = fit(ds, hyper);
    // graft a second state used by a single series: below the 20% cutoff
    base.states.push_back(base.states[0]);
    base.featureMatrix.conservativeResize(Eigen::NoChange, 2);
    base.featureMatrix.col(1).setZero();
    base.featureMatrix(0, 1) = 1;
    base.hmms[0].active = {0, 1};
    base.hmms[0].trans = priorMeanTransitions(2, 1.0, 10.0);
    for (std::size_t t = 0; t < base.sequences[0].z.size(); t += 2) {
        base.sequences[0].z[t] = 1;
    }
    ModelFit pruned = pruneRareStates(base, 0.2, &ds);
    CHECK(pruned.stateCount() == 1);
    CHECK(pruned.featureMatrix.cols() == 1);
    CHECK(pruned.sequences[0].z == std::vector<int>(base.sequences[0].z.size(), 0));
    CHECK(pruned.pruneFallbacks.empty());
    pruned.validate();
}

TEST_CASE("pruneRareStates keeps the top state when a row would empty") {
    Rng rng(6);
    Dataset ds;
    ds.series.push_back(seriesFrom("only", arPath(30, 1, 0.5, 1.0, rng)));
    Hyperparams hyper;
    hyper.mcmc.sweeps = 0;
    ModelFit base = fit(ds, hyper);
    // one series, one state: any threshold > 1.0 would drop everything
    ModelFit pruned = pruneRareStates(base, 1.5, &ds);
    CHECK(pruned.stateCount() == 1);
    REQUIRE(pruned.pruneFallbacks.size() == 1);
    CHECK(pruned.pruneFallbacks[0] == "only");
}

TEST_CASE("rng dirichlet draws have the right mean") {
    Rng rng(99);
    Eigen::VectorXd conc(3);
    conc << 2.0, 5.0, 3.0;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(3);
    const int reps = 20000;
    for (int r = 0; r < reps; ++r) sum += rng.dirichlet(conc);
    Eigen::VectorXd mean = sum / reps;
    CHECK(mean(0) == doctest::Approx(0.2).epsilon(0.05));
    CHECK(mean(1) == doctest::Approx(0.5).epsilon(0.03));
    CHECK(mean(2) == doctest::Approx(0.3).epsilon(0.04));
}

TEST_CASE("derived rng streams are reproducible and distinct") {
    Rng root(123);
    Rng a = root.derive(1);
    Rng b = root.derive(2);
    Rng a2 = Rng(123).derive(1);
    CHECK(a.uniform() == a2.uniform());
    CHECK(a.uniform() != b.uniform());
}
