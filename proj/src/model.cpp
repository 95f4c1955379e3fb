#include "bphmm/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <stdexcept>

#include <Eigen/Dense>

#include "bphmm/markov.hpp"

namespace bphmm {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::VectorXd regressors(const MultiSeries& series, int lag, Eigen::Index t) {
    const Eigen::Index d = series.channels();
    Eigen::VectorXd x(static_cast<Eigen::Index>(lag) * d);
    for (int l = 0; l < lag; ++l) {
        x.segment(static_cast<Eigen::Index>(l) * d, d) =
            series.values.row(t - 1 - l).transpose();
    }
    return x;
}

Eigen::MatrixXd invWishartDraw(const Eigen::MatrixXd& scale, double dof, Rng& rng) {
    const Eigen::Index d = scale.rows();
    // Bartlett decomposition of Wishart(scale^-1, dof), then invert
    Eigen::MatrixXd scaleInv = scale.llt().solve(Eigen::MatrixXd::Identity(d, d));
    Eigen::MatrixXd L = Eigen::MatrixXd(scaleInv.llt().matrixL());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        A(i, i) = std::sqrt(rng.chiSquared(dof - static_cast<double>(i)));
        for (Eigen::Index j = 0; j < i; ++j) A(i, j) = rng.normal();
    }
    Eigen::MatrixXd W = L * A * A.transpose() * L.transpose();
    Eigen::MatrixXd sigma = W.llt().solve(Eigen::MatrixXd::Identity(d, d));
    return 0.5 * (sigma + sigma.transpose());
}

struct EmissionCache {
    // one (K x T-lag) matrix per series, rows indexed by global state id
    std::vector<Eigen::MatrixXd> logE;

    void rebuild(const Dataset& dataset, const std::vector<ArState>& states, int lag) {
        logE.resize(dataset.series.size());
        for (std::size_t i = 0; i < dataset.series.size(); ++i) {
            logE[i] = emissionLogLik(dataset.series[i], states, lag);
        }
    }

    void appendState(const Dataset& dataset, const ArState& state, int lag) {
        std::vector<ArState> one{state};
        for (std::size_t i = 0; i < dataset.series.size(); ++i) {
            Eigen::MatrixXd row = emissionLogLik(dataset.series[i], one, lag);
            logE[i].conservativeResize(logE[i].rows() + 1, Eigen::NoChange);
            logE[i].row(logE[i].rows() - 1) = row.row(0);
        }
    }
};

Eigen::MatrixXd subEmission(const Eigen::MatrixXd& logE, const std::vector<int>& active) {
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(active.size()), logE.cols());
    for (std::size_t a = 0; a < active.size(); ++a) {
        sub.row(static_cast<Eigen::Index>(a)) = logE.row(active[a]);
    }
    return sub;
}

double activeSetLogLik(const Eigen::MatrixXd& logE, const std::vector<int>& active,
                       double gamma, double kappa) {
    const int k = static_cast<int>(active.size());
    Eigen::MatrixXd trans = priorMeanTransitions(k, gamma, kappa);
    Eigen::MatrixXd logTrans = trans.array().log();
    Eigen::VectorXd logInit =
        Eigen::VectorXd::Constant(k, -std::log(static_cast<double>(k)));
    return forwardLogLik(subEmission(logE, active), logTrans, logInit);
}

std::vector<int> activeOfRow(const Eigen::MatrixXi& featureMatrix, int row) {
    std::vector<int> active;
    for (int k = 0; k < featureMatrix.cols(); ++k) {
        if (featureMatrix(row, k)) active.push_back(k);
    }
    return active;
}

Eigen::MatrixXd restrictTransitions(const SeriesHmm& hmm, const std::vector<int>& keep) {
    const int k = static_cast<int>(keep.size());
    Eigen::MatrixXd trans(k, k);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            int li = hmm.localIndex(keep[i]);
            int lj = hmm.localIndex(keep[j]);
            trans(i, j) = (li >= 0 && lj >= 0) ? hmm.trans(li, lj) : 0.0;
        }
    }
    for (int i = 0; i < k; ++i) {
        double s = trans.row(i).sum();
        if (s <= 0.0) {
            trans.row(i).setConstant(1.0 / static_cast<double>(k));
        } else {
            trans.row(i) /= s;
        }
    }
    return trans;
}

// Log probability of the left-ordered-form equivalence class of F under the
// IBP (empty columns ignored; the exp(-alpha H_N) constant cancels in ratios
// but is included for completeness).
double ibpLogProb(const Eigen::MatrixXi& featureMatrix, double alpha) {
    const int n = static_cast<int>(featureMatrix.rows());
    double harmonic = 0.0;
    for (int j = 1; j <= n; ++j) harmonic += 1.0 / j;
    double logP = -alpha * harmonic;
    std::map<std::vector<int>, int> patternCounts;
    for (int k = 0; k < featureMatrix.cols(); ++k) {
        int m = featureMatrix.col(k).sum();
        if (m == 0) continue;
        logP += std::log(alpha) + std::lgamma(static_cast<double>(n - m + 1)) +
                std::lgamma(static_cast<double>(m)) -
                std::lgamma(static_cast<double>(n + 1));
        std::vector<int> pattern(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) pattern[static_cast<std::size_t>(i)] = featureMatrix(i, k);
        ++patternCounts[pattern];
    }
    for (const auto& [pattern, count] : patternCounts) {
        logP -= std::lgamma(static_cast<double>(count + 1));
    }
    return logP;
}

}  // namespace

MniwPrior MniwPrior::standard(int dims, int lag) {
    MniwPrior prior;
    const Eigen::Index p = static_cast<Eigen::Index>(dims) * lag;
    prior.meanCoeffs = Eigen::MatrixXd::Zero(dims, p);
    prior.columnScale = Eigen::MatrixXd::Identity(p, p);
    prior.iwScale = Eigen::MatrixXd::Identity(dims, dims);
    prior.iwDof = dims + 2;
    return prior;
}

void Hyperparams::validate(int dims) const {
    if (alpha <= 0.0) throw std::invalid_argument("alpha must be > 0");
    if (lag < 0) throw std::invalid_argument("lag must be >= 0");
    if (stickyKappa < 0.0) throw std::invalid_argument("kappa must be >= 0");
    if (dirichletGamma <= 0.0) throw std::invalid_argument("gamma must be > 0");
    if (prior.iwDof <= dims - 1) {
        throw std::invalid_argument("inverse-Wishart dof must exceed D - 1");
    }
    if (prior.meanCoeffs.rows() != dims ||
        prior.meanCoeffs.cols() != static_cast<Eigen::Index>(dims) * lag) {
        throw std::invalid_argument("MNIW mean matrix has wrong shape");
    }
}

int SeriesHmm::localIndex(int globalState) const {
    auto it = std::lower_bound(active.begin(), active.end(), globalState);
    if (it == active.end() || *it != globalState) return -1;
    return static_cast<int>(it - active.begin());
}

void ModelFit::validate() const {
    const int k = stateCount();
    const int n = seriesCount();
    if (featureMatrix.rows() != n || featureMatrix.cols() != k) {
        throw std::runtime_error("feature matrix shape inconsistent with fit");
    }
    for (int i = 0; i < n; ++i) {
        if (featureMatrix.row(i).sum() < 1) {
            throw std::runtime_error("feature row " + std::to_string(i) + " is empty");
        }
    }
    for (const auto& state : states) {
        Eigen::LLT<Eigen::MatrixXd> llt(state.covariance);
        if (llt.info() != Eigen::Success) {
            throw std::runtime_error("state covariance not SPD");
        }
    }
    for (int i = 0; i < n; ++i) {
        const auto& hmm = hmms[static_cast<std::size_t>(i)];
        for (Eigen::Index r = 0; r < hmm.trans.rows(); ++r) {
            if (std::abs(hmm.trans.row(r).sum() - 1.0) > 1e-12 ||
                hmm.trans.row(r).minCoeff() < 0.0) {
                throw std::runtime_error("transition row of series " + hmm.id +
                                         " is not a distribution");
            }
        }
        for (int z : sequences[static_cast<std::size_t>(i)].z) {
            if (hmm.localIndex(z) < 0) {
                throw std::runtime_error("sequence of series " + hmm.id +
                                         " leaves its active set");
            }
        }
    }
}

Eigen::MatrixXi sampleIbpPrior(int n, double alpha, Rng& rng, bool forceNonempty) {
    if (n < 1) throw std::invalid_argument("need at least one customer");
    if (alpha <= 0.0) throw std::invalid_argument("alpha must be > 0");
    std::vector<std::vector<int>> rows;
    std::vector<int> counts;
    for (int j = 1; j <= n; ++j) {
        for (int attempt = 0;; ++attempt) {
            std::vector<int> row(counts.size(), 0);
            for (std::size_t k = 0; k < counts.size(); ++k) {
                row[k] = rng.bernoulli(static_cast<double>(counts[k]) / j) ? 1 : 0;
            }
            int fresh = rng.poisson(alpha / j);
            if (forceNonempty && fresh == 0 &&
                std::none_of(row.begin(), row.end(), [](int v) { return v != 0; })) {
                if (attempt < 10000) continue;
            }
            for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += row[k];
            for (int f = 0; f < fresh; ++f) {
                row.push_back(1);
                counts.push_back(1);
            }
            rows.push_back(std::move(row));
            break;
        }
    }
    Eigen::MatrixXi F = Eigen::MatrixXi::Zero(n, static_cast<int>(counts.size()));
    for (int i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < rows[static_cast<std::size_t>(i)].size(); ++k) {
            F(i, static_cast<int>(k)) = rows[static_cast<std::size_t>(i)][k];
        }
    }
    return F;
}

double arLogLik(const ArState& state, const Eigen::VectorXd& y,
                const Eigen::VectorXd& history) {
    const Eigen::Index d = state.dims();
    if (history.size() != state.coeffs.cols()) {
        throw std::invalid_argument("history length does not match AR order");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(state.covariance);
    if (llt.info() != Eigen::Success) {
        throw std::domain_error("emission covariance is not SPD");
    }
    Eigen::VectorXd resid = y;
    if (history.size() > 0) resid -= state.coeffs * history;
    double logDet = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        logDet += 2.0 * std::log(llt.matrixL()(i, i));
    }
    double quad = resid.dot(llt.solve(resid));
    return -0.5 * (static_cast<double>(d) * kLog2Pi + logDet + quad);
}

Eigen::MatrixXd emissionLogLik(const MultiSeries& series,
                               const std::vector<ArState>& states, int lag) {
    const Eigen::Index T = series.length();
    const Eigen::Index d = series.channels();
    const Eigen::Index steps = T - lag;
    if (steps < 1) throw std::invalid_argument("series '" + series.id + "' too short");
    Eigen::MatrixXd logE(static_cast<Eigen::Index>(states.size()), steps);
    for (std::size_t k = 0; k < states.size(); ++k) {
        const auto& state = states[k];
        Eigen::LLT<Eigen::MatrixXd> llt(state.covariance);
        if (llt.info() != Eigen::Success) {
            throw std::domain_error("emission covariance is not SPD");
        }
        double logDet = 0.0;
        for (Eigen::Index i = 0; i < d; ++i) {
            logDet += 2.0 * std::log(llt.matrixL()(i, i));
        }
        const double base = -0.5 * (static_cast<double>(d) * kLog2Pi + logDet);
        for (Eigen::Index s = 0; s < steps; ++s) {
            Eigen::Index t = s + lag;
            Eigen::VectorXd resid = series.values.row(t).transpose();
            if (lag > 0) resid -= state.coeffs * regressors(series, lag, t);
            logE(static_cast<Eigen::Index>(k), s) = base - 0.5 * resid.dot(llt.solve(resid));
        }
    }
    return logE;
}

StateSequence sampleStateSequence(const MultiSeries& series, const SeriesHmm& hmm,
                                  const std::vector<ArState>& states, int lag,
                                  Rng& rng) {
    if (hmm.active.empty()) throw std::invalid_argument("empty active set");
    if (series.length() <= lag) {
        throw std::invalid_argument("series '" + series.id + "' shorter than lag + 1");
    }
    std::vector<ArState> sub;
    sub.reserve(hmm.active.size());
    for (int g : hmm.active) sub.push_back(states[static_cast<std::size_t>(g)]);
    Eigen::MatrixXd logE = emissionLogLik(series, sub, lag);
    Eigen::MatrixXd logTrans = hmm.trans.array().max(1e-300).log();
    const int k = static_cast<int>(hmm.active.size());
    Eigen::VectorXd logInit =
        Eigen::VectorXd::Constant(k, -std::log(static_cast<double>(k)));
    std::vector<int> local = ffbsSample(logE, logTrans, logInit, rng);
    StateSequence seq;
    seq.id = series.id;
    seq.z.reserve(local.size());
    for (int l : local) seq.z.push_back(hmm.active[static_cast<std::size_t>(l)]);
    return seq;
}

ArState sampleArParams(const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& obs,
                       const MniwPrior& prior, Rng& rng) {
    const Eigen::Index d = prior.meanCoeffs.rows();
    const Eigen::Index p = prior.meanCoeffs.cols();
    ArState state;
    if (p == 0) {
        Eigen::MatrixXd scale = prior.iwScale;
        double dof = prior.iwDof;
        for (const auto& [y, x] : obs) {
            scale += y * y.transpose();
            dof += 1.0;
        }
        state.coeffs = Eigen::MatrixXd::Zero(d, 0);
        state.covariance = invWishartDraw(scale, dof, rng);
        return state;
    }
    Eigen::MatrixXd vInv =
        prior.columnScale.llt().solve(Eigen::MatrixXd::Identity(p, p));
    Eigen::MatrixXd sxx = vInv;
    Eigen::MatrixXd syx = prior.meanCoeffs * vInv;
    Eigen::MatrixXd syy = prior.meanCoeffs * vInv * prior.meanCoeffs.transpose();
    for (const auto& [y, x] : obs) {
        sxx += x * x.transpose();
        syx += y * x.transpose();
        syy += y * y.transpose();
    }
    Eigen::LLT<Eigen::MatrixXd> sxxLlt(sxx);
    Eigen::MatrixXd sxxInv = sxxLlt.solve(Eigen::MatrixXd::Identity(p, p));
    Eigen::MatrixXd postMean = syx * sxxInv;
    Eigen::MatrixXd postScale = prior.iwScale + syy - postMean * syx.transpose();
    postScale = 0.5 * (postScale + postScale.transpose());
    double postDof = prior.iwDof + static_cast<double>(obs.size());

    state.covariance = invWishartDraw(postScale, postDof, rng);
    Eigen::MatrixXd rowChol = Eigen::MatrixXd(state.covariance.llt().matrixL());
    Eigen::MatrixXd colChol = Eigen::MatrixXd(sxxInv.llt().matrixL());
    Eigen::MatrixXd z(d, p);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < p; ++j) z(i, j) = rng.normal();
    }
    state.coeffs = postMean + rowChol * z * colChol.transpose();
    return state;
}

SeriesHmm sampleTransitions(const StateSequence& seq, const std::vector<int>& active,
                            const std::string& id, double gamma, double kappa,
                            Rng& rng) {
    const int k = static_cast<int>(active.size());
    SeriesHmm hmm;
    hmm.id = id;
    hmm.active = active;
    std::sort(hmm.active.begin(), hmm.active.end());
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(k, k);
    for (std::size_t t = 1; t < seq.z.size(); ++t) {
        int a = hmm.localIndex(seq.z[t - 1]);
        int b = hmm.localIndex(seq.z[t]);
        if (a >= 0 && b >= 0) counts(a, b) += 1.0;
    }
    hmm.trans.resize(k, k);
    for (int i = 0; i < k; ++i) {
        Eigen::VectorXd conc = counts.row(i).transpose().array() + gamma;
        conc(i) += kappa;
        hmm.trans.row(i) = rng.dirichlet(conc).transpose();
    }
    return hmm;
}

Eigen::MatrixXd priorMeanTransitions(int k, double gamma, double kappa) {
    double total = gamma * static_cast<double>(k) + kappa;
    Eigen::MatrixXd trans = Eigen::MatrixXd::Constant(k, k, gamma / total);
    trans.diagonal().setConstant((gamma + kappa) / total);
    return trans;
}

double birthLogAcceptRatio(double deltaLoglik, double alpha, int seriesCount,
                           int uniqueCount) {
    double lambda = alpha / static_cast<double>(seriesCount);
    return deltaLoglik + std::log(lambda) - std::log(static_cast<double>(uniqueCount + 1));
}

double deathLogAcceptRatio(double deltaLoglik, double alpha, int seriesCount,
                           int uniqueCount) {
    double lambda = alpha / static_cast<double>(seriesCount);
    return deltaLoglik - std::log(lambda) + std::log(static_cast<double>(uniqueCount));
}

ModelFit resampleFeatures(ModelFit fit, const Dataset& dataset, Rng& rng) {
    const int n = fit.seriesCount();
    const double gamma = fit.hyper.dirichletGamma;
    const double kappa = fit.hyper.stickyKappa;
    const int lag = fit.hyper.lag;

    EmissionCache cache;
    cache.rebuild(dataset, fit.states, lag);

    for (int i = 0; i < n; ++i) {
        // shared-state Gibbs toggles
        for (int k = 0; k < fit.featureMatrix.cols(); ++k) {
            int mMinus = fit.featureMatrix.col(k).sum() - fit.featureMatrix(i, k);
            if (mMinus == 0) continue;  // unique or unused: birth/death territory
            std::vector<int> with, without;
            for (int c = 0; c < fit.featureMatrix.cols(); ++c) {
                if (c == k || fit.featureMatrix(i, c)) {
                    if (c != k) without.push_back(c);
                    with.push_back(c);
                }
            }
            if (without.empty()) {
                fit.featureMatrix(i, k) = 1;  // row must stay nonempty
                continue;
            }
            double lWith = activeSetLogLik(cache.logE[static_cast<std::size_t>(i)], with,
                                           gamma, kappa);
            double lWithout = activeSetLogLik(cache.logE[static_cast<std::size_t>(i)],
                                              without, gamma, kappa);
            double logOdds = std::log(static_cast<double>(mMinus)) -
                             std::log(static_cast<double>(n - mMinus)) + lWith - lWithout;
            double pOn = 1.0 / (1.0 + std::exp(-logOdds));
            fit.featureMatrix(i, k) = rng.bernoulli(pOn) ? 1 : 0;
        }

        // unique-state birth/death
        std::vector<int> uniques;
        std::vector<int> active = activeOfRow(fit.featureMatrix, i);
        for (int k : active) {
            if (fit.featureMatrix.col(k).sum() == 1) uniques.push_back(k);
        }
        if (rng.bernoulli(0.5)) {
            ArState born = sampleArParams({}, fit.hyper.prior, rng);
            cache.appendState(dataset, born, lag);
            int newId = static_cast<int>(fit.states.size());
            std::vector<int> with = active;
            with.push_back(newId);
            double lOld = activeSetLogLik(cache.logE[static_cast<std::size_t>(i)], active,
                                          gamma, kappa);
            double lNew = activeSetLogLik(cache.logE[static_cast<std::size_t>(i)], with,
                                          gamma, kappa);
            double logA = birthLogAcceptRatio(lNew - lOld, fit.hyper.alpha, n,
                                              static_cast<int>(uniques.size()));
            if (std::log(rng.uniform()) < logA) {
                fit.states.push_back(born);
                fit.featureMatrix.conservativeResize(Eigen::NoChange,
                                                     fit.featureMatrix.cols() + 1);
                fit.featureMatrix.col(fit.featureMatrix.cols() - 1).setZero();
                fit.featureMatrix(i, fit.featureMatrix.cols() - 1) = 1;
            } else {
                // drop the tentative cache row
                for (auto& e : cache.logE) e.conservativeResize(e.rows() - 1, Eigen::NoChange);
            }
        } else if (!uniques.empty() && active.size() > 1) {
            int victim = uniques[static_cast<std::size_t>(
                rng.uniformInt(0, static_cast<int>(uniques.size()) - 1))];
            std::vector<int> without;
            for (int k : active) {
                if (k != victim) without.push_back(k);
            }
            double lOld = activeSetLogLik(cache.logE[static_cast<std::size_t>(i)], active,
                                          gamma, kappa);
            double lNew = activeSetLogLik(cache.logE[static_cast<std::size_t>(i)], without,
                                          gamma, kappa);
            double logA = deathLogAcceptRatio(lNew - lOld, fit.hyper.alpha, n,
                                              static_cast<int>(uniques.size()));
            if (std::log(rng.uniform()) < logA) {
                fit.featureMatrix(i, victim) = 0;
            }
        }
    }

    // split-merge moves: per-series toggles cannot retire a state shared by
    // several series (each would have to drop it alone against the
    // likelihood), so duplicated dynamics accumulate without a global move.
    // Merge folds all users of one state onto another; split is its reverse
    // with a three-way user assignment (keep / new / both) and prior-drawn
    // parameters, making the pair a valid MH kernel with computable
    // proposal odds.
    const int mergeAttempts = 8;
    for (int attempt = 0; attempt < mergeAttempts; ++attempt) {
        std::vector<int> cols;
        for (int k = 0; k < fit.featureMatrix.cols(); ++k) {
            if (fit.featureMatrix.col(k).sum() > 0) cols.push_back(k);
        }
        const int kCount = static_cast<int>(cols.size());
        if (rng.bernoulli(0.5)) {
            if (kCount < 2) continue;
            int ia = rng.uniformInt(0, kCount - 1);
            int ib = rng.uniformInt(0, kCount - 2);
            if (ib >= ia) ++ib;
            int a = cols[static_cast<std::size_t>(ia)];
            int b = cols[static_cast<std::size_t>(ib)];
            // refit the surviving state from the pooled frames of both states;
            // without the refit, parameters adapted to each user set make any
            // merge look costly even when the pooled dynamics are identical
            std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pooled;
            for (int i = 0; i < n; ++i) {
                const auto& series = dataset.series[static_cast<std::size_t>(i)];
                const auto& seq = fit.sequences[static_cast<std::size_t>(i)];
                for (std::size_t t = 0; t < seq.z.size(); ++t) {
                    if (seq.z[t] != a && seq.z[t] != b) continue;
                    Eigen::Index row = static_cast<Eigen::Index>(t) + lag;
                    pooled.emplace_back(series.values.row(row).transpose(),
                                        lag > 0 ? regressors(series, lag, row)
                                                : Eigen::VectorXd(0));
                }
            }
            ArState merged = sampleArParams(pooled, fit.hyper.prior, rng);
            std::vector<Eigen::VectorXd> savedRows;
            for (int i = 0; i < n; ++i) {
                savedRows.push_back(cache.logE[static_cast<std::size_t>(i)].row(a));
            }
            {
                std::vector<ArState> one{merged};
                for (int i = 0; i < n; ++i) {
                    cache.logE[static_cast<std::size_t>(i)].row(a) =
                        emissionLogLik(dataset.series[static_cast<std::size_t>(i)], one,
                                       lag)
                            .row(0);
                }
            }
            double deltaL = 0.0;
            for (int i = 0; i < n; ++i) {
                if (!fit.featureMatrix(i, a) && !fit.featureMatrix(i, b)) continue;
                std::vector<int> oldActive = activeOfRow(fit.featureMatrix, i);
                std::vector<int> newActive;
                for (int c : oldActive) {
                    if (c != b) newActive.push_back(c);
                }
                if (!fit.featureMatrix(i, a)) {
                    newActive.push_back(a);
                    std::sort(newActive.begin(), newActive.end());
                }
                // old term uses the original row of state a
                Eigen::VectorXd newRow = cache.logE[static_cast<std::size_t>(i)].row(a);
                cache.logE[static_cast<std::size_t>(i)].row(a) =
                    savedRows[static_cast<std::size_t>(i)];
                double oldLik = activeSetLogLik(cache.logE[static_cast<std::size_t>(i)],
                                                oldActive, gamma, kappa);
                cache.logE[static_cast<std::size_t>(i)].row(a) = newRow;
                deltaL += activeSetLogLik(cache.logE[static_cast<std::size_t>(i)],
                                          newActive, gamma, kappa) -
                          oldLik;
            }
            Eigen::MatrixXi proposed = fit.featureMatrix;
            for (int i = 0; i < n; ++i) {
                if (proposed(i, b)) {
                    proposed(i, a) = 1;
                    proposed(i, b) = 0;
                }
            }
            // posterior-ratio acceptance without the reverse-split proposal
            // odds: the (1/3)^m reverse term would veto merging any state
            // shared by more than a few series, freezing duplicates in place
            double logAccept = deltaL + ibpLogProb(proposed, fit.hyper.alpha) -
                               ibpLogProb(fit.featureMatrix, fit.hyper.alpha);
            if (std::log(rng.uniform()) < logAccept) {
                fit.featureMatrix = proposed;
                fit.states[static_cast<std::size_t>(a)] = merged;
            } else {
                for (int i = 0; i < n; ++i) {
                    cache.logE[static_cast<std::size_t>(i)].row(a) =
                        savedRows[static_cast<std::size_t>(i)];
                }
            }
        } else {
            if (kCount < 1 || fit.featureMatrix.cols() >= 64) continue;
            int s = cols[static_cast<std::size_t>(rng.uniformInt(0, kCount - 1))];
            std::vector<int> users;
            for (int i = 0; i < n; ++i) {
                if (fit.featureMatrix(i, s)) users.push_back(i);
            }
            // 0 = keep only, 1 = new only, 2 = both
            std::vector<int> assignment;
            int keepCount = 0, newCount = 0;
            for (std::size_t u = 0; u < users.size(); ++u) {
                int outcome = rng.uniformInt(0, 2);
                assignment.push_back(outcome);
                if (outcome != 1) ++keepCount;
                if (outcome != 0) ++newCount;
            }
            if (keepCount == 0 || newCount == 0) continue;
            ArState born = sampleArParams({}, fit.hyper.prior, rng);
            cache.appendState(dataset, born, lag);
            int newId = static_cast<int>(fit.states.size());
            double deltaL = 0.0;
            Eigen::MatrixXi proposed = fit.featureMatrix;
            proposed.conservativeResize(Eigen::NoChange, fit.featureMatrix.cols() + 1);
            proposed.col(proposed.cols() - 1).setZero();
            for (std::size_t u = 0; u < users.size(); ++u) {
                int i = users[u];
                if (assignment[u] == 0) continue;
                std::vector<int> oldActive = activeOfRow(fit.featureMatrix, i);
                std::vector<int> newActive;
                for (int c : oldActive) {
                    if (c != s || assignment[u] == 2) newActive.push_back(c);
                }
                newActive.push_back(newId);
                deltaL += activeSetLogLik(cache.logE[static_cast<std::size_t>(i)],
                                          newActive, gamma, kappa) -
                          activeSetLogLik(cache.logE[static_cast<std::size_t>(i)],
                                          oldActive, gamma, kappa);
                if (assignment[u] == 1) proposed(i, s) = 0;
                proposed(i, proposed.cols() - 1) = 1;
            }
            double logAccept =
                deltaL + ibpLogProb(proposed, fit.hyper.alpha) -
                ibpLogProb(fit.featureMatrix, fit.hyper.alpha) -
                std::log(static_cast<double>((kCount + 1) * kCount)) +
                std::log(static_cast<double>(kCount)) +
                static_cast<double>(users.size()) * std::log(3.0);
            if (std::log(rng.uniform()) < logAccept) {
                fit.states.push_back(born);
                fit.featureMatrix = proposed;
            } else {
                for (auto& e : cache.logE) e.conservativeResize(e.rows() - 1, Eigen::NoChange);
            }
        }
    }

    // compact empty columns and remap state ids
    std::vector<int> keep;
    for (int k = 0; k < fit.featureMatrix.cols(); ++k) {
        if (fit.featureMatrix.col(k).sum() > 0) keep.push_back(k);
    }
    std::map<int, int> remap;
    for (std::size_t j = 0; j < keep.size(); ++j) {
        remap[keep[static_cast<std::size_t>(j)]] = static_cast<int>(j);
    }
    Eigen::MatrixXi compacted(n, static_cast<int>(keep.size()));
    std::vector<ArState> keptStates;
    for (std::size_t j = 0; j < keep.size(); ++j) {
        compacted.col(static_cast<int>(j)) = fit.featureMatrix.col(keep[j]);
        keptStates.push_back(fit.states[static_cast<std::size_t>(keep[j])]);
    }
    fit.featureMatrix = compacted;
    fit.states = std::move(keptStates);

    // rebuild per-series HMMs over the new active sets, preserving retained
    // transition mass, then re-decode so sequences stay inside their sets
    for (int i = 0; i < n; ++i) {
        auto& hmm = fit.hmms[static_cast<std::size_t>(i)];
        std::vector<int> newActive = activeOfRow(fit.featureMatrix, i);
        std::vector<int> oldMapped;  // previous active set in compacted ids
        for (int oldId : hmm.active) {
            auto it = remap.find(oldId);
            if (it != remap.end()) oldMapped.push_back(it->second);
        }
        SeriesHmm rebuilt;
        rebuilt.id = hmm.id;
        rebuilt.active = newActive;
        const int k = static_cast<int>(newActive.size());
        Eigen::MatrixXd prior = priorMeanTransitions(k, gamma, kappa);
        rebuilt.trans = prior;
        // copy over rows for state pairs that survived under their old ids
        for (int a = 0; a < k; ++a) {
            int oldA = keep[static_cast<std::size_t>(newActive[static_cast<std::size_t>(a)])];
            int la = hmm.localIndex(oldA);
            if (la < 0) continue;
            double retained = 0.0;
            for (int b = 0; b < k; ++b) {
                int oldB = keep[static_cast<std::size_t>(newActive[static_cast<std::size_t>(b)])];
                int lb = hmm.localIndex(oldB);
                if (lb >= 0) {
                    rebuilt.trans(a, b) = hmm.trans(la, lb);
                    retained += hmm.trans(la, lb);
                } else {
                    rebuilt.trans(a, b) = prior(a, b);
                    retained += prior(a, b);
                }
            }
            rebuilt.trans.row(a) /= retained;
        }
        bool changed = rebuilt.active != oldMapped ||
                       oldMapped.size() != hmm.active.size();
        hmm = std::move(rebuilt);
        auto& seq = fit.sequences[static_cast<std::size_t>(i)];
        if (changed) {
            std::vector<ArState> sub;
            for (int g : hmm.active) sub.push_back(fit.states[static_cast<std::size_t>(g)]);
            Eigen::MatrixXd logE =
                emissionLogLik(dataset.series[static_cast<std::size_t>(i)], sub, lag);
            Eigen::MatrixXd logTrans = hmm.trans.array().max(1e-300).log();
            Eigen::VectorXd logInit = Eigen::VectorXd::Constant(
                static_cast<int>(hmm.active.size()),
                -std::log(static_cast<double>(hmm.active.size())));
            std::vector<int> local = viterbiPath(logE, logTrans, logInit);
            seq.z.resize(local.size());
            for (std::size_t t = 0; t < local.size(); ++t) {
                seq.z[t] = hmm.active[static_cast<std::size_t>(local[t])];
            }
        } else {
            for (auto& z : seq.z) z = remap.at(z);
        }
    }
    return fit;
}

double jointLogLik(const ModelFit& fit, const Dataset& dataset) {
    double total = 0.0;
    const int lag = fit.hyper.lag;
    for (int i = 0; i < fit.seriesCount(); ++i) {
        const auto& hmm = fit.hmms[static_cast<std::size_t>(i)];
        const auto& seq = fit.sequences[static_cast<std::size_t>(i)];
        const auto& series = dataset.series[static_cast<std::size_t>(i)];
        std::vector<ArState> sub;
        for (int g : hmm.active) sub.push_back(fit.states[static_cast<std::size_t>(g)]);
        Eigen::MatrixXd logE = emissionLogLik(series, sub, lag);
        total -= std::log(static_cast<double>(hmm.active.size()));
        for (std::size_t t = 0; t < seq.z.size(); ++t) {
            int local = hmm.localIndex(seq.z[t]);
            total += logE(local, static_cast<Eigen::Index>(t));
            if (t > 0) {
                int prev = hmm.localIndex(seq.z[t - 1]);
                total += std::log(std::max(hmm.trans(prev, local), 1e-300));
            }
        }
    }
    return total;
}

ModelFit fit(const Dataset& dataset, const Hyperparams& hyper) {
    if (dataset.series.empty()) throw std::invalid_argument("empty dataset");
    const int d = static_cast<int>(dataset.series.front().channels());
    Hyperparams hp = hyper;
    if (hp.prior.meanCoeffs.size() == 0 && hp.prior.iwScale.size() == 0) {
        hp.prior = MniwPrior::standard(d, hp.lag);
    }
    hp.validate(d);
    for (const auto& s : dataset.series) {
        if (s.length() <= hp.lag + 1) {
            throw std::invalid_argument("series '" + s.id + "' too short for lag " +
                                        std::to_string(hp.lag));
        }
    }

    Rng rng(hp.mcmc.seed);
    const int n = static_cast<int>(dataset.series.size());

    ModelFit fit;
    fit.hyper = hp;
    fit.states.push_back(sampleArParams({}, hp.prior, rng));
    fit.featureMatrix = Eigen::MatrixXi::Ones(n, 1);
    for (int i = 0; i < n; ++i) {
        SeriesHmm hmm;
        hmm.id = dataset.series[static_cast<std::size_t>(i)].id;
        hmm.active = {0};
        hmm.trans = Eigen::MatrixXd::Ones(1, 1);
        fit.hmms.push_back(hmm);
        StateSequence seq;
        seq.id = hmm.id;
        seq.z.assign(
            static_cast<std::size_t>(dataset.series[static_cast<std::size_t>(i)].length() -
                                     hp.lag),
            0);
        fit.sequences.push_back(seq);
    }
    fit.loglikTrace.push_back(jointLogLik(fit, dataset));

    for (int sweep = 0; sweep < hp.mcmc.sweeps; ++sweep) {
        fit = resampleFeatures(std::move(fit), dataset, rng);

        for (int i = 0; i < n; ++i) {
            fit.sequences[static_cast<std::size_t>(i)] = sampleStateSequence(
                dataset.series[static_cast<std::size_t>(i)],
                fit.hmms[static_cast<std::size_t>(i)], fit.states, hp.lag, rng);
        }

        std::vector<std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>> assigned(
            fit.states.size());
        for (int i = 0; i < n; ++i) {
            const auto& series = dataset.series[static_cast<std::size_t>(i)];
            const auto& seq = fit.sequences[static_cast<std::size_t>(i)];
            for (std::size_t t = 0; t < seq.z.size(); ++t) {
                Eigen::Index row = static_cast<Eigen::Index>(t) + hp.lag;
                assigned[static_cast<std::size_t>(seq.z[t])].emplace_back(
                    series.values.row(row).transpose(),
                    hp.lag > 0 ? regressors(series, hp.lag, row) : Eigen::VectorXd(0));
            }
        }
        for (std::size_t k = 0; k < fit.states.size(); ++k) {
            fit.states[k] = sampleArParams(assigned[k], hp.prior, rng);
        }

        for (int i = 0; i < n; ++i) {
            fit.hmms[static_cast<std::size_t>(i)] = sampleTransitions(
                fit.sequences[static_cast<std::size_t>(i)],
                fit.hmms[static_cast<std::size_t>(i)].active,
                fit.hmms[static_cast<std::size_t>(i)].id, hp.dirichletGamma,
                hp.stickyKappa, rng);
        }

        fit.loglikTrace.push_back(jointLogLik(fit, dataset));
    }
    return fit;
}

ModelFit pruneRareStates(const ModelFit& input, double threshold,
                         const Dataset* dataset) {
    ModelFit fit = input;
    const int n = fit.seriesCount();
    const double cutoff = threshold * static_cast<double>(n);
    std::set<int> rare;
    for (int k = 0; k < fit.featureMatrix.cols(); ++k) {
        if (static_cast<double>(fit.featureMatrix.col(k).sum()) < cutoff) rare.insert(k);
    }
    if (rare.empty()) return fit;

    fit.pruneFallbacks.clear();
    std::vector<std::vector<int>> newActive(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int k : activeOfRow(fit.featureMatrix, i)) {
            if (!rare.count(k)) newActive[static_cast<std::size_t>(i)].push_back(k);
        }
        if (newActive[static_cast<std::size_t>(i)].empty()) {
            // keep the series' most-used state (by decoded frames, F as tiebreak)
            std::map<int, int> usage;
            for (int z : fit.sequences[static_cast<std::size_t>(i)].z) usage[z]++;
            int best = fit.hmms[static_cast<std::size_t>(i)].active.front();
            int bestCount = -1;
            for (int k : fit.hmms[static_cast<std::size_t>(i)].active) {
                if (usage[k] > bestCount) {
                    best = k;
                    bestCount = usage[k];
                }
            }
            newActive[static_cast<std::size_t>(i)] = {best};
            fit.pruneFallbacks.push_back(fit.hmms[static_cast<std::size_t>(i)].id);
        }
    }

    std::set<int> kept;
    for (const auto& a : newActive) kept.insert(a.begin(), a.end());
    std::map<int, int> remap;
    std::vector<ArState> keptStates;
    for (int k : kept) {
        remap[k] = static_cast<int>(keptStates.size());
        keptStates.push_back(fit.states[static_cast<std::size_t>(k)]);
    }

    Eigen::MatrixXi F = Eigen::MatrixXi::Zero(n, static_cast<int>(keptStates.size()));
    for (int i = 0; i < n; ++i) {
        const auto& hmm = fit.hmms[static_cast<std::size_t>(i)];
        std::vector<int> activeOld = newActive[static_cast<std::size_t>(i)];
        SeriesHmm rebuilt;
        rebuilt.id = hmm.id;
        for (int k : activeOld) rebuilt.active.push_back(remap[k]);
        rebuilt.trans = restrictTransitions(hmm, activeOld);
        // re-decode by most likely path over the pruned set
        auto& seq = fit.sequences[static_cast<std::size_t>(i)];
        bool changed = activeOld != hmm.active;
        if (changed) {
            Eigen::MatrixXd logTrans = rebuilt.trans.array().max(1e-300).log();
            const int k = static_cast<int>(activeOld.size());
            Eigen::VectorXd logInit =
                Eigen::VectorXd::Constant(k, -std::log(static_cast<double>(k)));
            Eigen::MatrixXd logE;
            if (dataset) {
                std::vector<ArState> sub;
                for (int g : activeOld) sub.push_back(fit.states[static_cast<std::size_t>(g)]);
                logE = emissionLogLik(dataset->series[static_cast<std::size_t>(i)], sub,
                                      fit.hyper.lag);
            } else {
                // no data at hand: decode the path closest to the old one
                logE = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(seq.z.size()));
                for (std::size_t t = 0; t < seq.z.size(); ++t) {
                    for (int a = 0; a < k; ++a) {
                        logE(a, static_cast<Eigen::Index>(t)) =
                            (activeOld[static_cast<std::size_t>(a)] == seq.z[t]) ? 0.0 : -1.0;
                    }
                }
            }
            std::vector<int> local = viterbiPath(logE, logTrans, logInit);
            for (std::size_t t = 0; t < seq.z.size(); ++t) {
                seq.z[t] = remap[activeOld[static_cast<std::size_t>(local[t])]];
            }
        } else {
            for (auto& z : seq.z) z = remap[z];
        }
        fit.hmms[static_cast<std::size_t>(i)] = std::move(rebuilt);
    }
    fit.states = std::move(keptStates);
    fit.featureMatrix = F;
    for (int i = 0; i < n; ++i) {
        for (int k : fit.hmms[static_cast<std::size_t>(i)].active) {
            fit.featureMatrix(i, k) = 1;
        }
    }
    return fit;
}

}  // namespace bphmm
