#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "bphmm/rng.hpp"
#include "bphmm/types.hpp"

namespace bphmm {

// One global autoregressive state: y_t ~ N(A x_t, Sigma) where x_t stacks
// the r previous observations (most recent first).
struct ArState {
    Eigen::MatrixXd coeffs;      // D x (D*r)
    Eigen::MatrixXd covariance;  // D x D, SPD

    Eigen::Index dims() const { return coeffs.rows(); }
    int lag() const {
        return coeffs.cols() == 0 ? 0
                                  : static_cast<int>(coeffs.cols() / coeffs.rows());
    }
};

// Matrix-normal inverse-Wishart prior over (A, Sigma).
struct MniwPrior {
    Eigen::MatrixXd meanCoeffs;   // M, D x (D*r)
    Eigen::MatrixXd columnScale;  // V, (D*r) x (D*r), SPD
    Eigen::MatrixXd iwScale;      // S0, D x D, SPD
    double iwDof = 0.0;           // n0 > D - 1

    static MniwPrior standard(int dims, int lag);
};

struct McmcOptions {
    int sweeps = 1000;
    int burnin = 0;
    std::uint64_t seed = 0;
};

struct Hyperparams {
    double alpha = 2.0;           // IBP mass
    int lag = 1;
    double stickyKappa = 10.0;
    double dirichletGamma = 1.0;
    MniwPrior prior;
    McmcOptions mcmc;

    void validate(int dims) const;
};

struct SeriesHmm {
    std::string id;
    std::vector<int> active;  // global state ids, ascending
    Eigen::MatrixXd trans;    // |active| x |active|, row-stochastic

    int localIndex(int globalState) const;  // -1 if inactive
};

struct StateSequence {
    std::string id;
    std::vector<int> z;  // global state ids, length T - lag
};

struct ModelFit {
    std::vector<ArState> states;
    Eigen::MatrixXi featureMatrix;  // N x K binary
    std::vector<SeriesHmm> hmms;
    std::vector<StateSequence> sequences;
    Hyperparams hyper;
    std::vector<double> loglikTrace;
    std::vector<std::string> pruneFallbacks;  // series kept alive by prune fallback

    int stateCount() const { return static_cast<int>(states.size()); }
    int seriesCount() const { return static_cast<int>(hmms.size()); }
    void validate() const;
};

// --- priors and conditionals -------------------------------------------------

// Indian buffet process draw: customer j takes dish k w.p. m_k/j then
// Poisson(alpha/j) new dishes. With forceNonempty, rows that come up empty
// are redrawn.
Eigen::MatrixXi sampleIbpPrior(int n, double alpha, Rng& rng, bool forceNonempty = true);

// Log density of y under N(A x, Sigma); history stacks the r previous
// observations, most recent first.
double arLogLik(const ArState& state, const Eigen::VectorXd& y,
                const Eigen::VectorXd& history);

// states x (T - lag) matrix of per-step emission log densities.
Eigen::MatrixXd emissionLogLik(const MultiSeries& series,
                               const std::vector<ArState>& states, int lag);

StateSequence sampleStateSequence(const MultiSeries& series, const SeriesHmm& hmm,
                                  const std::vector<ArState>& states, int lag,
                                  Rng& rng);

// Conjugate MNIW posterior draw given (y, x) regression pairs; a prior draw
// when obs is empty.
ArState sampleArParams(const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& obs,
                       const MniwPrior& prior, Rng& rng);

SeriesHmm sampleTransitions(const StateSequence& seq, const std::vector<int>& active,
                            const std::string& id, double gamma, double kappa,
                            Rng& rng);

// Prior-mean sticky transition matrix: row i = (gamma + kappa e_i) normalized.
Eigen::MatrixXd priorMeanTransitions(int k, double gamma, double kappa);

// Log MH acceptance ratio of a unique-state birth at likelihood difference
// deltaLoglik when the series currently holds `uniqueCount` unique states.
double birthLogAcceptRatio(double deltaLoglik, double alpha, int seriesCount,
                           int uniqueCount);
double deathLogAcceptRatio(double deltaLoglik, double alpha, int seriesCount,
                           int uniqueCount);

// One sweep of feature resampling: shared-state Gibbs toggles weighted by IBP
// prior odds, plus a unique-state birth/death MH move per series. Columns left
// empty are compacted.
ModelFit resampleFeatures(ModelFit fit, const Dataset& dataset, Rng& rng);

// --- whole-model inference ---------------------------------------------------

ModelFit fit(const Dataset& dataset, const Hyperparams& hyper);

// Drops global states active in fewer than threshold * N series and
// re-decodes affected sequences by most likely path. A series whose row
// would empty keeps its single most-used state and is reported in
// pruneFallbacks. When the dataset is supplied the re-decode uses true
// emission densities; otherwise it tracks the old decoded path.
ModelFit pruneRareStates(const ModelFit& fit, double threshold = 0.05,
                         const Dataset* dataset = nullptr);

// Complete-data log joint of sequences and observations under the fit.
double jointLogLik(const ModelFit& fit, const Dataset& dataset);

}  // namespace bphmm
