#pragma once

#include <vector>

#include <Eigen/Core>

#include "bphmm/rng.hpp"

namespace bphmm {

double logSumExp(const Eigen::VectorXd& logValues);

// Log marginal likelihood of the observations behind `logEmission`
// (states x steps) under the chain (logTrans, logInit). Log-space forward
// recursion throughout.
double forwardLogLik(const Eigen::MatrixXd& logEmission,
                     const Eigen::MatrixXd& logTrans,
                     const Eigen::VectorXd& logInit);

// One posterior draw of the state path (forward filter, backward sample).
std::vector<int> ffbsSample(const Eigen::MatrixXd& logEmission,
                            const Eigen::MatrixXd& logTrans,
                            const Eigen::VectorXd& logInit,
                            Rng& rng);

// Most likely state path.
std::vector<int> viterbiPath(const Eigen::MatrixXd& logEmission,
                             const Eigen::MatrixXd& logTrans,
                             const Eigen::VectorXd& logInit);

// Solves phi * P = phi with sum(phi) = 1 on the raw matrix; falls back to
// power iteration on (1-eta) P + eta/K when the direct solve is singular or
// produces an invalid distribution (reducible or periodic chains).
Eigen::VectorXd stationaryDistribution(const Eigen::MatrixXd& trans);

}  // namespace bphmm
