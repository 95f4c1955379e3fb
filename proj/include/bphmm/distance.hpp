#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "bphmm/model.hpp"

namespace bphmm {

struct DistanceMatrix {
    std::vector<std::string> ids;
    Eigen::MatrixXd values;  // N x N, symmetric, zero diagonal, >= 0
    std::string measure;     // "likelihood" | "viterbi"

    Eigen::Index size() const { return values.rows(); }
    void validate() const;
};

// Length-normalized log cross-likelihood of `seq` under the transition matrix
// of `other`: sum of log pi'(z_{t-1} -> z_t) + L log K. Transitions touching
// states the other HMM lacks contribute log(floorEps); rows extended with the
// floor are renormalized.
double sequenceScore(const StateSequence& seq, const SeriesHmm& other,
                     int globalStateCount, double floorEps = 1e-6);

// Symmetrized similarity: mean of the two cross scores. The distance-matrix
// assembler negates this and shifts by the off-diagonal minimum.
double likelihoodSimilarity(const SeriesHmm& hmmA, const StateSequence& seqA,
                            const SeriesHmm& hmmB, const StateSequence& seqB,
                            int globalStateCount, double floorEps = 1e-6);

// Directed transition divergence sum_ij a_ij phi(i) (log a'_ij - log a_ij)
// over the union of active sets; <= 0 by Gibbs' inequality, 0 when equal.
double viterbiDivergence(const SeriesHmm& hmm, const SeriesHmm& other,
                         double floorEps = 1e-6);

DistanceMatrix distanceMatrix(const ModelFit& fit, const std::string& measure,
                              double floorEps = 1e-6);

}  // namespace bphmm
