#include "bphmm/distance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "bphmm/markov.hpp"

namespace bphmm {
namespace {

// Transition matrix of `hmm` expanded to the given union of global ids.
// Own entries are kept; targets the HMM lacks get the floor (rows
// renormalized); rows for foreign states are uniform.
Eigen::MatrixXd expandTransitions(const SeriesHmm& hmm, const std::vector<int>& unionIds,
                                  double floorEps) {
    const int u = static_cast<int>(unionIds.size());
    Eigen::MatrixXd out(u, u);
    for (int i = 0; i < u; ++i) {
        int li = hmm.localIndex(unionIds[static_cast<std::size_t>(i)]);
        if (li < 0) {
            out.row(i).setConstant(1.0 / static_cast<double>(u));
            continue;
        }
        double total = 0.0;
        for (int j = 0; j < u; ++j) {
            int lj = hmm.localIndex(unionIds[static_cast<std::size_t>(j)]);
            out(i, j) = lj >= 0 ? hmm.trans(li, lj) : floorEps;
            total += out(i, j);
        }
        out.row(i) /= total;
    }
    return out;
}

}  // namespace

void DistanceMatrix::validate() const {
    const Eigen::Index n = values.rows();
    if (values.cols() != n || static_cast<Eigen::Index>(ids.size()) != n) {
        throw std::runtime_error("distance matrix shape inconsistent");
    }
    if (!values.allFinite()) throw std::runtime_error("distance matrix has NaN/Inf");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (values(i, i) != 0.0) throw std::runtime_error("distance diagonal must be zero");
        for (Eigen::Index j = 0; j < n; ++j) {
            if (values(i, j) < 0.0) throw std::runtime_error("negative distance entry");
            if (std::abs(values(i, j) - values(j, i)) > 1e-10) {
                throw std::runtime_error("distance matrix not symmetric");
            }
        }
    }
}

double sequenceScore(const StateSequence& seq, const SeriesHmm& other,
                     int globalStateCount, double floorEps) {
    if (seq.z.size() < 2) return 0.0;
    std::set<int> visited(seq.z.begin(), seq.z.end());

    // per-row normalizer: active rows extended with the floor for visited
    // states the other HMM lacks
    int missingTargets = 0;
    for (int g : visited) {
        if (other.localIndex(g) < 0) ++missingTargets;
    }
    // targets considered per row = other's active set plus missing visited states
    const double rowTotal = 1.0 + floorEps * static_cast<double>(missingTargets);

    double logp = 0.0;
    const std::size_t transitions = seq.z.size() - 1;
    for (std::size_t t = 1; t < seq.z.size(); ++t) {
        int prev = other.localIndex(seq.z[t - 1]);
        int next = other.localIndex(seq.z[t]);
        if (prev < 0) {
            logp += std::log(floorEps);
        } else if (next < 0) {
            logp += std::log(floorEps / rowTotal);
        } else {
            logp += std::log(std::max(other.trans(prev, next), 1e-300) / rowTotal);
        }
    }
    return logp +
           static_cast<double>(transitions) * std::log(static_cast<double>(globalStateCount));
}

double likelihoodSimilarity(const SeriesHmm& hmmA, const StateSequence& seqA,
                            const SeriesHmm& hmmB, const StateSequence& seqB,
                            int globalStateCount, double floorEps) {
    return 0.5 * (sequenceScore(seqA, hmmB, globalStateCount, floorEps) +
                  sequenceScore(seqB, hmmA, globalStateCount, floorEps));
}

double viterbiDivergence(const SeriesHmm& hmm, const SeriesHmm& other, double floorEps) {
    std::set<int> unionSet(hmm.active.begin(), hmm.active.end());
    unionSet.insert(other.active.begin(), other.active.end());
    std::vector<int> unionIds(unionSet.begin(), unionSet.end());
    Eigen::MatrixXd a = expandTransitions(hmm, unionIds, floorEps);
    Eigen::MatrixXd b = expandTransitions(other, unionIds, floorEps);
    Eigen::VectorXd phi = stationaryDistribution(a);
    double total = 0.0;
    const int u = static_cast<int>(unionIds.size());
    for (int i = 0; i < u; ++i) {
        for (int j = 0; j < u; ++j) {
            if (a(i, j) <= 0.0) continue;
            total += a(i, j) * phi(i) *
                     (std::log(std::max(b(i, j), 1e-300)) - std::log(a(i, j)));
        }
    }
    return total;
}

DistanceMatrix distanceMatrix(const ModelFit& fit, const std::string& measure,
                              double floorEps) {
    const int n = fit.seriesCount();
    if (n < 2) throw std::invalid_argument("need at least two series for distances");
    if (measure != "likelihood" && measure != "viterbi") {
        throw std::invalid_argument("unknown distance measure '" + measure + "'");
    }
    DistanceMatrix dm;
    dm.measure = measure;
    for (const auto& hmm : fit.hmms) dm.ids.push_back(hmm.id);
    dm.values = Eigen::MatrixXd::Zero(n, n);

    if (measure == "likelihood") {
        const int k = fit.stateCount();
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                double sim = likelihoodSimilarity(
                    fit.hmms[static_cast<std::size_t>(i)],
                    fit.sequences[static_cast<std::size_t>(i)],
                    fit.hmms[static_cast<std::size_t>(j)],
                    fit.sequences[static_cast<std::size_t>(j)], k, floorEps);
                dm.values(i, j) = dm.values(j, i) = -sim;
            }
        }
        // shift so the smallest off-diagonal entry is zero
        double lo = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (i != j) lo = std::min(lo, dm.values(i, j));
            }
        }
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (i != j) dm.values(i, j) -= lo;
            }
        }
    } else {
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                double d = -0.5 * (viterbiDivergence(fit.hmms[static_cast<std::size_t>(i)],
                                                     fit.hmms[static_cast<std::size_t>(j)],
                                                     floorEps) +
                                   viterbiDivergence(fit.hmms[static_cast<std::size_t>(j)],
                                                     fit.hmms[static_cast<std::size_t>(i)],
                                                     floorEps));
                dm.values(i, j) = dm.values(j, i) = std::max(d, 0.0);
            }
        }
    }
    dm.validate();
    return dm;
}

}  // namespace bphmm
