#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bphmm/model.hpp"
#include "bphmm/types.hpp"

namespace bphmm {

struct PlantedConstruct {
    std::string name;
    Eigen::VectorXd weights;  // over true states
    double noiseStd = 0.0;
};

struct SynthSpec {
    int seriesCount = 20;
    int trueStates = 4;
    int channels = 3;
    int lag = 1;
    int minLength = 500;
    int maxLength = 500;
    Eigen::MatrixXi featureMatrix;   // empty -> random rows with >= 1 state
    std::vector<ArState> states;     // empty -> well-separated defaults
    double transConcentration = 1.0;
    double stickySelf = 50.0;        // extra Dirichlet mass on self-transitions
    std::vector<PlantedConstruct> constructs;
    std::uint64_t seed = 0;

    void validate() const;  // rejects unstable AR specs
};

struct TruthBundle {
    Eigen::MatrixXi featureMatrix;
    std::vector<ArState> states;
    std::vector<SeriesHmm> hmms;
    std::vector<StateSequence> sequences;
    Eigen::MatrixXd stationary;  // N x K_true
};

std::pair<Dataset, TruthBundle> generate(const SynthSpec& spec);

// Distinct diagonal-AR states used when SynthSpec::states is left empty.
std::vector<ArState> defaultSynthStates(int trueStates, int channels, int lag);

// The desk-scale recovery benchmark configuration.
SynthSpec defaultBenchmarkSpec(std::uint64_t seed);

struct RecoveryMetrics {
    double sequenceAccuracy = 0.0;  // after optimal state matching
    int deltaK = 0;                 // |K_fit - K_true|
    double featureAgreement = 0.0;  // F entries equal under the matching
    std::vector<int> matching;      // fit state -> true state (-1 unmatched)
};

RecoveryMetrics scoreRecovery(const ModelFit& fit, const TruthBundle& truth);

// Maximum-weight bipartite assignment; returns row -> column (-1 unassigned).
std::vector<int> maxWeightAssignment(const Eigen::MatrixXd& weights);

}  // namespace bphmm
