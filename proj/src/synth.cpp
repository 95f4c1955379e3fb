#include "bphmm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "bphmm/markov.hpp"
#include "bphmm/rng.hpp"

namespace bphmm {
namespace {

double companionSpectralRadius(const ArState& state) {
    const Eigen::Index d = state.dims();
    const int r = state.lag();
    if (r == 0) return 0.0;
    Eigen::MatrixXd companion =
        Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(r) * d,
                              static_cast<Eigen::Index>(r) * d);
    companion.topRows(d) = state.coeffs;
    if (r > 1) {
        companion.block(d, 0, static_cast<Eigen::Index>(r - 1) * d,
                        static_cast<Eigen::Index>(r - 1) * d)
            .setIdentity();
    }
    return companion.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

void SynthSpec::validate() const {
    if (seriesCount < 1 || trueStates < 1 || channels < 1 || lag < 0) {
        throw std::invalid_argument("synth spec dimensions must be positive");
    }
    if (minLength > maxLength || minLength <= lag + 1) {
        throw std::invalid_argument("synth lengths must satisfy lag+1 < min <= max");
    }
    if (featureMatrix.size() > 0) {
        if (featureMatrix.rows() != seriesCount || featureMatrix.cols() != trueStates) {
            throw std::invalid_argument("synth feature matrix has wrong shape");
        }
        for (int i = 0; i < featureMatrix.rows(); ++i) {
            if (featureMatrix.row(i).sum() < 1) {
                throw std::invalid_argument("synth feature row " + std::to_string(i) +
                                            " is empty");
            }
        }
    }
    for (const auto& state : states) {
        if (companionSpectralRadius(state) >= 1.0) {
            throw std::invalid_argument("unstable AR state in synth spec");
        }
    }
}

std::vector<ArState> defaultSynthStates(int trueStates, int channels, int lag) {
    // states differ in the sign pattern of their per-channel dynamics, with
    // comparable noise scales: separation by dynamics keeps each state
    // internally homogeneous, so a sampler has no incentive to split one by
    // amplitude
    const double coefCycle[] = {0.9, -0.9, 0.45, -0.45, 0.7, -0.7, 0.2, -0.2};
    const double varCycle[] = {0.5, 0.7, 0.4, 0.6, 0.45, 0.65, 0.55, 0.35};
    std::vector<ArState> states;
    for (int k = 0; k < trueStates; ++k) {
        ArState state;
        state.coeffs = Eigen::MatrixXd::Zero(channels,
                                             static_cast<Eigen::Index>(channels) * lag);
        if (lag > 0) {
            for (int c = 0; c < channels; ++c) {
                state.coeffs(c, c) = coefCycle[(k + c) % 8];
            }
        }
        state.covariance = varCycle[k % 8] * Eigen::MatrixXd::Identity(channels, channels);
        states.push_back(std::move(state));
    }
    return states;
}

SynthSpec defaultBenchmarkSpec(std::uint64_t seed) {
    SynthSpec spec;
    spec.seriesCount = 20;
    spec.trueStates = 4;
    spec.channels = 3;
    spec.lag = 1;
    spec.minLength = 500;
    spec.maxLength = 500;
    spec.seed = seed;
    PlantedConstruct planted;
    planted.name = "planted_linear";
    planted.weights = Eigen::VectorXd(4);
    planted.weights << 2.0, -1.0, 0.5, 1.5;
    planted.noiseStd = 0.02;
    spec.constructs.push_back(planted);
    return spec;
}

std::pair<Dataset, TruthBundle> generate(const SynthSpec& spec) {
    spec.validate();
    Rng root(spec.seed);
    const int n = spec.seriesCount;
    const int kTrue = spec.trueStates;
    const int d = spec.channels;
    const int lag = spec.lag;

    TruthBundle truth;
    truth.states = spec.states.empty() ? defaultSynthStates(kTrue, d, lag) : spec.states;
    for (const auto& state : truth.states) {
        if (companionSpectralRadius(state) >= 1.0) {
            throw std::invalid_argument("unstable AR state in synth spec");
        }
    }

    if (spec.featureMatrix.size() > 0) {
        truth.featureMatrix = spec.featureMatrix;
    } else {
        Rng frng = root.derive(1);
        truth.featureMatrix = Eigen::MatrixXi::Zero(n, kTrue);
        for (int i = 0; i < n; ++i) {
            int row = 0;
            do {
                row = 0;
                for (int k = 0; k < kTrue; ++k) {
                    truth.featureMatrix(i, k) = frng.bernoulli(0.5) ? 1 : 0;
                    row += truth.featureMatrix(i, k);
                }
            } while (row == 0);
        }
    }

    ChannelSchema schema;
    for (int c = 0; c < d; ++c) schema.names.push_back("ch" + std::to_string(c));

    Dataset dataset;
    truth.stationary = Eigen::MatrixXd::Zero(n, kTrue);

    for (int i = 0; i < n; ++i) {
        Rng rng = root.derive(100 + static_cast<std::uint64_t>(i));
        std::vector<int> active;
        for (int k = 0; k < kTrue; ++k) {
            if (truth.featureMatrix(i, k)) active.push_back(k);
        }
        const int ka = static_cast<int>(active.size());

        SeriesHmm hmm;
        hmm.id = "s" + std::string(i < 10 ? "0" : "") + std::to_string(i);
        hmm.active = active;
        hmm.trans.resize(ka, ka);
        for (int a = 0; a < ka; ++a) {
            Eigen::VectorXd conc = Eigen::VectorXd::Constant(ka, spec.transConcentration);
            conc(a) += spec.stickySelf;
            hmm.trans.row(a) = rng.dirichlet(conc).transpose();
        }

        int length = spec.minLength == spec.maxLength
                         ? spec.minLength
                         : rng.uniformInt(spec.minLength, spec.maxLength);

        StateSequence seq;
        seq.id = hmm.id;
        int current = rng.uniformInt(0, ka - 1);
        for (int t = 0; t < length - lag; ++t) {
            if (t > 0) current = rng.categorical(hmm.trans.row(current).transpose());
            seq.z.push_back(active[static_cast<std::size_t>(current)]);
        }

        MultiSeries series;
        series.id = hmm.id;
        series.schema = schema;
        series.values.resize(length, d);
        for (int t = 0; t < lag; ++t) {
            for (int c = 0; c < d; ++c) series.values(t, c) = rng.normal();
        }
        std::vector<Eigen::MatrixXd> chols;
        for (const auto& state : truth.states) {
            chols.push_back(Eigen::MatrixXd(state.covariance.llt().matrixL()));
        }
        for (int t = lag; t < length; ++t) {
            int state = seq.z[static_cast<std::size_t>(t - lag)];
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
            if (lag > 0) {
                Eigen::VectorXd x(static_cast<Eigen::Index>(lag) * d);
                for (int l = 0; l < lag; ++l) {
                    x.segment(static_cast<Eigen::Index>(l) * d, d) =
                        series.values.row(t - 1 - l).transpose();
                }
                mean = truth.states[static_cast<std::size_t>(state)].coeffs * x;
            }
            Eigen::VectorXd eps(d);
            for (int c = 0; c < d; ++c) eps(c) = rng.normal();
            series.values.row(t) =
                (mean + chols[static_cast<std::size_t>(state)] * eps).transpose();
        }

        Eigen::VectorXd phi = stationaryDistribution(hmm.trans);
        for (int a = 0; a < ka; ++a) {
            truth.stationary(i, active[static_cast<std::size_t>(a)]) = phi(a);
        }

        truth.hmms.push_back(std::move(hmm));
        truth.sequences.push_back(std::move(seq));
        dataset.series.push_back(std::move(series));
    }

    if (!spec.constructs.empty()) {
        Rng crng = root.derive(2);
        for (const auto& s : dataset.series) dataset.constructs.ids.push_back(s.id);
        for (const auto& planted : spec.constructs) {
            if (planted.weights.size() != kTrue) {
                throw std::invalid_argument("planted construct weight size mismatch");
            }
            std::vector<double> column;
            for (int i = 0; i < n; ++i) {
                double v = planted.weights.dot(truth.stationary.row(i));
                if (planted.noiseStd > 0.0) v += planted.noiseStd * crng.normal();
                column.push_back(v);
            }
            dataset.constructs.columnOrder.push_back(planted.name);
            dataset.constructs.numeric[planted.name] = std::move(column);
        }
    }
    dataset.validate();
    return {std::move(dataset), std::move(truth)};
}

std::vector<int> maxWeightAssignment(const Eigen::MatrixXd& weights) {
    const int rows = static_cast<int>(weights.rows());
    const int cols = static_cast<int>(weights.cols());
    const int n = std::max(rows, cols);
    double top = weights.size() > 0 ? weights.maxCoeff() : 0.0;
    // square min-cost matrix, padded with zero-weight cells
    Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(n, n, top);
    cost.topLeftCorner(rows, cols) = top - weights.array();

    // Hungarian algorithm with row/column potentials
    std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<double> v(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<int> p(static_cast<std::size_t>(n + 1), 0);
    std::vector<int> way(static_cast<std::size_t>(n + 1), 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n + 1),
                                 std::numeric_limits<double>::infinity());
        std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
        do {
            used[static_cast<std::size_t>(j0)] = true;
            int i0 = p[static_cast<std::size_t>(j0)];
            double delta = std::numeric_limits<double>::infinity();
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                             v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> assignment(static_cast<std::size_t>(rows), -1);
    for (int j = 1; j <= n; ++j) {
        int i = p[static_cast<std::size_t>(j)];
        if (i >= 1 && i <= rows && j <= cols) assignment[static_cast<std::size_t>(i - 1)] = j - 1;
    }
    return assignment;
}

RecoveryMetrics scoreRecovery(const ModelFit& fit, const TruthBundle& truth) {
    const int kFit = fit.stateCount();
    const int kTrue = static_cast<int>(truth.featureMatrix.cols());
    const int n = fit.seriesCount();

    Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(kFit, kTrue);
    long total = 0;
    for (int i = 0; i < n; ++i) {
        const auto& fitSeq = fit.sequences[static_cast<std::size_t>(i)].z;
        const auto& trueSeq = truth.sequences[static_cast<std::size_t>(i)].z;
        std::size_t len = std::min(fitSeq.size(), trueSeq.size());
        for (std::size_t t = 0; t < len; ++t) {
            overlap(fitSeq[t], trueSeq[t]) += 1.0;
            ++total;
        }
    }

    RecoveryMetrics metrics;
    metrics.matching = maxWeightAssignment(overlap);
    metrics.deltaK = std::abs(kFit - kTrue);

    double matched = 0.0;
    for (int kf = 0; kf < kFit; ++kf) {
        int kt = metrics.matching[static_cast<std::size_t>(kf)];
        if (kt >= 0) matched += overlap(kf, kt);
    }
    metrics.sequenceAccuracy = total > 0 ? matched / static_cast<double>(total) : 0.0;

    // F agreement under the matching; true columns with no matched fit column
    // compare against all-zero
    Eigen::MatrixXi predicted = Eigen::MatrixXi::Zero(n, kTrue);
    for (int kf = 0; kf < kFit; ++kf) {
        int kt = metrics.matching[static_cast<std::size_t>(kf)];
        if (kt < 0) continue;
        for (int i = 0; i < n; ++i) {
            if (fit.featureMatrix(i, kf)) predicted(i, kt) = 1;
        }
    }
    int agree = 0;
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < kTrue; ++k) {
            if (predicted(i, k) == truth.featureMatrix(i, k)) ++agree;
        }
    }
    metrics.featureAgreement = static_cast<double>(agree) / static_cast<double>(n * kTrue);
    return metrics;
}

}  // namespace bphmm
