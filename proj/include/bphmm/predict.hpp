#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bphmm/embedding.hpp"
#include "bphmm/model.hpp"
#include "bphmm/types.hpp"

namespace bphmm {

enum class RegressorKind { Ridge, KernelRidge, RandomForest };

RegressorKind regressorFromString(const std::string& name);
std::string toString(RegressorKind kind);

struct PredictionReport {
    std::string construct;
    std::string representation;
    std::string model;
    std::map<std::string, double> hyper;
    double rho = 0.0;
    double rmse = 0.0;
    int folds = 0;
    int dropped = 0;  // series without a construct value
};

// Leave-one-out evaluation of one regressor family over its hyperparameter
// grid; feature standardization is computed per training fold. Reports the
// best setting by rho (RMSE tie-break). NaN entries of y are dropped.
PredictionReport loocv(const Representation& x, const std::vector<double>& y,
                       RegressorKind kind, std::uint64_t seed = 0);

// Out-of-fold ridge predictions at one penalty; building block of loocv,
// exposed so tests can pin it against closed-form arithmetic.
std::vector<double> loocvRidgePredictions(const Eigen::MatrixXd& x,
                                          const std::vector<double>& y, double penalty);

struct StateAttribution {
    std::string construct;
    std::vector<double> coefficients;  // one per global state, standardized scale
    std::vector<int> ranking;          // state ids by descending |coefficient|
};

StateAttribution attributeStates(const ModelFit& fit, const std::vector<double>& y,
                                 const std::string& constructName);

struct BenchmarkConfig {
    std::vector<int> spectralKs = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    std::vector<RegressorKind> models = {RegressorKind::Ridge, RegressorKind::KernelRidge,
                                         RegressorKind::RandomForest};
    std::uint64_t seed = 0;
};

// Evaluates stationary (HMM-S) and spectral representations over both
// distance measures (HMM-SL, HMM-SV) for every numeric construct, keeping the
// best model per representation.
std::vector<PredictionReport> runBenchmark(const ModelFit& fit, const Dataset& dataset,
                                           const BenchmarkConfig& config = {});

double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace bphmm
