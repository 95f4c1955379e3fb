#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "bphmm/distance.hpp"
#include "bphmm/model.hpp"

namespace bphmm {

struct Representation {
    std::vector<std::string> ids;
    Eigen::MatrixXd vectors;  // N x d
    std::string kind;         // "stationary" | "spectral-likelihood" | "spectral-viterbi"

    Eigen::Index dim() const { return vectors.cols(); }
};

// N x K matrix of per-series stationary distributions scattered into global
// state columns (zeros for inactive states).
Representation stationaryRepresentation(const ModelFit& fit);

// Eigenvectors of the symmetric normalized Laplacian
// L = I - D^{-1/2} W D^{-1/2}. The default takes W = dm and the K largest
// eigenvectors, reading the construction literally; gaussianAffinity switches
// to W = exp(-d^2 / 2 sigma^2) (sigma = median off-diagonal distance) with the
// K smallest eigenvectors, the standard spectral-clustering form. Columns are
// ordered by the selection criterion and sign-fixed so the largest-magnitude
// entry of each is positive.
Representation spectralRepresentation(const DistanceMatrix& dm, int k,
                                      bool gaussianAffinity = false);

// Laplacian used by spectralRepresentation; exposed for spectrum checks.
Eigen::MatrixXd normalizedLaplacian(const DistanceMatrix& dm,
                                    bool gaussianAffinity = false);

}  // namespace bphmm
