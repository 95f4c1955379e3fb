#include "bphmm/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "bphmm/markov.hpp"

namespace bphmm {

Representation stationaryRepresentation(const ModelFit& fit) {
    const int n = fit.seriesCount();
    const int k = fit.stateCount();
    Representation rep;
    rep.kind = "stationary";
    rep.vectors = Eigen::MatrixXd::Zero(n, k);
    for (int i = 0; i < n; ++i) {
        const auto& hmm = fit.hmms[static_cast<std::size_t>(i)];
        rep.ids.push_back(hmm.id);
        Eigen::VectorXd phi = stationaryDistribution(hmm.trans);
        for (std::size_t a = 0; a < hmm.active.size(); ++a) {
            rep.vectors(i, hmm.active[a]) = phi(static_cast<Eigen::Index>(a));
        }
    }
    return rep;
}

Eigen::MatrixXd normalizedLaplacian(const DistanceMatrix& dm, bool gaussianAffinity) {
    dm.validate();
    const Eigen::Index n = dm.size();
    Eigen::MatrixXd w;
    if (gaussianAffinity) {
        std::vector<double> offDiag;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j) offDiag.push_back(dm.values(i, j));
        }
        std::sort(offDiag.begin(), offDiag.end());
        double sigma = offDiag.empty() ? 1.0 : offDiag[offDiag.size() / 2];
        if (sigma <= 0.0) sigma = 1.0;
        w = (-dm.values.array().square() / (2.0 * sigma * sigma)).exp();
        w.diagonal().setZero();
    } else {
        w = dm.values;
    }
    Eigen::VectorXd degree = w.rowwise().sum();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (degree(i) <= 0.0) {
            throw std::invalid_argument("zero row sum in distance matrix at series '" +
                                        dm.ids[static_cast<std::size_t>(i)] + "'");
        }
    }
    Eigen::VectorXd dInvSqrt = degree.array().rsqrt();
    Eigen::MatrixXd lap = Eigen::MatrixXd::Identity(n, n) -
                          dInvSqrt.asDiagonal() * w * dInvSqrt.asDiagonal();
    return 0.5 * (lap + lap.transpose());
}

Representation spectralRepresentation(const DistanceMatrix& dm, int k,
                                      bool gaussianAffinity) {
    const Eigen::Index n = dm.size();
    if (k < 1 || static_cast<Eigen::Index>(k) > n) {
        throw std::invalid_argument("spectral K must be in [1, N]");
    }
    Eigen::MatrixXd lap = normalizedLaplacian(dm, gaussianAffinity);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("eigendecomposition failed");
    }
    // solver orders eigenvalues ascending
    Representation rep;
    rep.ids = dm.ids;
    rep.kind = dm.measure == "viterbi" ? "spectral-viterbi" : "spectral-likelihood";
    rep.vectors.resize(n, k);
    for (int c = 0; c < k; ++c) {
        Eigen::Index src = gaussianAffinity ? static_cast<Eigen::Index>(c)
                                            : n - 1 - static_cast<Eigen::Index>(c);
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        Eigen::Index biggest;
        v.cwiseAbs().maxCoeff(&biggest);
        if (v(biggest) < 0.0) v = -v;
        rep.vectors.col(c) = v;
    }
    return rep;
}

}  // namespace bphmm
