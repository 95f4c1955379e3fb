#include "bphmm/markov.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

namespace bphmm {

double logSumExp(const Eigen::VectorXd& logValues) {
    double m = logValues.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((logValues.array() - m).exp().sum());
}

double forwardLogLik(const Eigen::MatrixXd& logEmission,
                     const Eigen::MatrixXd& logTrans,
                     const Eigen::VectorXd& logInit) {
    const Eigen::Index K = logEmission.rows();
    const Eigen::Index T = logEmission.cols();
    if (T == 0) return 0.0;
    Eigen::VectorXd alpha = logInit + logEmission.col(0);
    Eigen::VectorXd next(K);
    for (Eigen::Index t = 1; t < T; ++t) {
        for (Eigen::Index j = 0; j < K; ++j) {
            next(j) = logSumExp(alpha + logTrans.col(j)) + logEmission(j, t);
        }
        alpha = next;
    }
    return logSumExp(alpha);
}

std::vector<int> ffbsSample(const Eigen::MatrixXd& logEmission,
                            const Eigen::MatrixXd& logTrans,
                            const Eigen::VectorXd& logInit,
                            Rng& rng) {
    const Eigen::Index K = logEmission.rows();
    const Eigen::Index T = logEmission.cols();
    std::vector<int> path(static_cast<std::size_t>(T));
    if (T == 0) return path;
    Eigen::MatrixXd alpha(K, T);
    alpha.col(0) = logInit + logEmission.col(0);
    for (Eigen::Index t = 1; t < T; ++t) {
        for (Eigen::Index j = 0; j < K; ++j) {
            alpha(j, t) = logSumExp(alpha.col(t - 1) + logTrans.col(j)) + logEmission(j, t);
        }
    }
    path[static_cast<std::size_t>(T - 1)] = rng.categoricalLog(alpha.col(T - 1));
    for (Eigen::Index t = T - 2; t >= 0; --t) {
        int nextState = path[static_cast<std::size_t>(t + 1)];
        Eigen::VectorXd logw = alpha.col(t) + logTrans.col(nextState);
        path[static_cast<std::size_t>(t)] = rng.categoricalLog(logw);
    }
    return path;
}

std::vector<int> viterbiPath(const Eigen::MatrixXd& logEmission,
                             const Eigen::MatrixXd& logTrans,
                             const Eigen::VectorXd& logInit) {
    const Eigen::Index K = logEmission.rows();
    const Eigen::Index T = logEmission.cols();
    std::vector<int> path(static_cast<std::size_t>(T));
    if (T == 0) return path;
    Eigen::MatrixXd delta(K, T);
    Eigen::MatrixXi back(K, T);
    delta.col(0) = logInit + logEmission.col(0);
    for (Eigen::Index t = 1; t < T; ++t) {
        for (Eigen::Index j = 0; j < K; ++j) {
            Eigen::Index argmax;
            double best = (delta.col(t - 1) + logTrans.col(j)).maxCoeff(&argmax);
            delta(j, t) = best + logEmission(j, t);
            back(j, t) = static_cast<int>(argmax);
        }
    }
    Eigen::Index last;
    delta.col(T - 1).maxCoeff(&last);
    path[static_cast<std::size_t>(T - 1)] = static_cast<int>(last);
    for (Eigen::Index t = T - 2; t >= 0; --t) {
        path[static_cast<std::size_t>(t)] =
            back(path[static_cast<std::size_t>(t + 1)], t + 1);
    }
    return path;
}

namespace {

bool validStationary(const Eigen::VectorXd& phi, const Eigen::MatrixXd& trans) {
    if (!phi.allFinite()) return false;
    if (phi.minCoeff() < -1e-12) return false;
    Eigen::VectorXd residual = trans.transpose() * phi - phi;
    return residual.cwiseAbs().maxCoeff() < 1e-11;
}

}  // namespace

Eigen::VectorXd stationaryDistribution(const Eigen::MatrixXd& trans) {
    const Eigen::Index K = trans.rows();
    if (K != trans.cols() || K == 0) {
        throw std::invalid_argument("transition matrix must be square and nonempty");
    }
    if (K == 1) return Eigen::VectorXd::Ones(1);

    // direct solve: (P^T - I) phi = 0 with the last equation replaced by sum = 1
    Eigen::MatrixXd A = trans.transpose() - Eigen::MatrixXd::Identity(K, K);
    A.row(K - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(K);
    b(K - 1) = 1.0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (lu.isInvertible()) {
        Eigen::VectorXd phi = lu.solve(b);
        if (validStationary(phi, trans)) {
            phi = phi.cwiseMax(0.0);
            return phi / phi.sum();
        }
    }

    // reducible / periodic fallback: smooth and power-iterate
    const double eta = 1e-8;
    Eigen::MatrixXd smoothed =
        (1.0 - eta) * trans +
        (eta / static_cast<double>(K)) * Eigen::MatrixXd::Ones(K, K);
    Eigen::VectorXd phi = Eigen::VectorXd::Constant(K, 1.0 / static_cast<double>(K));
    for (int iter = 0; iter < 100000; ++iter) {
        Eigen::VectorXd next = smoothed.transpose() * phi;
        next /= next.sum();
        if ((next - phi).cwiseAbs().maxCoeff() < 1e-14) {
            phi = next;
            break;
        }
        phi = next;
    }
    return phi;
}

}  // namespace bphmm
