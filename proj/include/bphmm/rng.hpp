#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

#include <Eigen/Core>

namespace bphmm {

// Seeded random source. derive() spawns an independent stream from the
// original seed, so per-series streams do not depend on consumption order.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix(seed)) {}

    std::uint64_t seed() const { return seed_; }

    Rng derive(std::uint64_t stream) const {
        return Rng(splitmix(seed_ ^ (0x9e3779b97f4a7c15ULL + stream)));
    }

    double uniform() {
        return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
    }

    double normal() {
        return std::normal_distribution<double>(0.0, 1.0)(engine_);
    }

    double gamma(double shape, double scale) {
        return std::gamma_distribution<double>(shape, scale)(engine_);
    }

    double chiSquared(double dof) { return gamma(dof / 2.0, 2.0); }

    int poisson(double mean) {
        if (mean <= 0.0) return 0;
        return std::poisson_distribution<int>(mean)(engine_);
    }

    bool bernoulli(double p) { return uniform() < p; }

    int uniformInt(int lo, int hi) {  // inclusive
        return std::uniform_int_distribution<int>(lo, hi)(engine_);
    }

    Eigen::VectorXd dirichlet(const Eigen::VectorXd& alpha) {
        Eigen::VectorXd g(alpha.size());
        for (Eigen::Index i = 0; i < alpha.size(); ++i) {
            g(i) = gamma(alpha(i), 1.0);
        }
        double s = g.sum();
        if (s <= 0.0) {
            // all-gamma underflow at tiny concentrations
            g.setConstant(1.0 / static_cast<double>(alpha.size()));
            return g;
        }
        return g / s;
    }

    int categorical(const Eigen::VectorXd& weights) {
        double total = weights.sum();
        double u = uniform() * total;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < weights.size(); ++i) {
            acc += weights(i);
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(weights.size() - 1);
    }

    int categoricalLog(const Eigen::VectorXd& logWeights) {
        double m = logWeights.maxCoeff();
        Eigen::VectorXd w = (logWeights.array() - m).exp();
        return categorical(w);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace bphmm
