#include "bphmm/predict.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

#include "bphmm/rng.hpp"

namespace bphmm {
namespace {

struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static Standardizer fitTo(const Eigen::MatrixXd& x) {
        Standardizer s;
        s.mean = x.colwise().mean();
        s.scale.resize(x.cols());
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            double var = (x.col(c).array() - s.mean(c)).square().mean();
            s.scale(c) = var > 0.0 ? std::sqrt(var) : 1.0;
        }
        return s;
    }
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
        return (x.rowwise() - mean.transpose()).array().rowwise() /
               scale.transpose().array();
    }
};

Eigen::VectorXd ridgeSolve(const Eigen::MatrixXd& xs, const Eigen::VectorXd& ys,
                           double penalty) {
    const Eigen::Index d = xs.cols();
    Eigen::MatrixXd gram = xs.transpose() * xs +
                           penalty * Eigen::MatrixXd::Identity(d, d);
    return gram.ldlt().solve(xs.transpose() * ys);
}

double medianPairwiseDistance(const Eigen::MatrixXd& xs) {
    std::vector<double> dists;
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < xs.rows(); ++j) {
            dists.push_back((xs.row(i) - xs.row(j)).norm());
        }
    }
    if (dists.empty()) return 1.0;
    std::sort(dists.begin(), dists.end());
    double med = dists[dists.size() / 2];
    return med > 0.0 ? med : 1.0;
}

// --- random forest -----------------------------------------------------------

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    double value = 0.0;
    int left = -1;
    int right = -1;
};

class RegressionTree {
public:
    void fitTree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                 std::vector<int> indices, int maxDepth, int mtry, Rng& rng) {
        nodes_.clear();
        build(x, y, std::move(indices), 0, maxDepth, mtry, rng);
    }

    double predictOne(const Eigen::RowVectorXd& x) const {
        int node = 0;
        while (nodes_[static_cast<std::size_t>(node)].feature >= 0) {
            const auto& nd = nodes_[static_cast<std::size_t>(node)];
            node = x(nd.feature) <= nd.threshold ? nd.left : nd.right;
        }
        return nodes_[static_cast<std::size_t>(node)].value;
    }

private:
    static constexpr int kMinLeaf = 2;

    int build(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
              std::vector<int> indices, int depth, int maxDepth, int mtry, Rng& rng) {
        int id = static_cast<int>(nodes_.size());
        nodes_.push_back({});
        double sum = 0.0;
        for (int i : indices) sum += y(i);
        nodes_[static_cast<std::size_t>(id)].value = sum / static_cast<double>(indices.size());

        if ((maxDepth > 0 && depth >= maxDepth) ||
            static_cast<int>(indices.size()) < 2 * kMinLeaf) {
            return id;
        }

        // candidate features without replacement
        std::vector<int> features(static_cast<std::size_t>(x.cols()));
        std::iota(features.begin(), features.end(), 0);
        for (std::size_t i = features.size() - 1; i > 0; --i) {
            std::swap(features[i], features[static_cast<std::size_t>(
                                       rng.uniformInt(0, static_cast<int>(i)))]);
        }
        features.resize(static_cast<std::size_t>(std::min<int>(mtry, static_cast<int>(x.cols()))));

        int bestFeature = -1;
        double bestThreshold = 0.0;
        double bestScore = -1e-12;
        const double n = static_cast<double>(indices.size());
        double totalSum = sum;
        double totalSq = 0.0;
        for (int i : indices) totalSq += y(i) * y(i);
        const double baseSse = totalSq - totalSum * totalSum / n;

        for (int f : features) {
            std::vector<int> order = indices;
            std::sort(order.begin(), order.end(),
                      [&](int a, int b) { return x(a, f) < x(b, f); });
            double leftSum = 0.0, leftSq = 0.0;
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                double v = y(order[i]);
                leftSum += v;
                leftSq += v * v;
                if (x(order[i], f) == x(order[i + 1], f)) continue;
                double nl = static_cast<double>(i + 1);
                double nr = n - nl;
                if (nl < kMinLeaf || nr < kMinLeaf) continue;
                double rightSum = totalSum - leftSum;
                double rightSq = totalSq - leftSq;
                double sse = (leftSq - leftSum * leftSum / nl) +
                             (rightSq - rightSum * rightSum / nr);
                double score = baseSse - sse;
                if (score > bestScore) {
                    bestScore = score;
                    bestFeature = f;
                    bestThreshold = 0.5 * (x(order[i], f) + x(order[i + 1], f));
                }
            }
        }
        if (bestFeature < 0) return id;

        std::vector<int> leftIdx, rightIdx;
        for (int i : indices) {
            (x(i, bestFeature) <= bestThreshold ? leftIdx : rightIdx).push_back(i);
        }
        if (leftIdx.empty() || rightIdx.empty()) return id;
        nodes_[static_cast<std::size_t>(id)].feature = bestFeature;
        nodes_[static_cast<std::size_t>(id)].threshold = bestThreshold;
        int left = build(x, y, std::move(leftIdx), depth + 1, maxDepth, mtry, rng);
        int right = build(x, y, std::move(rightIdx), depth + 1, maxDepth, mtry, rng);
        nodes_[static_cast<std::size_t>(id)].left = left;
        nodes_[static_cast<std::size_t>(id)].right = right;
        return id;
    }

    std::vector<TreeNode> nodes_;
};

class RandomForest {
public:
    RandomForest(int trees, int maxDepth, std::uint64_t seed)
        : trees_(trees), maxDepth_(maxDepth), seed_(seed) {}

    void fitForest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
        forest_.clear();
        const int n = static_cast<int>(x.rows());
        const int mtry = std::max(1, static_cast<int>(x.cols()) / 3);
        Rng root(seed_);
        for (int b = 0; b < trees_; ++b) {
            Rng rng = root.derive(static_cast<std::uint64_t>(b));
            std::vector<int> sample(static_cast<std::size_t>(n));
            for (auto& s : sample) s = rng.uniformInt(0, n - 1);
            RegressionTree tree;
            tree.fitTree(x, y, std::move(sample), maxDepth_, mtry, rng);
            forest_.push_back(std::move(tree));
        }
    }

    double predictOne(const Eigen::RowVectorXd& x) const {
        double sum = 0.0;
        for (const auto& tree : forest_) sum += tree.predictOne(x);
        return sum / static_cast<double>(forest_.size());
    }

private:
    int trees_;
    int maxDepth_;
    std::uint64_t seed_;
    std::vector<RegressionTree> forest_;
};

// --- grids -------------------------------------------------------------------

struct GridPoint {
    std::map<std::string, double> params;
};

std::vector<GridPoint> gridFor(RegressorKind kind) {
    std::vector<GridPoint> grid;
    switch (kind) {
        case RegressorKind::Ridge:
            for (int e = -3; e <= 3; ++e) {
                grid.push_back({{{"penalty", std::pow(10.0, e)}}});
            }
            break;
        case RegressorKind::KernelRidge:
            for (double mult : {0.5, 1.0, 2.0}) {
                for (double penalty : {1e-2, 1.0, 1e2}) {
                    grid.push_back({{{"bandwidth_mult", mult}, {"penalty", penalty}}});
                }
            }
            break;
        case RegressorKind::RandomForest:
            for (double depth : {3.0, 6.0, 0.0}) {  // 0 = unlimited
                grid.push_back({{{"max_depth", depth}, {"trees", 200.0}}});
            }
            break;
    }
    return grid;
}

std::vector<double> outOfFoldPredictions(const Eigen::MatrixXd& x,
                                         const Eigen::VectorXd& y, RegressorKind kind,
                                         const GridPoint& point, std::uint64_t seed) {
    const Eigen::Index n = x.rows();
    std::vector<double> preds(static_cast<std::size_t>(n));
    // standardize once on the full sample: refitting the centering inside each
    // fold makes the held-out prediction anticorrelate with the held-out label
    // (the fold mean excludes it), biasing permutation nulls negative
    Standardizer std_ = Standardizer::fitTo(x);
    Eigen::MatrixXd xall = std_.apply(x);
    const double yMean = y.mean();
    Eigen::VectorXd ycAll = y.array() - yMean;
    for (Eigen::Index held = 0; held < n; ++held) {
        Eigen::MatrixXd xs(n - 1, x.cols());
        Eigen::VectorXd yc(n - 1);
        Eigen::Index r = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (i == held) continue;
            xs.row(r) = xall.row(i);
            yc(r) = ycAll(i);
            ++r;
        }
        Eigen::RowVectorXd xh = xall.row(held);

        double pred = 0.0;
        if (kind == RegressorKind::Ridge) {
            Eigen::VectorXd beta = ridgeSolve(xs, yc, point.params.at("penalty"));
            pred = xh.dot(beta) + yMean;
        } else if (kind == RegressorKind::KernelRidge) {
            double sigma = point.params.at("bandwidth_mult") * medianPairwiseDistance(xs);
            double penalty = point.params.at("penalty");
            Eigen::MatrixXd gram(n - 1, n - 1);
            for (Eigen::Index i = 0; i < n - 1; ++i) {
                for (Eigen::Index j = 0; j < n - 1; ++j) {
                    gram(i, j) = std::exp(-(xs.row(i) - xs.row(j)).squaredNorm() /
                                          (2.0 * sigma * sigma));
                }
            }
            gram.diagonal().array() += penalty;
            Eigen::VectorXd alpha = gram.ldlt().solve(yc);
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n - 1; ++i) {
                acc += alpha(i) * std::exp(-(xs.row(i) - xh).squaredNorm() /
                                           (2.0 * sigma * sigma));
            }
            pred = acc + yMean;
        } else {
            RandomForest forest(static_cast<int>(point.params.at("trees")),
                                static_cast<int>(point.params.at("max_depth")),
                                seed + static_cast<std::uint64_t>(held));
            forest.fitForest(xs, yc);
            pred = forest.predictOne(xh) + yMean;
        }
        preds[static_cast<std::size_t>(held)] = pred;
    }
    return preds;
}

double rmseOf(const std::vector<double>& pred, const Eigen::VectorXd& y) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double e = pred[static_cast<std::size_t>(i)] - y(i);
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(y.size()));
}

}  // namespace

RegressorKind regressorFromString(const std::string& name) {
    if (name == "ridge") return RegressorKind::Ridge;
    if (name == "kernel-ridge") return RegressorKind::KernelRidge;
    if (name == "random-forest") return RegressorKind::RandomForest;
    throw std::invalid_argument("unknown regressor '" + name + "'");
}

std::string toString(RegressorKind kind) {
    switch (kind) {
        case RegressorKind::Ridge:
            return "ridge";
        case RegressorKind::KernelRidge:
            return "kernel-ridge";
        case RegressorKind::RandomForest:
        default:
            return "random-forest";
    }
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
    double num = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va <= 0.0 || vb <= 0.0) return 0.0;
    return num / std::sqrt(va * vb);
}

std::vector<double> loocvRidgePredictions(const Eigen::MatrixXd& x,
                                          const std::vector<double>& y, double penalty) {
    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(),
                                                           static_cast<Eigen::Index>(y.size()));
    GridPoint point{{{"penalty", penalty}}};
    return outOfFoldPredictions(x, yv, RegressorKind::Ridge, point, 0);
}

PredictionReport loocv(const Representation& x, const std::vector<double>& y,
                       RegressorKind kind, std::uint64_t seed) {
    if (static_cast<std::size_t>(x.vectors.rows()) != y.size()) {
        throw std::invalid_argument("representation rows and y length differ");
    }
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!std::isnan(y[i])) keep.push_back(static_cast<Eigen::Index>(i));
    }
    const Eigen::Index n = static_cast<Eigen::Index>(keep.size());
    if (n < 3) throw std::invalid_argument("need at least three series with y values");
    Eigen::MatrixXd xm(n, x.vectors.cols());
    Eigen::VectorXd yv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        xm.row(i) = x.vectors.row(keep[static_cast<std::size_t>(i)]);
        yv(i) = y[static_cast<std::size_t>(keep[static_cast<std::size_t>(i)])];
    }
    if ((yv.array() - yv.mean()).abs().maxCoeff() == 0.0) {
        throw std::invalid_argument("construct is constant; nothing to predict");
    }

    PredictionReport best;
    best.representation = x.kind;
    best.model = toString(kind);
    best.folds = static_cast<int>(n);
    best.dropped = static_cast<int>(y.size()) - static_cast<int>(n);
    best.rho = -2.0;
    std::vector<double> truth(yv.data(), yv.data() + yv.size());
    for (const auto& point : gridFor(kind)) {
        std::vector<double> preds = outOfFoldPredictions(xm, yv, kind, point, seed);
        double rho = pearson(preds, truth);
        double rmse = rmseOf(preds, yv);
        if (rho > best.rho || (rho == best.rho && rmse < best.rmse)) {
            best.rho = rho;
            best.rmse = rmse;
            best.hyper = point.params;
        }
    }
    return best;
}

StateAttribution attributeStates(const ModelFit& fit, const std::vector<double>& y,
                                 const std::string& constructName) {
    Representation stationary = stationaryRepresentation(fit);
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!std::isnan(y[i])) keep.push_back(static_cast<Eigen::Index>(i));
    }
    const Eigen::Index n = static_cast<Eigen::Index>(keep.size());
    if (n < 3) throw std::invalid_argument("need at least three series with y values");
    Eigen::MatrixXd xm(n, stationary.vectors.cols());
    Eigen::VectorXd yv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        xm.row(i) = stationary.vectors.row(keep[static_cast<std::size_t>(i)]);
        yv(i) = y[static_cast<std::size_t>(keep[static_cast<std::size_t>(i)])];
    }
    if ((yv.array() - yv.mean()).abs().maxCoeff() == 0.0) {
        throw std::invalid_argument("construct is constant; nothing to attribute");
    }
    Standardizer std_ = Standardizer::fitTo(xm);
    Eigen::MatrixXd xs = std_.apply(xm);
    Eigen::VectorXd yc = yv.array() - yv.mean();
    Eigen::VectorXd beta = ridgeSolve(xs, yc, 1e-3);

    StateAttribution out;
    out.construct = constructName;
    out.coefficients.assign(beta.data(), beta.data() + beta.size());
    out.ranking.resize(out.coefficients.size());
    std::iota(out.ranking.begin(), out.ranking.end(), 0);
    std::stable_sort(out.ranking.begin(), out.ranking.end(), [&](int a, int b) {
        return std::abs(out.coefficients[static_cast<std::size_t>(a)]) >
               std::abs(out.coefficients[static_cast<std::size_t>(b)]);
    });
    return out;
}

std::vector<PredictionReport> runBenchmark(const ModelFit& fit, const Dataset& dataset,
                                           const BenchmarkConfig& config) {
    std::vector<PredictionReport> reports;
    if (dataset.constructs.empty()) return reports;
    const int n = fit.seriesCount();

    // align construct columns to fit series order
    auto alignColumn = [&](const std::vector<double>& column) {
        std::vector<double> y(static_cast<std::size_t>(n),
                              std::numeric_limits<double>::quiet_NaN());
        for (int i = 0; i < n; ++i) {
            int row = dataset.constructs.rowOf(fit.hmms[static_cast<std::size_t>(i)].id);
            if (row >= 0) y[static_cast<std::size_t>(i)] = column[static_cast<std::size_t>(row)];
        }
        return y;
    };

    Representation stationary = stationaryRepresentation(fit);
    DistanceMatrix dmL = distanceMatrix(fit, "likelihood");
    DistanceMatrix dmV = distanceMatrix(fit, "viterbi");

    std::vector<int> ks;
    for (int k : config.spectralKs) {
        if (k >= 1 && k <= n) ks.push_back(k);
    }
    if (ks.empty()) ks.push_back(std::min(10, n));

    for (const auto& name : dataset.constructs.columnOrder) {
        auto it = dataset.constructs.numeric.find(name);
        if (it == dataset.constructs.numeric.end()) continue;
        std::vector<double> y = alignColumn(it->second);

        auto evalBest = [&](const std::string& label,
                            const std::vector<Representation>& reps) {
            PredictionReport best;
            best.rho = -2.0;
            for (const auto& rep : reps) {
                for (RegressorKind kind : config.models) {
                    PredictionReport report = loocv(rep, y, kind, config.seed);
                    report.construct = name;
                    report.representation = label;
                    report.hyper["spectral_k"] = static_cast<double>(rep.dim());
                    if (report.rho > best.rho ||
                        (report.rho == best.rho && report.rmse < best.rmse)) {
                        best = report;
                    }
                }
            }
            return best;
        };

        reports.push_back(evalBest("HMM-S", {stationary}));
        std::vector<Representation> specL, specV;
        for (int k : ks) {
            specL.push_back(spectralRepresentation(dmL, k));
            specV.push_back(spectralRepresentation(dmV, k));
        }
        reports.push_back(evalBest("HMM-SL", specL));
        reports.push_back(evalBest("HMM-SV", specV));
    }
    return reports;
}

}  // namespace bphmm
