#include "bphmm/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace bphmm {
namespace {

double lanceWilliams(Linkage linkage, double dki, double dkj, int ni, int nj) {
    switch (linkage) {
        case Linkage::Single:
            return std::min(dki, dkj);
        case Linkage::Complete:
            return std::max(dki, dkj);
        case Linkage::Average:
        default:
            return (static_cast<double>(ni) * dki + static_cast<double>(nj) * dkj) /
                   static_cast<double>(ni + nj);
    }
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    }
    void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
};

// regularized incomplete gamma, series branch
double gammaPSeries(double a, double x) {
    double sum = 1.0 / a;
    double term = sum;
    for (int n = 1; n < 500; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// continued-fraction branch for Q(a, x)
double gammaQContinued(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-15) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double chiSquareSf(double x, double dof) {
    if (x <= 0.0) return 1.0;
    double a = dof / 2.0;
    double half = x / 2.0;
    if (half < a + 1.0) return 1.0 - gammaPSeries(a, half);
    return gammaQContinued(a, half);
}

Linkage linkageFromString(const std::string& name) {
    if (name == "single") return Linkage::Single;
    if (name == "complete") return Linkage::Complete;
    if (name == "average") return Linkage::Average;
    throw std::invalid_argument("unknown linkage '" + name + "'");
}

Dendrogram agglomerate(const DistanceMatrix& dm, Linkage linkage) {
    dm.validate();
    const int n = static_cast<int>(dm.size());
    if (n < 2) throw std::invalid_argument("need at least two series to cluster");

    Dendrogram dend;
    dend.leafIds = dm.ids;

    struct Cluster {
        int node;
        int size;
    };
    std::vector<Cluster> clusters;
    for (int i = 0; i < n; ++i) clusters.push_back({i, 1});
    // dist[i][j] between current clusters i, j (indices into `clusters`)
    std::vector<std::vector<double>> dist(static_cast<std::size_t>(n),
                                          std::vector<double>(static_cast<std::size_t>(n)));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) dist[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = dm.values(i, j);
    }

    for (int step = 0; step < n - 1; ++step) {
        const int m = static_cast<int>(clusters.size());
        int bi = 0, bj = 1;
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < m; ++i) {
            for (int j = i + 1; j < m; ++j) {
                if (dist[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] < best) {
                    best = dist[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                    bi = i;
                    bj = j;
                }
            }
        }
        Merge merge;
        merge.nodeA = std::min(clusters[static_cast<std::size_t>(bi)].node,
                               clusters[static_cast<std::size_t>(bj)].node);
        merge.nodeB = std::max(clusters[static_cast<std::size_t>(bi)].node,
                               clusters[static_cast<std::size_t>(bj)].node);
        merge.height = best;
        merge.size = clusters[static_cast<std::size_t>(bi)].size +
                     clusters[static_cast<std::size_t>(bj)].size;
        // merged cluster replaces slot bi; bj removed
        std::vector<double> merged(static_cast<std::size_t>(m));
        for (int k = 0; k < m; ++k) {
            if (k == bi || k == bj) continue;
            merged[static_cast<std::size_t>(k)] = lanceWilliams(
                linkage, dist[static_cast<std::size_t>(k)][static_cast<std::size_t>(bi)],
                dist[static_cast<std::size_t>(k)][static_cast<std::size_t>(bj)],
                clusters[static_cast<std::size_t>(bi)].size,
                clusters[static_cast<std::size_t>(bj)].size);
        }
        clusters[static_cast<std::size_t>(bi)] = {n + step, merge.size};
        for (int k = 0; k < m; ++k) {
            if (k == bi || k == bj) continue;
            dist[static_cast<std::size_t>(k)][static_cast<std::size_t>(bi)] =
                merged[static_cast<std::size_t>(k)];
            dist[static_cast<std::size_t>(bi)][static_cast<std::size_t>(k)] =
                merged[static_cast<std::size_t>(k)];
        }
        clusters.erase(clusters.begin() + bj);
        for (auto& row : dist) row.erase(row.begin() + bj);
        dist.erase(dist.begin() + bj);
        dend.merges.push_back(merge);
    }
    return dend;
}

int ClusterLabels::clusterCount() const {
    std::set<int> seen;
    for (int l : labels) {
        if (l >= 0) seen.insert(l);
    }
    return static_cast<int>(seen.size());
}

ClusterLabels cut(const Dendrogram& dend, double height, int minSize) {
    if (height < 0.0) throw std::invalid_argument("cut height must be >= 0");
    const int n = static_cast<int>(dend.leafIds.size());
    // node id -> representative leaf via union-find over 2n-1 nodes
    UnionFind uf(2 * n - 1);
    for (std::size_t m = 0; m < dend.merges.size(); ++m) {
        const auto& merge = dend.merges[m];
        if (merge.height > height) continue;
        int self = n + static_cast<int>(m);
        uf.unite(merge.nodeA, self);
        uf.unite(merge.nodeB, self);
    }
    std::map<int, std::vector<int>> components;
    for (int i = 0; i < n; ++i) components[uf.find(i)].push_back(i);

    ClusterLabels out;
    out.ids = dend.leafIds;
    out.labels.assign(static_cast<std::size_t>(n), -1);
    out.minSize = minSize;
    // label clusters by smallest member index for determinism
    std::vector<std::pair<int, std::vector<int>>> ordered;
    for (auto& [root, members] : components) {
        ordered.emplace_back(members.front(), members);
    }
    std::sort(ordered.begin(), ordered.end());
    int next = 0;
    for (auto& [first, members] : ordered) {
        if (static_cast<int>(members.size()) <= minSize) continue;
        for (int i : members) out.labels[static_cast<std::size_t>(i)] = next;
        ++next;
    }
    return out;
}

double largestGapHeight(const Dendrogram& dend) {
    if (dend.merges.empty()) throw std::invalid_argument("empty dendrogram");
    if (dend.merges.size() == 1) return dend.merges.front().height / 2.0;
    double bestGap = -1.0;
    double cutAt = dend.merges.front().height / 2.0;
    for (std::size_t i = 0; i + 1 < dend.merges.size(); ++i) {
        double gap = dend.merges[i + 1].height - dend.merges[i].height;
        if (gap > bestGap) {
            bestGap = gap;
            cutAt = 0.5 * (dend.merges[i].height + dend.merges[i + 1].height);
        }
    }
    return cutAt;
}

std::vector<GroupTest> groupTests(const ClusterLabels& labels, const ConstructTable& table) {
    if (labels.clusterCount() < 2) {
        throw std::invalid_argument("need at least two assigned clusters");
    }
    // row index into table per assigned series
    std::vector<std::pair<int, int>> assigned;  // (table row, cluster)
    for (std::size_t i = 0; i < labels.ids.size(); ++i) {
        if (labels.labels[i] < 0) continue;
        int row = table.rowOf(labels.ids[i]);
        if (row >= 0) assigned.emplace_back(row, labels.labels[i]);
    }
    std::set<int> clusterSet;
    for (auto& [row, c] : assigned) clusterSet.insert(c);
    std::vector<int> clusterIds(clusterSet.begin(), clusterSet.end());
    const int g = static_cast<int>(clusterIds.size());

    std::vector<GroupTest> results;
    for (const auto& variable : table.columnOrder) {
        GroupTest result;
        result.variable = variable;
        auto cat = table.categorical.find(variable);
        if (cat != table.categorical.end()) {
            result.test = "chi-square";
            std::set<std::string> values;
            for (auto& [row, c] : assigned) values.insert(cat->second[static_cast<std::size_t>(row)]);
            if (values.size() < 2 || g < 2) {
                result.testable = false;
            } else {
                std::vector<std::string> cats(values.begin(), values.end());
                Eigen::MatrixXd obs = Eigen::MatrixXd::Zero(g, static_cast<int>(cats.size()));
                for (auto& [row, c] : assigned) {
                    int ci = static_cast<int>(std::find(clusterIds.begin(), clusterIds.end(), c) -
                                              clusterIds.begin());
                    int vi = static_cast<int>(
                        std::find(cats.begin(), cats.end(),
                                  cat->second[static_cast<std::size_t>(row)]) -
                        cats.begin());
                    obs(ci, vi) += 1.0;
                }
                double total = obs.sum();
                double stat = 0.0;
                for (int i = 0; i < obs.rows(); ++i) {
                    for (int j = 0; j < obs.cols(); ++j) {
                        double expected = obs.row(i).sum() * obs.col(j).sum() / total;
                        if (expected <= 0.0) continue;
                        if (expected < 5.0) result.smallExpectedCounts = true;
                        stat += (obs(i, j) - expected) * (obs(i, j) - expected) / expected;
                    }
                }
                double dof = static_cast<double>((obs.rows() - 1) * (obs.cols() - 1));
                result.statistic = stat;
                result.pValue = chiSquareSf(stat, dof);
            }
        } else {
            result.test = "kruskal-wallis";
            const auto& column = table.numeric.at(variable);
            std::vector<std::pair<double, int>> values;  // (value, cluster index)
            for (auto& [row, c] : assigned) {
                double v = column[static_cast<std::size_t>(row)];
                if (std::isnan(v)) continue;
                int ci = static_cast<int>(std::find(clusterIds.begin(), clusterIds.end(), c) -
                                          clusterIds.begin());
                values.emplace_back(v, ci);
            }
            const int nObs = static_cast<int>(values.size());
            std::set<double> distinct;
            for (auto& [v, c] : values) distinct.insert(v);
            if (distinct.size() < 2 || nObs < 3) {
                result.testable = false;
            } else {
                std::sort(values.begin(), values.end());
                std::vector<double> ranks(values.size());
                double tieCorrection = 0.0;
                for (std::size_t i = 0; i < values.size();) {
                    std::size_t j = i;
                    while (j < values.size() && values[j].first == values[i].first) ++j;
                    double avgRank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
                    for (std::size_t t = i; t < j; ++t) ranks[t] = avgRank;
                    double ties = static_cast<double>(j - i);
                    tieCorrection += ties * ties * ties - ties;
                    i = j;
                }
                std::vector<double> rankSum(static_cast<std::size_t>(g), 0.0);
                std::vector<int> counts(static_cast<std::size_t>(g), 0);
                for (std::size_t i = 0; i < values.size(); ++i) {
                    rankSum[static_cast<std::size_t>(values[i].second)] += ranks[i];
                    counts[static_cast<std::size_t>(values[i].second)]++;
                }
                double nD = static_cast<double>(nObs);
                double h = 0.0;
                for (int c = 0; c < g; ++c) {
                    if (counts[static_cast<std::size_t>(c)] == 0) continue;
                    h += rankSum[static_cast<std::size_t>(c)] *
                         rankSum[static_cast<std::size_t>(c)] /
                         static_cast<double>(counts[static_cast<std::size_t>(c)]);
                }
                h = 12.0 / (nD * (nD + 1.0)) * h - 3.0 * (nD + 1.0);
                double correction = 1.0 - tieCorrection / (nD * nD * nD - nD);
                if (correction > 0.0) h /= correction;
                result.statistic = h;
                result.pValue = chiSquareSf(h, static_cast<double>(g - 1));
            }
        }
        results.push_back(result);
    }
    std::stable_sort(results.begin(), results.end(), [](const GroupTest& a, const GroupTest& b) {
        if (a.testable != b.testable) return a.testable;
        return a.pValue < b.pValue;
    });
    return results;
}

Eigen::MatrixXd clusterStateFrequencies(const ClusterLabels& labels,
                                        const Representation& stationary) {
    std::set<int> clusterSet;
    for (int l : labels.labels) {
        if (l >= 0) clusterSet.insert(l);
    }
    std::vector<int> clusterIds(clusterSet.begin(), clusterSet.end());
    Eigen::MatrixXd freq =
        Eigen::MatrixXd::Zero(static_cast<int>(clusterIds.size()), stationary.dim());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<int>(clusterIds.size()));
    for (std::size_t i = 0; i < labels.ids.size(); ++i) {
        if (labels.labels[i] < 0) continue;
        auto it = std::find(stationary.ids.begin(), stationary.ids.end(), labels.ids[i]);
        if (it == stationary.ids.end()) continue;
        int ci = static_cast<int>(std::find(clusterIds.begin(), clusterIds.end(),
                                            labels.labels[i]) -
                                  clusterIds.begin());
        freq.row(ci) += stationary.vectors.row(it - stationary.ids.begin());
        counts(ci) += 1.0;
    }
    for (int c = 0; c < freq.rows(); ++c) {
        if (counts(c) > 0.0) freq.row(c) /= counts(c);
    }
    return freq;
}

std::string toNewick(const Dendrogram& dend) {
    const int n = static_cast<int>(dend.leafIds.size());
    std::function<std::string(int, double)> render = [&](int node, double parentHeight) {
        std::ostringstream out;
        if (node < n) {
            out << dend.leafIds[static_cast<std::size_t>(node)] << ":" << parentHeight;
        } else {
            const auto& merge = dend.merges[static_cast<std::size_t>(node - n)];
            out << "(" << render(merge.nodeA, merge.height) << ","
                << render(merge.nodeB, merge.height)
                << "):" << (parentHeight - merge.height);
        }
        return out.str();
    };
    if (dend.merges.empty()) return dend.leafIds.empty() ? ";" : dend.leafIds.front() + ";";
    int root = n + static_cast<int>(dend.merges.size()) - 1;
    const auto& rootMerge = dend.merges.back();
    std::ostringstream out;
    out << "(" << render(rootMerge.nodeA, rootMerge.height) << ","
        << render(rootMerge.nodeB, rootMerge.height) << ");";
    (void)root;
    return out.str();
}

}  // namespace bphmm
