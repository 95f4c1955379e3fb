#pragma once

#include <string>
#include <vector>

#include "bphmm/distance.hpp"
#include "bphmm/embedding.hpp"
#include "bphmm/types.hpp"

namespace bphmm {

enum class Linkage { Single, Complete, Average };

Linkage linkageFromString(const std::string& name);

struct Merge {
    int nodeA = 0;  // node ids: 0..N-1 leaves, N+i the cluster of merge i
    int nodeB = 0;
    double height = 0.0;
    int size = 0;
};

struct Dendrogram {
    std::vector<std::string> leafIds;
    std::vector<Merge> merges;  // N-1 entries, nondecreasing heights
};

// Bottom-up merging under the chosen linkage; ties broken by the smallest
// (i, j) node-id pair.
Dendrogram agglomerate(const DistanceMatrix& dm, Linkage linkage = Linkage::Average);

struct ClusterLabels {
    std::vector<std::string> ids;
    std::vector<int> labels;  // -1 = unassigned (component too small)
    int minSize = 5;

    int clusterCount() const;
};

// Connected components under merges at height <= cut; components of size
// <= minSize are reported unassigned.
ClusterLabels cut(const Dendrogram& dend, double height, int minSize = 5);

// Midpoint of the largest gap between consecutive merge heights.
double largestGapHeight(const Dendrogram& dend);

struct GroupTest {
    std::string variable;
    std::string test;  // "chi-square" | "kruskal-wallis"
    double statistic = 0.0;
    double pValue = 1.0;
    bool testable = true;
    bool smallExpectedCounts = false;  // chi-square cells with E < 5
};

// Categorical variables get a chi-square test of independence, numeric ones
// Kruskal-Wallis across clusters; results sorted by ascending p-value.
std::vector<GroupTest> groupTests(const ClusterLabels& labels, const ConstructTable& table);

// Mean stationary-state frequency per cluster, for inspecting what separates
// the clusters (rows = clusters in label order, cols = global states).
Eigen::MatrixXd clusterStateFrequencies(const ClusterLabels& labels,
                                        const Representation& stationary);

std::string toNewick(const Dendrogram& dend);

// Survival function of the chi-square distribution (regularized upper
// incomplete gamma).
double chiSquareSf(double x, double dof);

}  // namespace bphmm
