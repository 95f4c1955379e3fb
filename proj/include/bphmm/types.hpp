#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace bphmm {

struct ChannelSchema {
    std::vector<std::string> names;
    std::vector<std::string> units;  // optional, may be empty or shorter

    void validate() const;
};

// One participant's multichannel signal. Rows are time steps.
struct MultiSeries {
    std::string id;
    Eigen::MatrixXd values;  // T x D
    ChannelSchema schema;

    Eigen::Index length() const { return values.rows(); }
    Eigen::Index channels() const { return values.cols(); }
    void validate() const;
};

// Ground-truth construct scores and demographics keyed by series id.
// Columns are split by inferred type: fully numeric columns become numeric
// (NaN marks a missing cell), everything else categorical.
struct ConstructTable {
    std::vector<std::string> ids;
    std::vector<std::string> columnOrder;
    std::map<std::string, std::vector<double>> numeric;
    std::map<std::string, std::vector<std::string>> categorical;

    bool empty() const { return ids.empty(); }
    int rowOf(const std::string& id) const;  // -1 if absent
};

struct Dataset {
    std::vector<MultiSeries> series;
    ConstructTable constructs;

    int indexOf(const std::string& id) const;  // -1 if absent
    void validate() const;
};

}  // namespace bphmm
