#include "bphmm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace bphmm {
namespace {

std::vector<std::string> splitCsvLine(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        // trim surrounding whitespace and CR
        auto b = cell.find_first_not_of(" \t\r");
        auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

bool parseDouble(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

std::string formatDouble(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::vector<std::filesystem::path> seriesFiles(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw std::invalid_argument("data directory does not exist: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto& p = entry.path();
        if (p.extension() != ".csv") continue;
        if (p.filename() == "constructs.csv") continue;
        files.push_back(p);
    }
    std::sort(files.begin(), files.end());
    return files;
}

ConstructTable loadConstructs(const std::filesystem::path& file,
                              const std::set<std::string>& knownIds) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line)) {
        throw std::invalid_argument("empty constructs file: " + file.string());
    }
    auto header = splitCsvLine(line);
    if (header.empty() || header[0] != "id") {
        throw std::invalid_argument("constructs.csv header must start with 'id': " +
                                    file.string());
    }
    std::vector<std::vector<std::string>> columns(header.size());
    ConstructTable table;
    int lineNo = 1;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty()) continue;
        auto cells = splitCsvLine(line);
        if (cells.size() != header.size()) {
            throw std::invalid_argument("constructs.csv row " + std::to_string(lineNo) +
                                        " has " + std::to_string(cells.size()) +
                                        " cells, expected " + std::to_string(header.size()));
        }
        if (!knownIds.count(cells[0])) {
            throw std::invalid_argument("constructs.csv references unknown series id '" +
                                        cells[0] + "'");
        }
        table.ids.push_back(cells[0]);
        for (std::size_t c = 1; c < cells.size(); ++c) columns[c].push_back(cells[c]);
    }
    for (std::size_t c = 1; c < header.size(); ++c) {
        bool numeric = true;
        std::vector<double> parsed;
        parsed.reserve(columns[c].size());
        for (const auto& cell : columns[c]) {
            if (cell.empty()) {
                parsed.push_back(std::nan(""));
                continue;
            }
            double v;
            if (parseDouble(cell, v)) {
                parsed.push_back(v);
            } else {
                numeric = false;
                break;
            }
        }
        table.columnOrder.push_back(header[c]);
        if (numeric) {
            table.numeric[header[c]] = std::move(parsed);
        } else {
            table.categorical[header[c]] = columns[c];
        }
    }
    return table;
}

}  // namespace

void ChannelSchema::validate() const {
    if (names.empty()) throw std::invalid_argument("channel schema has no channels");
    std::set<std::string> seen(names.begin(), names.end());
    if (seen.size() != names.size()) {
        throw std::invalid_argument("channel schema has duplicate names");
    }
}

void MultiSeries::validate() const {
    schema.validate();
    if (values.cols() != static_cast<Eigen::Index>(schema.names.size())) {
        throw std::invalid_argument("series '" + id + "' has " +
                                    std::to_string(values.cols()) +
                                    " channels, schema expects " +
                                    std::to_string(schema.names.size()));
    }
    if (!values.allFinite()) {
        throw std::invalid_argument("series '" + id + "' contains NaN/Inf");
    }
}

int ConstructTable::rowOf(const std::string& id) const {
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] == id) return static_cast<int>(i);
    }
    return -1;
}

int Dataset::indexOf(const std::string& id) const {
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (series[i].id == id) return static_cast<int>(i);
    }
    return -1;
}

void Dataset::validate() const {
    std::set<std::string> ids;
    for (const auto& s : series) {
        s.validate();
        if (!ids.insert(s.id).second) {
            throw std::invalid_argument("duplicate series id '" + s.id + "'");
        }
    }
    for (const auto& id : constructs.ids) {
        if (!ids.count(id)) {
            throw std::invalid_argument("constructs table references unknown id '" + id + "'");
        }
    }
}

ChannelSchema inferSchema(const std::filesystem::path& dir) {
    auto files = seriesFiles(dir);
    if (files.empty()) throw std::invalid_argument("no series CSVs in " + dir.string());
    std::ifstream in(files.front());
    std::string line;
    if (!std::getline(in, line)) {
        throw std::invalid_argument("empty series file: " + files.front().string());
    }
    ChannelSchema schema;
    schema.names = splitCsvLine(line);
    schema.validate();
    return schema;
}

Dataset loadDataset(const std::filesystem::path& dir, const ChannelSchema& schema) {
    schema.validate();
    Dataset dataset;
    std::set<std::string> ids;
    for (const auto& file : seriesFiles(dir)) {
        std::ifstream in(file);
        if (!in) throw std::runtime_error("cannot open " + file.string());
        std::string line;
        if (!std::getline(in, line)) {
            throw std::invalid_argument("empty series file: " + file.string());
        }
        auto header = splitCsvLine(line);
        if (header != schema.names) {
            std::string msg = "schema mismatch in " + file.string() + ": expected [";
            for (const auto& n : schema.names) msg += n + ",";
            msg += "]";
            throw std::invalid_argument(msg);
        }
        std::vector<std::vector<double>> rows;
        int lineNo = 1;
        while (std::getline(in, line)) {
            ++lineNo;
            if (line.empty()) continue;
            auto cells = splitCsvLine(line);
            if (cells.size() != header.size()) {
                throw std::invalid_argument(file.string() + ":" + std::to_string(lineNo) +
                                            ": wrong cell count");
            }
            std::vector<double> row(cells.size());
            for (std::size_t c = 0; c < cells.size(); ++c) {
                if (!parseDouble(cells[c], row[c])) {
                    throw std::invalid_argument(file.string() + ":" + std::to_string(lineNo) +
                                                ": non-numeric cell in column " +
                                                std::to_string(c + 1));
                }
            }
            rows.push_back(std::move(row));
        }
        MultiSeries series;
        series.id = file.stem().string();
        series.schema = schema;
        series.values.resize(static_cast<Eigen::Index>(rows.size()),
                             static_cast<Eigen::Index>(schema.names.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t c = 0; c < rows[r].size(); ++c) {
                series.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    rows[r][c];
            }
        }
        series.validate();
        if (!ids.insert(series.id).second) {
            throw std::invalid_argument("duplicate series id '" + series.id + "'");
        }
        dataset.series.push_back(std::move(series));
    }
    auto constructsFile = dir / "constructs.csv";
    if (std::filesystem::exists(constructsFile)) {
        dataset.constructs = loadConstructs(constructsFile, ids);
    }
    dataset.validate();
    return dataset;
}

void saveDataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& s : dataset.series) {
        std::ofstream out(dir / (s.id + ".csv"));
        for (std::size_t c = 0; c < s.schema.names.size(); ++c) {
            out << (c ? "," : "") << s.schema.names[c];
        }
        out << "\n";
        for (Eigen::Index t = 0; t < s.values.rows(); ++t) {
            for (Eigen::Index c = 0; c < s.values.cols(); ++c) {
                out << (c ? "," : "") << formatDouble(s.values(t, c));
            }
            out << "\n";
        }
    }
    if (!dataset.constructs.empty()) {
        const auto& table = dataset.constructs;
        std::ofstream out(dir / "constructs.csv");
        out << "id";
        for (const auto& col : table.columnOrder) out << "," << col;
        out << "\n";
        for (std::size_t r = 0; r < table.ids.size(); ++r) {
            out << table.ids[r];
            for (const auto& col : table.columnOrder) {
                out << ",";
                auto num = table.numeric.find(col);
                if (num != table.numeric.end()) {
                    if (!std::isnan(num->second[r])) out << formatDouble(num->second[r]);
                } else {
                    out << table.categorical.at(col)[r];
                }
            }
            out << "\n";
        }
    }
}

MultiSeries zscoreNormalize(const MultiSeries& series, std::vector<int>* constantChannels) {
    series.validate();
    MultiSeries out = series;
    const auto T = static_cast<double>(series.values.rows());
    for (Eigen::Index c = 0; c < series.values.cols(); ++c) {
        double mean = series.values.col(c).mean();
        double var = (series.values.col(c).array() - mean).square().sum() / T;
        if (var <= 0.0) {
            out.values.col(c).setZero();
            if (constantChannels) constantChannels->push_back(static_cast<int>(c));
        } else {
            out.values.col(c) = (series.values.col(c).array() - mean) / std::sqrt(var);
        }
    }
    return out;
}

Dataset zscoreNormalize(const Dataset& dataset) {
    Dataset out = dataset;
    for (auto& s : out.series) s = zscoreNormalize(s);
    return out;
}

}  // namespace bphmm
