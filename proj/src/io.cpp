#include "bphmm/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace bphmm {
namespace {

using nlohmann::json;

json matrixToJson(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrixFromJson(const json& rows) {
    if (rows.empty()) return Eigen::MatrixXd(0, 0);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rows[i][j].get<double>();
        }
    }
    return m;
}

json intMatrixToJson(const Eigen::MatrixXi& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXi intMatrixFromJson(const json& rows) {
    if (rows.empty()) return Eigen::MatrixXi(0, 0);
    Eigen::MatrixXi m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rows[i][j].get<int>();
        }
    }
    return m;
}

json stateToJson(const ArState& state) {
    return json{{"A", matrixToJson(state.coeffs)},
                {"Sigma", matrixToJson(state.covariance)}};
}

ArState stateFromJson(const json& j) {
    ArState state;
    state.coeffs = matrixFromJson(j.at("A"));
    state.covariance = matrixFromJson(j.at("Sigma"));
    return state;
}

json hmmToJson(const SeriesHmm& hmm) {
    return json{{"id", hmm.id}, {"active", hmm.active}, {"trans", matrixToJson(hmm.trans)}};
}

SeriesHmm hmmFromJson(const json& j) {
    SeriesHmm hmm;
    hmm.id = j.at("id").get<std::string>();
    hmm.active = j.at("active").get<std::vector<int>>();
    hmm.trans = matrixFromJson(j.at("trans"));
    return hmm;
}

void writeJsonFile(const json& j, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

json readJsonFile(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    json j;
    in >> j;
    return j;
}

std::string formatDouble(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

void requireFormat(const json& j, const std::filesystem::path& path) {
    if (!j.contains("format") || j.at("format").get<int>() != 1) {
        throw std::invalid_argument("unsupported format version in " + path.string());
    }
}

}  // namespace

void saveFit(const ModelFit& fit, const std::filesystem::path& path) {
    json j;
    j["format"] = 1;
    j["hyper"] = {
        {"alpha", fit.hyper.alpha},
        {"lag", fit.hyper.lag},
        {"sticky_kappa", fit.hyper.stickyKappa},
        {"dirichlet_gamma", fit.hyper.dirichletGamma},
        {"mniw",
         {{"M", matrixToJson(fit.hyper.prior.meanCoeffs)},
          {"V", matrixToJson(fit.hyper.prior.columnScale)},
          {"S0", matrixToJson(fit.hyper.prior.iwScale)},
          {"n0", fit.hyper.prior.iwDof}}},
        {"mcmc",
         {{"sweeps", fit.hyper.mcmc.sweeps},
          {"burnin", fit.hyper.mcmc.burnin},
          {"seed", fit.hyper.mcmc.seed}}},
    };
    j["states"] = json::array();
    for (const auto& state : fit.states) j["states"].push_back(stateToJson(state));
    j["F"] = intMatrixToJson(fit.featureMatrix);
    j["series"] = json::array();
    for (int i = 0; i < fit.seriesCount(); ++i) {
        json s = hmmToJson(fit.hmms[static_cast<std::size_t>(i)]);
        s["z"] = fit.sequences[static_cast<std::size_t>(i)].z;
        j["series"].push_back(std::move(s));
    }
    j["diagnostics"] = {{"joint_loglik", fit.loglikTrace}};
    if (!fit.pruneFallbacks.empty()) j["prune_fallbacks"] = fit.pruneFallbacks;
    writeJsonFile(j, path);
}

ModelFit loadFit(const std::filesystem::path& path) {
    json j = readJsonFile(path);
    requireFormat(j, path);
    ModelFit fit;
    const auto& h = j.at("hyper");
    fit.hyper.alpha = h.at("alpha").get<double>();
    fit.hyper.lag = h.at("lag").get<int>();
    fit.hyper.stickyKappa = h.at("sticky_kappa").get<double>();
    fit.hyper.dirichletGamma = h.at("dirichlet_gamma").get<double>();
    fit.hyper.prior.meanCoeffs = matrixFromJson(h.at("mniw").at("M"));
    fit.hyper.prior.columnScale = matrixFromJson(h.at("mniw").at("V"));
    fit.hyper.prior.iwScale = matrixFromJson(h.at("mniw").at("S0"));
    fit.hyper.prior.iwDof = h.at("mniw").at("n0").get<double>();
    fit.hyper.mcmc.sweeps = h.at("mcmc").at("sweeps").get<int>();
    fit.hyper.mcmc.burnin = h.at("mcmc").at("burnin").get<int>();
    fit.hyper.mcmc.seed = h.at("mcmc").at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("states")) fit.states.push_back(stateFromJson(s));
    fit.featureMatrix = intMatrixFromJson(j.at("F"));
    for (const auto& s : j.at("series")) {
        fit.hmms.push_back(hmmFromJson(s));
        StateSequence seq;
        seq.id = fit.hmms.back().id;
        seq.z = s.at("z").get<std::vector<int>>();
        fit.sequences.push_back(std::move(seq));
    }
    fit.loglikTrace = j.at("diagnostics").at("joint_loglik").get<std::vector<double>>();
    if (j.contains("prune_fallbacks")) {
        fit.pruneFallbacks = j.at("prune_fallbacks").get<std::vector<std::string>>();
    }
    fit.validate();
    return fit;
}

void saveTrace(const std::vector<double>& trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "sweep,joint_loglik\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out << i << "," << formatDouble(trace[i]) << "\n";
    }
}

void saveDistanceCsv(const DistanceMatrix& dm, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "id";
    for (const auto& id : dm.ids) out << "," << id;
    out << "\n";
    for (Eigen::Index i = 0; i < dm.size(); ++i) {
        out << dm.ids[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < dm.size(); ++j) out << "," << formatDouble(dm.values(i, j));
        out << "\n";
    }
}

void saveDistanceJson(const DistanceMatrix& dm, const std::filesystem::path& path) {
    writeJsonFile(json{{"format", 1},
                       {"measure", dm.measure},
                       {"ids", dm.ids},
                       {"values", matrixToJson(dm.values)}},
                  path);
}

DistanceMatrix loadDistanceCsv(const std::filesystem::path& path,
                               const std::string& measure) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("empty file " + path.string());
    DistanceMatrix dm;
    dm.measure = measure;
    {
        std::stringstream ss(line);
        std::string cell;
        bool first = true;
        while (std::getline(ss, cell, ',')) {
            if (!cell.empty() && cell.back() == '\r') cell.pop_back();
            if (first) {
                first = false;
                continue;
            }
            dm.ids.push_back(cell);
        }
    }
    const Eigen::Index n = static_cast<Eigen::Index>(dm.ids.size());
    dm.values.resize(n, n);
    Eigen::Index row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        Eigen::Index col = -1;
        while (std::getline(ss, cell, ',')) {
            if (col >= 0) dm.values(row, col) = std::stod(cell);
            ++col;
        }
        ++row;
    }
    if (row != n) throw std::invalid_argument("distance CSV row/header mismatch");
    dm.validate();
    return dm;
}

void saveRepresentationCsv(const Representation& rep, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "id";
    for (Eigen::Index c = 0; c < rep.dim(); ++c) out << ",v" << c;
    out << "\n";
    for (Eigen::Index i = 0; i < rep.vectors.rows(); ++i) {
        out << rep.ids[static_cast<std::size_t>(i)];
        for (Eigen::Index c = 0; c < rep.dim(); ++c) {
            out << "," << formatDouble(rep.vectors(i, c));
        }
        out << "\n";
    }
}

void saveRepresentationJson(const Representation& rep, const std::filesystem::path& path) {
    writeJsonFile(json{{"format", 1},
                       {"kind", rep.kind},
                       {"K", rep.dim()},
                       {"ids", rep.ids},
                       {"vectors", matrixToJson(rep.vectors)}},
                  path);
}

void saveDendrogramJson(const Dendrogram& dend, const std::filesystem::path& path) {
    json merges = json::array();
    for (const auto& m : dend.merges) {
        merges.push_back({{"a", m.nodeA}, {"b", m.nodeB}, {"height", m.height}, {"size", m.size}});
    }
    writeJsonFile(json{{"format", 1}, {"leaves", dend.leafIds}, {"merges", merges}}, path);
}

void saveNewick(const Dendrogram& dend, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << toNewick(dend) << "\n";
}

void saveLabelsCsv(const ClusterLabels& labels, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "id,cluster\n";
    for (std::size_t i = 0; i < labels.ids.size(); ++i) {
        out << labels.ids[i] << "," << labels.labels[i] << "\n";
    }
}

void saveGroupTestsCsv(const std::vector<GroupTest>& tests,
                       const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "variable,test,statistic,p_value,testable,small_expected_counts\n";
    for (const auto& t : tests) {
        out << t.variable << "," << t.test << "," << formatDouble(t.statistic) << ","
            << formatDouble(t.pValue) << "," << (t.testable ? 1 : 0) << ","
            << (t.smallExpectedCounts ? 1 : 0) << "\n";
    }
}

void saveReportsCsv(const std::vector<PredictionReport>& reports,
                    const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "construct,representation,model,rho,rmse\n";
    for (const auto& r : reports) {
        out << r.construct << "," << r.representation << "," << r.model << ","
            << formatDouble(r.rho) << "," << formatDouble(r.rmse) << "\n";
    }
}

void saveReportsJson(const std::vector<PredictionReport>& reports,
                     const std::filesystem::path& path) {
    json arr = json::array();
    for (const auto& r : reports) {
        arr.push_back({{"construct", r.construct},
                       {"representation", r.representation},
                       {"model", r.model},
                       {"hyper", r.hyper},
                       {"rho", r.rho},
                       {"rmse", r.rmse},
                       {"folds", r.folds},
                       {"dropped", r.dropped}});
    }
    writeJsonFile(json{{"format", 1}, {"reports", arr}}, path);
}

void saveTruth(const TruthBundle& truth, const std::filesystem::path& path) {
    json j;
    j["format"] = 1;
    j["F"] = intMatrixToJson(truth.featureMatrix);
    j["states"] = json::array();
    for (const auto& s : truth.states) j["states"].push_back(stateToJson(s));
    j["series"] = json::array();
    for (std::size_t i = 0; i < truth.hmms.size(); ++i) {
        json s = hmmToJson(truth.hmms[i]);
        s["z"] = truth.sequences[i].z;
        j["series"].push_back(std::move(s));
    }
    j["stationary"] = matrixToJson(truth.stationary);
    writeJsonFile(j, path);
}

TruthBundle loadTruth(const std::filesystem::path& path) {
    json j = readJsonFile(path);
    requireFormat(j, path);
    TruthBundle truth;
    truth.featureMatrix = intMatrixFromJson(j.at("F"));
    for (const auto& s : j.at("states")) truth.states.push_back(stateFromJson(s));
    for (const auto& s : j.at("series")) {
        truth.hmms.push_back(hmmFromJson(s));
        StateSequence seq;
        seq.id = truth.hmms.back().id;
        seq.z = s.at("z").get<std::vector<int>>();
        truth.sequences.push_back(std::move(seq));
    }
    truth.stationary = matrixFromJson(j.at("stationary"));
    return truth;
}

void saveRecovery(const RecoveryMetrics& metrics, const std::filesystem::path& path) {
    writeJsonFile(json{{"format", 1},
                       {"sequence_accuracy", metrics.sequenceAccuracy},
                       {"delta_k", metrics.deltaK},
                       {"feature_agreement", metrics.featureAgreement},
                       {"matching", metrics.matching}},
                  path);
}

}  // namespace bphmm
