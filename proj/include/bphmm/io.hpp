#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bphmm/cluster.hpp"
#include "bphmm/distance.hpp"
#include "bphmm/embedding.hpp"
#include "bphmm/model.hpp"
#include "bphmm/predict.hpp"
#include "bphmm/synth.hpp"

namespace bphmm {

// ModelFit as a single JSON document, format version 1.
void saveFit(const ModelFit& fit, const std::filesystem::path& path);
ModelFit loadFit(const std::filesystem::path& path);

void saveTrace(const std::vector<double>& trace, const std::filesystem::path& path);

void saveDistanceCsv(const DistanceMatrix& dm, const std::filesystem::path& path);
void saveDistanceJson(const DistanceMatrix& dm, const std::filesystem::path& path);
DistanceMatrix loadDistanceCsv(const std::filesystem::path& path, const std::string& measure);

void saveRepresentationCsv(const Representation& rep, const std::filesystem::path& path);
void saveRepresentationJson(const Representation& rep, const std::filesystem::path& path);

void saveDendrogramJson(const Dendrogram& dend, const std::filesystem::path& path);
void saveNewick(const Dendrogram& dend, const std::filesystem::path& path);
void saveLabelsCsv(const ClusterLabels& labels, const std::filesystem::path& path);
void saveGroupTestsCsv(const std::vector<GroupTest>& tests,
                       const std::filesystem::path& path);

void saveReportsCsv(const std::vector<PredictionReport>& reports,
                    const std::filesystem::path& path);
void saveReportsJson(const std::vector<PredictionReport>& reports,
                     const std::filesystem::path& path);

void saveTruth(const TruthBundle& truth, const std::filesystem::path& path);
TruthBundle loadTruth(const std::filesystem::path& path);

void saveRecovery(const RecoveryMetrics& metrics, const std::filesystem::path& path);

}  // namespace bphmm
