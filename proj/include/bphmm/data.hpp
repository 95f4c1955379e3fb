#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bphmm/types.hpp"

namespace bphmm {

// Reads the header row of the first CSV in `dir` (lexicographic order,
// constructs.csv excluded) and returns it as a schema.
ChannelSchema inferSchema(const std::filesystem::path& dir);

// One CSV per series (header row = channel names), optional constructs.csv
// keyed by series id. Throws std::invalid_argument naming the offending file
// on schema mismatch, parse failure, duplicate id, or dangling construct id.
Dataset loadDataset(const std::filesystem::path& dir, const ChannelSchema& schema);

// Re-emits the dataset in the same CSV layout at full decimal precision.
void saveDataset(const Dataset& dataset, const std::filesystem::path& dir);

// Per-channel Z-score with the population std convention (divide by T).
// Constant channels become all-zero and their indices are appended to
// `constantChannels` when given.
MultiSeries zscoreNormalize(const MultiSeries& series,
                            std::vector<int>* constantChannels = nullptr);

Dataset zscoreNormalize(const Dataset& dataset);

}  // namespace bphmm
