#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "bphmm/data.hpp"
#include "bphmm/io.hpp"

namespace fs = std::filesystem;
using namespace bphmm;

namespace {

struct CommonOpts {
    std::string out;
};

void addOut(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--out", opts.out, "output directory")
        ->envname("BPHMM_OUT")
        ->required();
}

int runSynth(const CommonOpts& common, std::uint64_t seed, int n, int k, int d, int t,
             int lag) {
    SynthSpec spec = defaultBenchmarkSpec(seed);
    spec.seriesCount = n;
    spec.trueStates = k;
    spec.channels = d;
    spec.minLength = spec.maxLength = t;
    spec.lag = lag;
    if (static_cast<int>(spec.constructs.front().weights.size()) != k) {
        spec.constructs.front().weights = Eigen::VectorXd::LinSpaced(k, 2.0, -1.0);
    }
    auto [dataset, truth] = generate(spec);
    fs::path out(common.out);
    saveDataset(dataset, out / "data");
    saveTruth(truth, out / "truth.json");
    std::cout << "wrote " << dataset.series.size() << " series to " << (out / "data").string()
              << "\n";
    return 0;
}

int runFit(const CommonOpts& common, const std::string& dataDir, Hyperparams hyper,
           bool raw) {
    Dataset dataset = loadDataset(dataDir, inferSchema(dataDir));
    if (!raw) dataset = zscoreNormalize(dataset);
    ModelFit result = fit(dataset, hyper);
    fs::path out(common.out);
    fs::create_directories(out);
    saveFit(result, out / "fit.json");
    saveTrace(result.loglikTrace, out / "loglik_trace.csv");
    std::cout << "fit: " << result.stateCount() << " states over "
              << result.seriesCount() << " series -> " << (out / "fit.json").string() << "\n";
    return 0;
}

int runPrune(const CommonOpts& common, const std::string& fitPath, double threshold,
             const std::string& dataDir) {
    ModelFit loaded = loadFit(fitPath);
    ModelFit pruned;
    if (!dataDir.empty()) {
        Dataset dataset = zscoreNormalize(loadDataset(dataDir, inferSchema(dataDir)));
        pruned = pruneRareStates(loaded, threshold, &dataset);
    } else {
        pruned = pruneRareStates(loaded, threshold);
    }
    fs::path out(common.out);
    fs::create_directories(out);
    saveFit(pruned, out / "fit_pruned.json");
    std::cout << "pruned: " << loaded.stateCount() << " -> " << pruned.stateCount()
              << " states\n";
    for (const auto& id : pruned.pruneFallbacks) {
        std::cout << "  fallback kept single state for series " << id << "\n";
    }
    return 0;
}

int runDistances(const CommonOpts& common, const std::string& fitPath,
                 const std::string& measure) {
    ModelFit loaded = loadFit(fitPath);
    fs::path out(common.out);
    fs::create_directories(out);
    std::vector<std::string> measures;
    if (measure == "both") {
        measures = {"likelihood", "viterbi"};
    } else {
        measures = {measure};
    }
    for (const auto& m : measures) {
        DistanceMatrix dm = distanceMatrix(loaded, m);
        saveDistanceCsv(dm, out / ("distances_" + m + ".csv"));
        saveDistanceJson(dm, out / ("distances_" + m + ".json"));
        std::cout << "wrote " << (out / ("distances_" + m + ".csv")).string() << "\n";
    }
    return 0;
}

int runEmbed(const CommonOpts& common, const std::string& fitPath,
             const std::string& distancesPath, const std::string& measure, int k,
             bool affinity) {
    fs::path out(common.out);
    fs::create_directories(out);
    if (!fitPath.empty()) {
        Representation rep = stationaryRepresentation(loadFit(fitPath));
        saveRepresentationCsv(rep, out / "representation_stationary.csv");
        saveRepresentationJson(rep, out / "representation_stationary.json");
        std::cout << "wrote stationary representation (d=" << rep.dim() << ")\n";
        return 0;
    }
    DistanceMatrix dm = loadDistanceCsv(distancesPath, measure);
    Representation rep = spectralRepresentation(dm, k, affinity);
    std::string stem = "representation_" + rep.kind + "_k" + std::to_string(k);
    saveRepresentationCsv(rep, out / (stem + ".csv"));
    saveRepresentationJson(rep, out / (stem + ".json"));
    std::cout << "wrote " << rep.kind << " representation (K=" << k << ")\n";
    return 0;
}

int runCluster(const CommonOpts& common, const std::string& distancesPath,
               const std::string& measure, const std::string& linkageName,
               const std::string& cutSpec, int minSize, const std::string& dataDir) {
    DistanceMatrix dm = loadDistanceCsv(distancesPath, measure);
    Dendrogram dend = agglomerate(dm, linkageFromString(linkageName));
    fs::path out(common.out);
    fs::create_directories(out);
    saveDendrogramJson(dend, out / "dendrogram.json");
    saveNewick(dend, out / "dendrogram.nwk");
    double height = cutSpec == "auto" ? largestGapHeight(dend) : std::stod(cutSpec);
    ClusterLabels labels = cut(dend, height, minSize);
    saveLabelsCsv(labels, out / "labels.csv");
    std::cout << "cut at " << height << ": " << labels.clusterCount()
              << " clusters (min size " << minSize << ")\n";
    if (!dataDir.empty()) {
        Dataset dataset = loadDataset(dataDir, inferSchema(dataDir));
        if (!dataset.constructs.empty() && labels.clusterCount() >= 2) {
            auto tests = groupTests(labels, dataset.constructs);
            saveGroupTestsCsv(tests, out / "group_tests.csv");
            for (const auto& t : tests) {
                std::cout << "  " << t.variable << " (" << t.test << "): p="
                          << (t.testable ? std::to_string(t.pValue) : "untestable") << "\n";
            }
        }
    }
    return 0;
}

int runPredict(const CommonOpts& common, const std::string& fitPath,
               const std::string& dataDir, std::uint64_t seed) {
    ModelFit loaded = loadFit(fitPath);
    Dataset dataset = loadDataset(dataDir, inferSchema(dataDir));
    BenchmarkConfig config;
    config.seed = seed;
    auto reports = runBenchmark(loaded, dataset, config);
    fs::path out(common.out);
    fs::create_directories(out);
    saveReportsCsv(reports, out / "report.csv");
    saveReportsJson(reports, out / "report.json");
    for (const auto& r : reports) {
        std::cout << r.construct << " " << r.representation << " " << r.model
                  << " rho=" << r.rho << " rmse=" << r.rmse << "\n";
    }
    return 0;
}

int runScoreRecovery(const CommonOpts& common, const std::string& fitPath,
                     const std::string& truthPath) {
    ModelFit loaded = loadFit(fitPath);
    TruthBundle truth = loadTruth(truthPath);
    RecoveryMetrics metrics = scoreRecovery(loaded, truth);
    fs::path out(common.out);
    fs::create_directories(out);
    saveRecovery(metrics, out / "recovery.json");
    std::cout << "accuracy=" << metrics.sequenceAccuracy << " deltaK=" << metrics.deltaK
              << " F-agreement=" << metrics.featureAgreement << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Shared behavioral-state discovery across multivariate time series"};
    app.require_subcommand(1);
    app.set_config("--config", "", "config file (key = value, [section] per command)");

    CommonOpts common;

    // synth
    auto* synthCmd = app.add_subcommand("synth", "generate a synthetic dataset with ground truth");
    std::uint64_t synthSeed = 0;
    int synthN = 20, synthK = 4, synthD = 3, synthT = 500, synthLag = 1;
    synthCmd->add_option("--seed", synthSeed, "rng seed");
    synthCmd->add_option("--n", synthN, "series count");
    synthCmd->add_option("--k", synthK, "true state count");
    synthCmd->add_option("--d", synthD, "channels");
    synthCmd->add_option("--t", synthT, "series length");
    synthCmd->add_option("--lag", synthLag, "AR lag");
    addOut(synthCmd, common);

    // fit
    auto* fitCmd = app.add_subcommand("fit", "fit the shared-state model");
    std::string fitData;
    Hyperparams hyper;
    hyper.mcmc.sweeps = 1000;
    bool raw = false;
    fitCmd->add_option("--data", fitData, "dataset directory")->required();
    fitCmd->add_option("--sweeps", hyper.mcmc.sweeps, "MCMC sweeps");
    fitCmd->add_option("--seed", hyper.mcmc.seed, "rng seed")->required();
    fitCmd->add_option("--alpha", hyper.alpha, "IBP mass");
    fitCmd->add_option("--kappa", hyper.stickyKappa, "sticky self-transition mass");
    fitCmd->add_option("--gamma", hyper.dirichletGamma, "Dirichlet concentration");
    fitCmd->add_option("--lag", hyper.lag, "AR lag");
    fitCmd->add_flag("--raw", raw, "skip z-score normalization");
    addOut(fitCmd, common);

    // prune
    auto* pruneCmd = app.add_subcommand("prune", "drop rare states from a fit");
    std::string pruneFit, pruneData;
    double threshold = 0.05;
    pruneCmd->add_option("--fit", pruneFit, "fit.json path")->required();
    pruneCmd->add_option("--threshold", threshold, "rarity threshold (fraction of series)");
    pruneCmd->add_option("--data", pruneData, "dataset directory for emission re-decoding");
    addOut(pruneCmd, common);

    // distances
    auto* distCmd = app.add_subcommand("distances", "pairwise distances between fitted HMMs");
    std::string distFit, distMeasure = "both";
    distCmd->add_option("--fit", distFit, "fit.json path")->required();
    distCmd->add_option("--measure", distMeasure, "likelihood | viterbi | both")
        ->check(CLI::IsMember({"likelihood", "viterbi", "both"}));
    addOut(distCmd, common);

    // embed
    auto* embedCmd = app.add_subcommand("embed", "per-series representation vectors");
    std::string embedFit, embedDistances, embedMeasure = "likelihood";
    int embedK = 10;
    bool affinity = false;
    embedCmd->add_option("--fit", embedFit, "fit.json (stationary representation)");
    embedCmd->add_option("--distances", embedDistances,
                         "distance CSV (spectral representation)");
    embedCmd->add_option("--measure", embedMeasure, "measure tag of the distance CSV")
        ->check(CLI::IsMember({"likelihood", "viterbi"}));
    embedCmd->add_option("--k", embedK, "spectral dimension");
    embedCmd->add_flag("--affinity", affinity, "Gaussian-affinity Laplacian variant");
    addOut(embedCmd, common);

    // cluster
    auto* clusterCmd = app.add_subcommand("cluster", "agglomerative clustering of a distance matrix");
    std::string clusterDistances, clusterMeasure = "likelihood";
    std::string linkageName = "average", cutSpec = "auto", clusterData;
    int minSize = 5;
    clusterCmd->add_option("--distances", clusterDistances, "distance CSV")->required();
    clusterCmd->add_option("--measure", clusterMeasure, "measure tag of the distance CSV");
    clusterCmd->add_option("--linkage", linkageName, "single | complete | average")
        ->check(CLI::IsMember({"single", "complete", "average"}));
    clusterCmd->add_option("--cut", cutSpec, "cut height, or 'auto' for the largest gap");
    clusterCmd->add_option("--min-size", minSize, "smallest reportable cluster size");
    clusterCmd->add_option("--data", clusterData, "dataset directory (enables group tests)");
    addOut(clusterCmd, common);

    // predict
    auto* predictCmd = app.add_subcommand("predict", "construct prediction benchmark");
    std::string predictFit, predictData;
    std::uint64_t predictSeed = 0;
    predictCmd->add_option("--fit", predictFit, "fit.json path")->required();
    predictCmd->add_option("--data", predictData, "dataset directory with constructs.csv")
        ->required();
    predictCmd->add_option("--seed", predictSeed, "rng seed");
    addOut(predictCmd, common);

    // score-recovery
    auto* scoreCmd = app.add_subcommand("score-recovery", "score a fit against synth ground truth");
    std::string scoreFit, scoreTruth;
    scoreCmd->add_option("--fit", scoreFit, "fit.json path")->required();
    scoreCmd->add_option("--truth", scoreTruth, "truth.json path")->required();
    addOut(scoreCmd, common);

    for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
        sub->configurable();
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synthCmd->parsed()) {
            return runSynth(common, synthSeed, synthN, synthK, synthD, synthT, synthLag);
        }
        if (fitCmd->parsed()) return runFit(common, fitData, hyper, raw);
        if (pruneCmd->parsed()) return runPrune(common, pruneFit, threshold, pruneData);
        if (distCmd->parsed()) return runDistances(common, distFit, distMeasure);
        if (embedCmd->parsed()) {
            if (embedFit.empty() == embedDistances.empty()) {
                std::cerr << "embed: give exactly one of --fit or --distances\n";
                return 2;
            }
            return runEmbed(common, embedFit, embedDistances, embedMeasure, embedK, affinity);
        }
        if (clusterCmd->parsed()) {
            return runCluster(common, clusterDistances, clusterMeasure, linkageName, cutSpec,
                              minSize, clusterData);
        }
        if (predictCmd->parsed()) return runPredict(common, predictFit, predictData, predictSeed);
        if (scoreCmd->parsed()) return runScoreRecovery(common, scoreFit, scoreTruth);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
