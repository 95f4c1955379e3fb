#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "bphmm/data.hpp"
#include "bphmm/io.hpp"

using namespace bphmm;
namespace fs = std::filesystem;

namespace {

fs::path freshDir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

ModelFit sampleFit() {
    SynthSpec spec;
    spec.seriesCount = 4;
    spec.trueStates = 3;
    spec.channels = 2;
    spec.minLength = spec.maxLength = 60;
    spec.seed = 21;
    auto [dataset, truth] = generate(spec);
    Hyperparams hyper;
    hyper.mcmc.sweeps = 5;
    hyper.mcmc.seed = 4;
    return fit(zscoreNormalize(dataset), hyper);
}

}  // namespace

TEST_CASE("model fit round-trips through JSON exactly") {
    fs::path dir = freshDir("bphmm_io_fit");
    ModelFit original = sampleFit();
    saveFit(original, dir / "fit.json");
    ModelFit loaded = loadFit(dir / "fit.json");
    CHECK(loaded.featureMatrix == original.featureMatrix);
    REQUIRE(loaded.states.size() == original.states.size());
    for (std::size_t k = 0; k < original.states.size(); ++k) {
        CHECK(loaded.states[k].coeffs == original.states[k].coeffs);
        CHECK(loaded.states[k].covariance == original.states[k].covariance);
    }
    REQUIRE(loaded.hmms.size() == original.hmms.size());
    for (std::size_t i = 0; i < original.hmms.size(); ++i) {
        CHECK(loaded.hmms[i].id == original.hmms[i].id);
        CHECK(loaded.hmms[i].active == original.hmms[i].active);
        CHECK(loaded.hmms[i].trans == original.hmms[i].trans);
        CHECK(loaded.sequences[i].z == original.sequences[i].z);
    }
    CHECK(loaded.hyper.alpha == original.hyper.alpha);
    CHECK(loaded.hyper.mcmc.seed == original.hyper.mcmc.seed);
    // a second save of the loaded fit is byte-identical
    saveFit(loaded, dir / "fit2.json");
    CHECK(slurp(dir / "fit.json") == slurp(dir / "fit2.json"));
}

TEST_CASE("loadFit rejects unknown formats and corrupt documents") {
    fs::path dir = freshDir("bphmm_io_badfit");
    {
        std::ofstream out(dir / "bad.json");
        out << "{\"format\": 99}";
    }
    CHECK_THROWS_AS(loadFit(dir / "bad.json"), std::invalid_argument);
    {
        std::ofstream out(dir / "garbage.json");
        out << "not json at all {";
    }
    CHECK_THROWS(loadFit(dir / "garbage.json"));
    CHECK_THROWS(loadFit(dir / "missing.json"));
}

TEST_CASE("distance matrix round-trips through CSV exactly") {
    fs::path dir = freshDir("bphmm_io_dm");
    DistanceMatrix dm;
    dm.ids = {"a", "b", "c"};
    dm.measure = "viterbi";
    dm.values.resize(3, 3);
    dm.values << 0.0, 1.0 / 3.0, 2.25, 1.0 / 3.0, 0.0, 1e-17, 2.25, 1e-17, 0.0;
    saveDistanceCsv(dm, dir / "dm.csv");
    DistanceMatrix back = loadDistanceCsv(dir / "dm.csv", "viterbi");
    CHECK(back.ids == dm.ids);
    CHECK(back.measure == "viterbi");
    CHECK(back.values == dm.values);  // bit-exact via round-trip formatting
}

TEST_CASE("representation CSV carries ids and full precision") {
    fs::path dir = freshDir("bphmm_io_rep");
    Representation rep;
    rep.ids = {"x", "y"};
    rep.kind = "stationary";
    rep.vectors.resize(2, 2);
    rep.vectors << 0.1, 0.9, 2.0 / 3.0, 1.0 / 3.0;
    saveRepresentationCsv(rep, dir / "rep.csv");
    std::string text = slurp(dir / "rep.csv");
    CHECK(text.find("x") != std::string::npos);
    CHECK(text.find("0.6666666666666666") != std::string::npos);
}

TEST_CASE("dendrogram writers emit consistent structures") {
    fs::path dir = freshDir("bphmm_io_dend");
    DistanceMatrix dm;
    dm.ids = {"a", "b", "c"};
    dm.measure = "likelihood";
    dm.values.resize(3, 3);
    dm.values << 0, 1, 5, 1, 0, 4, 5, 4, 0;
    Dendrogram dend = agglomerate(dm, Linkage::Average);
    saveDendrogramJson(dend, dir / "dend.json");
    saveNewick(dend, dir / "dend.nwk");
    std::string json = slurp(dir / "dend.json");
    CHECK(json.find("\"height\"") != std::string::npos);
    std::string nwk = slurp(dir / "dend.nwk");
    CHECK(nwk.find("a") != std::string::npos);
    CHECK(nwk.find(';') != std::string::npos);
}

TEST_CASE("labels and group tests serialize to readable CSV") {
    fs::path dir = freshDir("bphmm_io_labels");
    ClusterLabels labels;
    labels.ids = {"a", "b"};
    labels.labels = {0, -1};
    saveLabelsCsv(labels, dir / "labels.csv");
    std::string text = slurp(dir / "labels.csv");
    CHECK(text.find("a,0") != std::string::npos);
    CHECK(text.find("b,-1") != std::string::npos);

    GroupTest t;
    t.variable = "anxiety";
    t.test = "kruskal-wallis";
    t.statistic = 4.5;
    t.pValue = 0.03;
    saveGroupTestsCsv({t}, dir / "tests.csv");
    std::string tcsv = slurp(dir / "tests.csv");
    CHECK(tcsv.find("anxiety") != std::string::npos);
    CHECK(tcsv.find("kruskal-wallis") != std::string::npos);
}

TEST_CASE("prediction reports serialize to CSV and JSON") {
    fs::path dir = freshDir("bphmm_io_reports");
    PredictionReport r;
    r.construct = "stress";
    r.representation = "HMM-SL";
    r.model = "ridge";
    r.rho = 0.41;
    r.rmse = 0.9;
    r.folds = 20;
    saveReportsCsv({r}, dir / "report.csv");
    saveReportsJson({r}, dir / "report.json");
    CHECK(slurp(dir / "report.csv").find("stress") != std::string::npos);
    CHECK(slurp(dir / "report.json").find("HMM-SL") != std::string::npos);
}

TEST_CASE("truth bundle round-trips") {
    fs::path dir = freshDir("bphmm_io_truth");
    SynthSpec spec;
    spec.seriesCount = 3;
    spec.trueStates = 2;
    spec.channels = 1;
    spec.minLength = spec.maxLength = 40;
    spec.seed = 31;
    auto [dataset, truth] = generate(spec);
    saveTruth(truth, dir / "truth.json");
    TruthBundle back = loadTruth(dir / "truth.json");
    CHECK(back.featureMatrix == truth.featureMatrix);
    REQUIRE(back.sequences.size() == truth.sequences.size());
    for (std::size_t i = 0; i < truth.sequences.size(); ++i) {
        CHECK(back.sequences[i].z == truth.sequences[i].z);
    }
    CHECK(back.stationary == truth.stationary);
    REQUIRE(back.states.size() == truth.states.size());
    CHECK(back.states[0].coeffs == truth.states[0].coeffs);
}

TEST_CASE("trace CSV has one row per sweep") {
    fs::path dir = freshDir("bphmm_io_trace");
    saveTrace({-10.0, -8.5, -8.0}, dir / "trace.csv");
    std::string text = slurp(dir / "trace.csv");
    CHECK(text.find("sweep") != std::string::npos);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);  // header + 3 rows
}
