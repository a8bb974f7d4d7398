#include <gtest/gtest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "anomaly/pipeline.hpp"
#include "anomaly/synth.hpp"
#include "anomaly/train.hpp"
#include "testutil.hpp"

using namespace anomaly;
using testutil::TempDir;

namespace {

std::string file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

Dataset shifted_cluster(std::size_t n, double cx, double cy, std::uint64_t seed) {
    Dataset ds;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i)
        ds.images.push_back(Tensor({2}, {cx + rng.normal(0, 0.3), cy + rng.normal(0, 0.3)}));
    return ds;
}

// one shared on-disk two-moons experiment
struct MoonsExperiment {
    TempDir td{"pipeline"};
    ExperimentConfig cfg;

    MoonsExperiment() {
        Dataset train = make_two_moons(2500, 0.12, 42);
        Dataset calib = make_two_moons(3000, 0.12, 43);
        Dataset test = make_two_moons(3000, 0.12, 44);
        Dataset mix = shifted_cluster(400, -3.0, 3.0, 45);
        Dataset ood = shifted_cluster(800, 4.0, 4.0, 46);

        TrainConfig tc;
        tc.seed = 42;
        tc.epochs = 60;
        tc.batch_size = 32;
        tc.learning_rate = 0.3;
        tc.target_accuracy = 0.985;
        TrainResult tr = train_fixture_classifier(train, "dense:16", 2, tc);
        save_model(tr.model, td.path("model.json"), "model.bin");

        write_raw(train, td.path("train.rtds"));
        write_raw(calib, td.path("calib.rtds"));
        write_raw(test, td.path("test.rtds"));
        write_raw(mix, td.path("mix.rtds"));
        write_raw(ood, td.path("ood.rtds"));

        nlohmann::json j;
        j["seed"] = 42;
        j["model_manifest"] = td.path("model.json");
        j["output_dir"] = td.path("out");
        j["datasets"] = {{"id_train", td.path("train.rtds")},
                         {"id_calibration", td.path("calib.rtds")},
                         {"id_test", td.path("test.rtds")},
                         {"mix", td.path("mix.rtds")},
                         {"anomaly_sets",
                          {{{"name", "shifted_ood"}, {"family", "ood"}, {"path", td.path("ood.rtds")}}}}};
        j["detector"] = {{"beta1", 0.5},
                         {"beta2", 0.5},
                         {"target_tpr", 0.95},
                         {"candidate_layers", {"fc1", "relu1"}},
                         {"svdd", {{"nu", 0.1}}}};
        std::ofstream f(td.path("config.json"));
        f << j.dump(2);
        f.close();
        cfg = load_experiment_config(td.path("config.json"));
    }
};

MoonsExperiment& experiment() {
    static MoonsExperiment e;
    return e;
}

} // namespace

TEST(Pipeline, TwoMoonsEndToEnd) {
    auto& e = experiment();
    const PipelineResult res = run_pipeline(e.cfg);
    write_pipeline_artifacts(e.cfg, res);

    EXPECT_FALSE(res.mdl_layer.empty());
    const EvalReport& rep = res.reports_ours.at("shifted_ood");
    EXPECT_GE(rep.auroc, 0.99); // far off-manifold cluster
    for (const auto& [cls, rate] : res.per_class_acceptance) EXPECT_NEAR(rate, 0.95, 0.025);

    for (const char* name : {"bundle.json", "scores.csv", "report.json", "report.txt"})
        EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(e.td.path("out")) / name)) << name;

    // report.json parses and embeds provenance
    nlohmann::json rj = nlohmann::json::parse(file_bytes(e.td.path("out") + "/report.json"));
    EXPECT_EQ(rj.at("config_hash").get<std::string>(), e.cfg.config_hash);
    EXPECT_EQ(rj.at("seed").get<std::uint64_t>(), 42u);

    const std::string csv = file_bytes(e.td.path("out") + "/scores.csv");
    EXPECT_NE(csv.find("config_hash=" + e.cfg.config_hash), std::string::npos);
}

TEST(Pipeline, RerunIsByteIdentical) {
    auto& e = experiment();
    const PipelineResult res1 = run_pipeline(e.cfg);
    write_pipeline_artifacts(e.cfg, res1);
    std::map<std::string, std::string> snapshot;
    for (const char* name : {"bundle.json", "scores.csv", "report.json", "report.txt"})
        snapshot[name] = file_bytes(e.td.path("out") + "/" + name);

    const PipelineResult res2 = run_pipeline(e.cfg);
    write_pipeline_artifacts(e.cfg, res2);
    for (const auto& [name, bytes] : snapshot)
        EXPECT_EQ(file_bytes(e.td.path("out") + "/" + name), bytes) << name;
}

TEST(Pipeline, EmptyAnomalyListGivesCalibrationOnly) {
    auto& e = experiment();
    ExperimentConfig cfg = e.cfg;
    cfg.anomaly_sets.clear();
    cfg.output_dir = e.td.path("out_empty");
    const PipelineResult res = run_pipeline(cfg);
    write_pipeline_artifacts(cfg, res);
    EXPECT_TRUE(res.anomalies.empty());
    EXPECT_FALSE(res.per_class_acceptance.empty());
    const std::string txt = file_bytes(e.td.path("out_empty") + "/report.txt");
    EXPECT_NE(txt.find("calibration statistics only"), std::string::npos);
}

TEST(Pipeline, TestPathMustDiffer) {
    auto& e = experiment();
    ExperimentConfig cfg = e.cfg;
    cfg.id_test_path = cfg.id_calibration_path;
    EXPECT_THROW(run_pipeline(cfg), ValidationError);
}

TEST(Pipeline, MixContentMustDifferFromEvalSets) {
    auto& e = experiment();
    // same content under a different name still collides by hash
    const Dataset ood = ingest_raw(e.td.path("ood.rtds"));
    write_raw(ood, e.td.path("mix_copy.rtds"));
    ExperimentConfig cfg = e.cfg;
    cfg.mix_path = e.td.path("mix_copy.rtds");
    EXPECT_THROW(run_pipeline(cfg), ValidationError);
}

TEST(Pipeline, PinnedMdlSkipsSelection) {
    auto& e = experiment();
    ExperimentConfig cfg = e.cfg;
    cfg.mdl_layer = "relu1";
    cfg.mix_path.clear();
    cfg.output_dir = e.td.path("out_pinned");
    const PipelineResult res = run_pipeline(cfg);
    EXPECT_EQ(res.mdl_layer, "relu1");
}

TEST(Pipeline, MalformedConfigIsValidationError) {
    auto& e = experiment();
    std::ofstream f(e.td.path("bad.json"));
    f << "{ nope";
    f.close();
    EXPECT_THROW(load_experiment_config(e.td.path("bad.json")), ValidationError);
}
