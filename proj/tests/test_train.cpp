#include <gtest/gtest.h>

#include <fstream>

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

} // namespace

TEST(BuildArchitecture, DeskCnnShape) {
    const NetworkModel m = build_architecture("cnn8", {1, 28, 28}, 10, 1);
    ASSERT_EQ(m.layers.size(), 6u);
    EXPECT_EQ(m.layers[0].name, "conv1");
    EXPECT_EQ(m.layers[4].in_features, 8u * 13 * 13);
    EXPECT_EQ(m.logit_layer_name(), "fc1");
}

TEST(BuildArchitecture, DenseChain) {
    const NetworkModel m = build_architecture("dense:16,8", {2}, 3, 1);
    // fc1 relu1 fc2 relu2 fc3 softmax
    ASSERT_EQ(m.layers.size(), 6u);
    EXPECT_EQ(m.layers[0].out_features, 16u);
    EXPECT_EQ(m.layers[2].out_features, 8u);
    EXPECT_EQ(m.layers[4].out_features, 3u);
}

TEST(BuildArchitecture, RejectsUnknownSpec) {
    EXPECT_THROW(build_architecture("transformer", {2}, 2, 1), ValidationError);
    EXPECT_THROW(build_architecture("dense:", {2}, 2, 1), ValidationError);
}

TEST(TrainFixture, TwoMoonsDenseReachesAccuracy) {
    const Dataset moons = make_two_moons(2500, 0.12, 42);
    TrainConfig tc;
    tc.seed = 42;
    tc.epochs = 60;
    tc.batch_size = 32;
    tc.learning_rate = 0.3;
    tc.target_accuracy = 0.98;
    const TrainResult r = train_fixture_classifier(moons, "dense:16", 2, tc);
    EXPECT_GE(r.holdout_accuracy, 0.98);
    EXPECT_TRUE(r.reached_target);

    const Dataset fresh = make_two_moons(2000, 0.12, 77);
    EXPECT_GE(evaluate_accuracy(r.model, fresh), 0.97);
}

TEST(TrainFixture, SeedGivesBitIdenticalBlob) {
    const Dataset moons = make_two_moons(600, 0.12, 9);
    TrainConfig tc;
    tc.seed = 123;
    tc.epochs = 5;
    tc.target_accuracy = 2.0; // never early-stop

    TempDir td("trainrepro");
    TrainResult a = train_fixture_classifier(moons, "dense:8", 2, tc);
    TrainResult b = train_fixture_classifier(moons, "dense:8", 2, tc);
    save_model(a.model, td.path("a/model.json"), "model.bin");
    save_model(b.model, td.path("b/model.json"), "model.bin");
    EXPECT_EQ(file_bytes(td.path("a/model.bin")), file_bytes(td.path("b/model.bin")));
    EXPECT_EQ(file_bytes(td.path("a/model.json")), file_bytes(td.path("b/model.json")));
}

TEST(TrainFixture, DigitsSubsetTrainsWell) {
    const Dataset digits = synth_dataset(SynthFamily::digits, 2500, 42);
    TrainConfig tc;
    tc.seed = 42;
    tc.epochs = 8;
    const TrainResult r = train_fixture_classifier(digits, "cnn8", 10, tc);
    EXPECT_GE(r.holdout_accuracy, 0.90);

    // per-class recall on fresh data; the sevens in particular
    const Dataset fresh = synth_dataset(SynthFamily::digits, 2000, 99);
    std::size_t sevens = 0, sevens_right = 0;
    for (std::size_t i = 0; i < fresh.size(); ++i) {
        if ((*fresh.labels)[i] != 7) continue;
        ++sevens;
        if (predict_class(r.model, fresh.images[i]) == 7) ++sevens_right;
    }
    ASSERT_GT(sevens, 50u);
    EXPECT_GE(static_cast<double>(sevens_right) / static_cast<double>(sevens), 0.90);
}

TEST(TrainFixture, RequiresLabels) {
    Dataset unlabeled;
    unlabeled.images.push_back(Tensor({2}, {0, 0}));
    unlabeled.images.push_back(Tensor({2}, {1, 1}));
    EXPECT_THROW(train_fixture_classifier(unlabeled, "dense:4", 2, TrainConfig{}), ValidationError);
}

TEST(SynthData, DeterministicAndInRange) {
    const Dataset a = synth_dataset(SynthFamily::digits, 20, 5);
    const Dataset b = synth_dataset(SynthFamily::digits, 20, 5);
    ASSERT_TRUE(a.labels && b.labels);
    for (int i = 0; i < 20; ++i) {
        EXPECT_EQ((*a.labels)[i], (*b.labels)[i]);
        for (std::size_t k = 0; k < a.images[i].numel(); ++k) {
            EXPECT_EQ(a.images[i].data[k], b.images[i].data[k]);
            EXPECT_GE(a.images[i].data[k], 0.0);
            EXPECT_LE(a.images[i].data[k], 1.0);
        }
    }
}

TEST(SynthData, FamiliesDiffer) {
    const Dataset d = synth_dataset(SynthFamily::digits, 10, 3);
    const Dataset l = synth_dataset(SynthFamily::letters, 10, 3);
    const Dataset f = synth_dataset(SynthFamily::fashion, 10, 3);
    EXPECT_FALSE(l.labels.has_value());
    EXPECT_FALSE(f.labels.has_value());
    // fashion silhouettes carry much more ink than stroke glyphs
    auto mean_ink = [](const Dataset& ds) {
        double acc = 0.0;
        std::size_t n = 0;
        for (const Tensor& t : ds.images)
            for (double v : t.data) {
                acc += v;
                ++n;
            }
        return acc / static_cast<double>(n);
    };
    EXPECT_GT(mean_ink(f), 2.0 * mean_ink(d));
}
