#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "histo/errors.hpp"
#include "histo/model_zoo.hpp"
#include "histo/nn/adam.hpp"
#include "support/fixtures.hpp"

using namespace histo;
using histo::testing::TempDir;

namespace {

nn::Tensor random_batch(int n, int hw, std::uint64_t seed) {
    nn::Tensor batch({n, hw, hw, 3});
    std::mt19937_64 rng(seed);
    for (float& v : batch.data)
        v = float((rng() >> 11) * 0x1.0p-53);
    return batch;
}

ModelConfig small_vgg19(int n_classes) {
    ModelConfig cfg;
    cfg.backbone = Backbone::VGG19;
    cfg.n_classes = n_classes;
    cfg.init_seed = 7;
    return cfg;
}

} // namespace

TEST_CASE("vgg19 structure matches the published layout") {
    ModelHandle model = build_model(small_vgg19(3));

    // 375 -> 187 -> 93 -> 46 -> 23 -> 11 through the five pools; flatten
    // length 11*11*512.
    CHECK(model.feature_dim() == 61952);

    // All convolutions 3x3, all pools 2x2.
    int convs = 0, pools = 0;
    nn::Graph& g = model.graph();
    for (int i = 0; i < g.size(); ++i) {
        if (auto* conv = dynamic_cast<nn::Conv2D*>(&g.op(i))) {
            CHECK(conv->kh == 3);
            CHECK(conv->kw == 3);
            ++convs;
        }
        if (auto* pool = dynamic_cast<nn::MaxPool*>(&g.op(i))) {
            CHECK(pool->kh == 2);
            CHECK(pool->kw == 2);
            ++pools;
        }
    }
    CHECK(convs == 16);
    CHECK(pools == 5);

    // FC1 carries 61952x512 weights plus 512 biases.
    bool found_fc1 = false;
    for (nn::Param* p : model.head_params()) {
        if (p->name == "head_fc1/kernel") {
            CHECK(p->value.shape == std::vector<int>{61952, 512});
            found_fc1 = true;
        }
        if (p->name == "head_fc1/bias")
            CHECK(p->value.shape == std::vector<int>{512});
    }
    CHECK(found_fc1);

    // Output arity per task and frozen-backbone bookkeeping.
    CHECK(model.graph().output_shape(model.softmax_node())[1] == 3);
    CHECK(model.parameter_counts().trainable_params == model.parameter_counts().head_params);
    const std::size_t fc1 = std::size_t(61952) * 512 + 512;
    const std::size_t fc2 = std::size_t(512) * 1024 + 1024;
    const std::size_t out = std::size_t(1024) * 3 + 3;
    CHECK(model.parameter_counts().head_params == fc1 + fc2 + out);
    // Published VGG19 convolutional stack size.
    CHECK(model.parameter_counts().backbone_params == 20024384);
}

TEST_CASE("binary head has two output units") {
    ModelHandle model = build_model(small_vgg19(2));
    CHECK(model.graph().output_shape(model.softmax_node())[1] == 2);
}

TEST_CASE("model config validation") {
    ModelConfig cfg = small_vgg19(3);
    cfg.n_classes = 5;
    CHECK_THROWS_AS(build_model(cfg), ConfigurationError);
    cfg = small_vgg19(3);
    cfg.fc1_units = 0;
    CHECK_THROWS_AS(build_model(cfg), ConfigurationError);
    CHECK_THROWS_AS(parse_backbone("VGG21"), RegistryError);
    CHECK(parse_backbone("DenseNet201") == Backbone::DenseNet201);
}

TEST_CASE("missing pretrained weights raise a weight-load error") {
    ModelConfig cfg = small_vgg19(3);
    cfg.weights_path = "/nonexistent/imagenet_vgg19.htlc";
    CHECK_THROWS_AS(build_model(cfg), WeightLoadError);
}

TEST_CASE("registry backbones expose the expected feature widths") {
    // Static structure checks: no forward pass involved.
    const std::pair<Backbone, int> expected[] = {
        {Backbone::VGG16, 61952},       {Backbone::VGG19, 61952},
        {Backbone::ResNet50, 2048},     {Backbone::InceptionV3, 2048},
        {Backbone::DenseNet201, 1920},  {Backbone::NASNetLarge, 4032},
    };
    for (auto [backbone, feature_dim] : expected) {
        ModelConfig cfg;
        cfg.backbone = backbone;
        cfg.n_classes = 2;
        ModelHandle model = build_model(cfg);
        INFO(backbone_name(backbone));
        CHECK(model.feature_dim() == feature_dim);
        CHECK(model.parameter_counts().trainable_params ==
              model.parameter_counts().head_params);
    }
}

TEST_CASE("vgg19 softmax rows sum to one on a forward pass") {
    ModelHandle model = build_model(small_vgg19(3));
    nn::Tensor probs = model.predict_probs(random_batch(2, 375, 3));
    REQUIRE(probs.shape == std::vector<int>{2, 3});
    for (int r = 0; r < 2; ++r) {
        float sum = 0.0f;
        for (int c = 0; c < 3; ++c) {
            const float p = probs.data[std::size_t(r) * 3 + c];
            CHECK(p >= 0.0f);
            CHECK(p <= 1.0f);
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0f).epsilon(1e-5));
    }
}

TEST_CASE("every registry backbone accepts the standard head and input") {
    for (Backbone backbone : kAllBackbones) {
        ModelConfig cfg;
        cfg.backbone = backbone;
        cfg.n_classes = 3;
        cfg.init_seed = 11;
        ModelHandle model = build_model(cfg);
        nn::Tensor probs = model.predict_probs(random_batch(1, 375, 5));
        INFO(backbone_name(backbone));
        REQUIRE(probs.shape == std::vector<int>{1, 3});
        float sum = 0.0f;
        for (float p : probs.data) {
            CHECK(std::isfinite(p));
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0f).epsilon(1e-5));
    }
}

TEST_CASE("frozen backbone stays bit-identical through an optimizer step") {
    ModelHandle model = build_model(small_vgg19(3));
    auto before = snapshot_params(model.backbone_params());

    nn::Tensor batch = random_batch(2, 375, 9);
    std::mt19937_64 rng(4);
    nn::Tensor probs = model.train_forward(batch, &rng);
    // Cross-entropy gradient at the logits for targets (0, 1).
    nn::Tensor dlogits(probs.shape);
    const int targets[2] = {0, 1};
    for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 3; ++c)
            dlogits.data[std::size_t(b) * 3 + c] =
                (probs.data[std::size_t(b) * 3 + c] - (c == targets[b] ? 1.0f : 0.0f)) / 2.0f;
    nn::Adam adam(model.graph().trainable_params(), {.learning_rate = 0.01});
    adam.zero_grad();
    model.train_backward(dlogits);
    adam.step();

    auto after = snapshot_params(model.backbone_params());
    CHECK(before == after); // bitwise

    // And the head must actually have moved.
    bool head_changed = false;
    for (nn::Param* p : model.head_params())
        for (float g : p->grad.data)
            if (g != 0.0f) {
                head_changed = true;
                break;
            }
    CHECK(head_changed);
}

TEST_CASE("checkpoint round trip preserves predictions") {
    TempDir tmp("checkpoint");
    ModelHandle model = build_model(small_vgg19(3));
    nn::Tensor batch = random_batch(2, 375, 21);
    nn::Tensor before = model.predict_probs(batch);

    const auto path = tmp.path / "model.ckpt";
    save_checkpoint(model, path);
    ModelHandle loaded = load_checkpoint(path);
    CHECK(loaded.config().backbone == Backbone::VGG19);
    CHECK(loaded.config().n_classes == 3);
    nn::Tensor after = loaded.predict_probs(batch);
    REQUIRE(after.numel() == before.numel());
    for (std::size_t i = 0; i < before.numel(); ++i)
        CHECK(std::abs(before.data[i] - after.data[i]) < 1e-6f);

    // Architecture mismatch is rejected.
    CHECK_THROWS_AS(load_checkpoint(path, small_vgg19(2)), CheckpointError);

    // A checkpoint doubles as a weight pack.
    {
        ModelConfig cfg = small_vgg19(3);
        cfg.weights_path = path.string();
        cfg.init_seed = 999; // different init, overwritten by the pack
        ModelHandle from_pack = build_model(cfg);
        nn::Tensor packed = from_pack.predict_probs(batch);
        for (std::size_t i = 0; i < before.numel(); ++i)
            CHECK(std::abs(before.data[i] - packed.data[i]) < 1e-6f);
    }

    // Corrupt blob is rejected, not crashed.
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-64, std::ios::end);
        const char garbage[8] = {99, 98, 97, 96, 95, 94, 93, 92};
        f.write(garbage, sizeof(garbage));
    }
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

    // Truncated and non-checkpoint files are rejected.
    std::filesystem::resize_file(path, 1000);
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
    std::ofstream(tmp.path / "junk.ckpt") << "not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(tmp.path / "junk.ckpt"), CheckpointError);
}
