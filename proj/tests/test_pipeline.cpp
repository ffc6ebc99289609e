#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <random>

#include "histo/errors.hpp"
#include "histo/pipeline.hpp"
#include "support/fixtures.hpp"

using namespace histo;
using histo::testing::TempDir;

TEST_CASE("preprocess maps constants to constants") {
    SUBCASE("all-zero 1024x1024 image") {
        auto img = histo::testing::constant_image(1024, 1024, {0, 0, 0});
        auto t = preprocess(img);
        CHECK(t.shape == std::vector<int>{375, 375, 3});
        for (float v : t.data)
            CHECK(v == 0.0f);
    }
    SUBCASE("all-255 image becomes all ones") {
        auto img = histo::testing::constant_image(1024, 1024, {255, 255, 255});
        auto t = preprocess(img);
        for (float v : t.data)
            CHECK(v == doctest::Approx(1.0f).epsilon(1e-6));
    }
    SUBCASE("checkerboard stays in range with the right shape") {
        auto img = histo::testing::checkerboard_image(1024, 1024);
        auto t = preprocess(img);
        CHECK(t.shape == std::vector<int>{375, 375, 3});
        float mn = 1e9f, mx = -1e9f;
        for (float v : t.data) {
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
        CHECK(mn >= 0.0f);
        CHECK(mx <= 1.0f);
        CHECK(mx > mn); // resampling kept contrast
    }
}

TEST_CASE("preprocess rejects bad input") {
    ImageU8 gray;
    gray.width = 8;
    gray.height = 8;
    gray.channels = 1;
    gray.pixels.assign(64, 0);
    CHECK_THROWS_AS(preprocess(gray), PreprocessError);
    ImageU8 empty;
    empty.channels = 3;
    CHECK_THROWS_AS(preprocess(empty), PreprocessError);
}

TEST_CASE("identity augment config returns the input exactly") {
    auto img = preprocess(histo::testing::checkerboard_image(64, 64, 4));
    std::mt19937_64 rng(5);
    auto out = augment(img, AugmentConfig::identity(), rng);
    CHECK(out.data == img.data);
}

TEST_CASE("horizontal flip applied twice restores the image") {
    auto img = preprocess(histo::testing::checkerboard_image(80, 80, 5));
    AugmentParams flip;
    flip.hflip = true;
    auto once = apply_augment(img, flip, FillMode::nearest, 0.0f);
    CHECK(once.data != img.data);
    auto twice = apply_augment(once, flip, FillMode::nearest, 0.0f);
    for (std::size_t i = 0; i < img.numel(); ++i)
        CHECK(std::abs(twice.data[i] - img.data[i]) < 1e-6f);
}

TEST_CASE("constant images are invariant under rotation and shift with nearest fill") {
    auto img = preprocess(histo::testing::constant_image(64, 64, {120, 30, 200}));
    AugmentConfig cfg;
    cfg.rotation_max_deg = 40.0;
    cfg.width_shift_frac = 0.2;
    cfg.height_shift_frac = 0.2;
    cfg.horizontal_flip = false;
    cfg.vertical_flip = false;
    cfg.fill_mode = FillMode::nearest;
    std::mt19937_64 rng(17);
    for (int i = 0; i < 5; ++i) {
        auto out = augment(img, cfg, rng);
        for (std::size_t k = 0; k < img.numel(); ++k)
            CHECK(std::abs(out.data[k] - img.data[k]) < 1e-6f);
    }
}

TEST_CASE("augment preserves shape and value range for any draw") {
    auto img = preprocess(histo::testing::checkerboard_image(96, 96, 3));
    std::mt19937_64 rng(99);
    for (FillMode fill : {FillMode::nearest, FillMode::reflect, FillMode::constant}) {
        AugmentConfig cfg;
        cfg.fill_mode = fill;
        cfg.rng_seed = 1;
        for (int i = 0; i < 8; ++i) {
            auto out = augment(img, cfg, rng);
            CHECK(out.shape == img.shape);
            for (float v : out.data) {
                CHECK(v >= 0.0f);
                CHECK(v <= 1.0f);
            }
        }
    }
}

TEST_CASE("same random state reproduces the same augmentation") {
    auto img = preprocess(histo::testing::checkerboard_image(48, 48, 6));
    AugmentConfig cfg;
    std::mt19937_64 a(42), b(42);
    auto out1 = augment(img, cfg, a);
    auto out2 = augment(img, cfg, b);
    CHECK(out1.data == out2.data);
}

namespace {

std::vector<std::pair<std::filesystem::path, int>> fixture_items(const TempDir& tmp, int n) {
    std::vector<std::pair<std::filesystem::path, int>> items;
    for (int i = 0; i < n; ++i) {
        auto path = tmp.path / ("img" + std::to_string(i) + ".png");
        histo::write_png(path, histo::testing::constant_image(
                                   8, 8, {std::uint8_t(i * 7 % 256), 50, 90}));
        items.emplace_back(path, i % 2);
    }
    return items;
}

} // namespace

TEST_CASE("batch stream emits ceil(n/batch) batches with a final partial") {
    TempDir tmp("stream_partial");
    auto items = fixture_items(tmp, 230);
    BatchStream stream(items, 16, BatchStream::Mode::eval, AugmentConfig::identity());
    CHECK(stream.batches_per_epoch() == 15);
    stream.begin_epoch(0);
    Batch batch;
    std::vector<std::size_t> sizes;
    while (stream.next(batch))
        sizes.push_back(batch.labels.size());
    REQUIRE(sizes.size() == 15);
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
        CHECK(sizes[i] == 16);
    CHECK(sizes.back() == 6);
}

TEST_CASE("eval stream is order-preserving and repeatable") {
    TempDir tmp("stream_eval");
    auto items = fixture_items(tmp, 10);
    BatchStream stream(items, 4, BatchStream::Mode::eval, AugmentConfig::identity());
    auto run = [&stream] {
        stream.begin_epoch(0);
        Batch b;
        std::vector<std::size_t> seen;
        std::vector<float> pixels;
        while (stream.next(b)) {
            seen.insert(seen.end(), b.indices.begin(), b.indices.end());
            pixels.insert(pixels.end(), b.images.data.begin(), b.images.data.end());
        }
        return std::make_pair(seen, pixels);
    };
    auto [seen1, px1] = run();
    auto [seen2, px2] = run();
    CHECK(seen1 == seen2);
    CHECK(px1 == px2);
    for (std::size_t i = 0; i < seen1.size(); ++i)
        CHECK(seen1[i] == i);
}

TEST_CASE("eval output is invariant to the augment config") {
    TempDir tmp("stream_purity");
    auto items = fixture_items(tmp, 6);
    AugmentConfig wild;
    wild.rotation_max_deg = 90.0;
    wild.rng_seed = 123;
    BatchStream plain(items, 3, BatchStream::Mode::eval, AugmentConfig::identity());
    BatchStream augmented(items, 3, BatchStream::Mode::eval, wild);
    Batch a, b;
    plain.begin_epoch(0);
    augmented.begin_epoch(0);
    while (plain.next(a)) {
        REQUIRE(augmented.next(b));
        CHECK(a.images.data == b.images.data);
    }
}

TEST_CASE("train epochs visit every tile exactly once, in seed-dependent order") {
    TempDir tmp("stream_train");
    auto items = fixture_items(tmp, 23);
    AugmentConfig cfg_a = AugmentConfig::identity(7);
    AugmentConfig cfg_b = AugmentConfig::identity(8);
    BatchStream sa(items, 5, BatchStream::Mode::train, cfg_a);
    BatchStream sb(items, 5, BatchStream::Mode::train, cfg_b);

    auto epoch_order = [](BatchStream& s, std::size_t epoch) {
        s.begin_epoch(epoch);
        Batch b;
        std::vector<std::size_t> order;
        std::multiset<int> labels;
        while (s.next(b)) {
            order.insert(order.end(), b.indices.begin(), b.indices.end());
            labels.insert(b.labels.begin(), b.labels.end());
        }
        return std::make_pair(order, labels);
    };
    auto [order_a, labels_a] = epoch_order(sa, 0);
    auto [order_b, labels_b] = epoch_order(sb, 0);

    // Each tile exactly once.
    auto sorted_a = order_a;
    std::sort(sorted_a.begin(), sorted_a.end());
    for (std::size_t i = 0; i < sorted_a.size(); ++i)
        CHECK(sorted_a[i] == i);
    // Multiset of labels identical across seeds, order not.
    CHECK(labels_a == labels_b);
    CHECK(order_a != order_b);

    // Same seed, different epoch: different order again.
    auto [order_a1, labels_a1] = epoch_order(sa, 1);
    CHECK(order_a1 != order_a);
    CHECK(labels_a1 == labels_a);
}

TEST_CASE("empty dataset is a stream error") {
    CHECK_THROWS_AS(
        BatchStream({}, 4, BatchStream::Mode::eval, AugmentConfig::identity()), StreamError);
}

TEST_CASE("augment config validation") {
    AugmentConfig cfg;
    cfg.width_shift_frac = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigurationError);
    cfg = {};
    cfg.rotation_max_deg = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigurationError);
}
