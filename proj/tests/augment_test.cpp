#include <cmath>

#include "doctest.h"
#include "mfnet/augment.hpp"
#include "test_util.hpp"

using namespace mfnet;
using namespace mfnet::testutil;

namespace {

Tensor random_image(int64_t c, int64_t h, int64_t w, uint64_t seed) {
    SeededRng rng(seed);
    Tensor img({c, h, w});
    for (int64_t i = 0; i < img.size(); ++i) img[i] = rng.next_unit();
    return img;
}

}  // namespace

TEST_CASE("flips are involutions") {
    Tensor img = random_image(3, 6, 7, 1);
    CHECK(bitwise_equal(flip_horizontal(flip_horizontal(img)), img));
    CHECK(bitwise_equal(flip_vertical(flip_vertical(img)), img));
    CHECK(!bitwise_equal(flip_horizontal(img), img));
}

TEST_CASE("presets match the published method sets") {
    AugmentPipeline p = build_preset(3, ArchFamily::vgg_resnet);
    CHECK(p.methods == std::vector<int>{1, 3, 5});
    CHECK(p.target_side == 224);

    p = build_preset(4, ArchFamily::vgg_resnet);
    CHECK(p.methods == std::vector<int>{1, 3, 4, 5});

    p = build_preset(4, ArchFamily::inception);
    CHECK(p.methods == std::vector<int>{1, 3, 6, 5});  // mean subtraction runs last
    CHECK(p.target_side == 299);

    p = build_preset(5, ArchFamily::inception);
    CHECK(p.methods == std::vector<int>{1, 3, 4, 6, 5});

    CHECK_THROWS_AS(build_preset(5, ArchFamily::vgg_resnet), ArgumentError);
    CHECK_THROWS_AS(build_preset(3, ArchFamily::inception), ArgumentError);
    CHECK_THROWS_AS(build_preset(6, ArchFamily::inception), ArgumentError);

    CHECK(build_preset(3, ArchFamily::vgg_resnet, 32).target_side == 32);
}

TEST_CASE("crop ratios stay within [0.05, 1] over many draws") {
    AugmentParams prm;
    SeededRng rng(3);
    double lo = 1.0, hi = 0.0;
    for (int draw = 0; draw < 10000; ++draw) {
        CropRect r = sample_crop_rect(24, 30, prm, rng);
        double ratio = static_cast<double>(r.height * r.width) / (24.0 * 30.0);
        CHECK(ratio >= 0.05);
        CHECK(ratio <= 1.0);
        CHECK(r.top + r.height <= 24);
        CHECK(r.left + r.width <= 30);
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
    }
    // the sampler actually spans the range
    CHECK(lo < 0.10);
    CHECK(hi > 0.90);

    AugmentPipeline p = build_preset(4, ArchFamily::vgg_resnet, 16);
    Tensor img = random_image(3, 24, 24, 2);
    Tensor out = apply_method(img, 4, p, rng);
    CHECK(out.dim(1) == 16);
    CHECK(out.dim(2) == 16);
}

TEST_CASE("mean subtraction with the per-image flag zeroes channel means") {
    AugmentPipeline p = build_preset(3, ArchFamily::vgg_resnet, 8);
    p.params.per_image_mean = true;
    Tensor img = random_image(3, 8, 8, 4);
    SeededRng rng(0);
    Tensor out = apply_method(img, 5, p, rng);
    for (int64_t c = 0; c < 3; ++c) {
        double mean = 0.0;
        for (int64_t i = 0; i < 64; ++i) mean += out.data()[c * 64 + i];
        CHECK(std::abs(mean / 64.0) < 1e-9);
    }
}

TEST_CASE("dataset-mean subtraction shifts by the configured values") {
    AugmentPipeline p = build_preset(3, ArchFamily::vgg_resnet, 8);
    p.params.channel_mean = {0.25, 0.5, 0.75};
    Tensor img = Tensor::full({3, 2, 2}, 1.0);
    SeededRng rng(0);
    Tensor out = apply_method(img, 5, p, rng);
    CHECK(std::abs(out.at3(0, 0, 0) - 0.75) < 1e-12);
    CHECK(std::abs(out.at3(1, 0, 0) - 0.5) < 1e-12);
    CHECK(std::abs(out.at3(2, 0, 0) - 0.25) < 1e-12);
}

TEST_CASE("grayscale conversion") {
    Tensor gray = random_image(1, 5, 5, 6);
    Tensor rgb = grayscale_to_rgb(gray);
    CHECK(rgb.shape() == std::vector<int64_t>{3, 5, 5});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < 25; ++i) CHECK(rgb.data()[c * 25 + i] == gray.data()[i]);

    // pixel sum triples
    double gs = 0.0, rs = 0.0;
    for (int64_t i = 0; i < gray.size(); ++i) gs += gray[i];
    for (int64_t i = 0; i < rgb.size(); ++i) rs += rgb[i];
    CHECK(std::abs(rs - 3.0 * gs) < 1e-9);

    Tensor already = random_image(3, 4, 4, 7);
    CHECK(bitwise_equal(grayscale_to_rgb(already), already));

    Tensor two = random_image(2, 4, 4, 8);
    CHECK_THROWS_AS(grayscale_to_rgb(two), DimensionError);
}

TEST_CASE("rotation and resize keep values in range") {
    AugmentPipeline p = build_preset(3, ArchFamily::vgg_resnet, 12);
    p.methods = method_execution_order({1, 2, 3, 5});
    Tensor img = random_image(3, 10, 14, 9);
    SeededRng rng(5);
    Tensor rotated = rotate_bilinear(img, 30.0);
    CHECK(rotated.shape() == img.shape());
    for (int64_t i = 0; i < rotated.size(); ++i) {
        CHECK(rotated[i] >= 0.0);
        CHECK(rotated[i] <= 1.0 + 1e-12);
    }
    Tensor resized = resize_bilinear(img, 12, 12);
    CHECK(resized.shape() == std::vector<int64_t>{3, 12, 12});
}

TEST_CASE("pipeline behavior") {
    AugmentPipeline p = build_preset(5, ArchFamily::inception, 16);

    SUBCASE("eval mode is deterministic") {
        Tensor img = random_image(3, 20, 24, 10);
        SeededRng r1(1), r2(99);
        Tensor a = apply_pipeline(img, p, r1, PipelineMode::eval);
        Tensor b = apply_pipeline(img, p, r2, PipelineMode::eval);
        CHECK(bitwise_equal(a, b));
        CHECK(a.shape() == std::vector<int64_t>{3, 16, 16});
    }

    SUBCASE("train mode is reproducible for a fixed seed") {
        Tensor img = random_image(3, 20, 24, 11);
        SeededRng r1(42), r2(42), r3(43);
        Tensor a = apply_pipeline(img, p, r1, PipelineMode::train);
        Tensor b = apply_pipeline(img, p, r2, PipelineMode::train);
        Tensor c = apply_pipeline(img, p, r3, PipelineMode::train);
        CHECK(bitwise_equal(a, b));
        CHECK(!bitwise_equal(a, c));
    }

    SUBCASE("output is always [3, side, side] across random input sizes") {
        SeededRng shape_rng(12);
        SeededRng aug_rng(13);
        for (int trial = 0; trial < 1000; ++trial) {
            int64_t h = 8 + static_cast<int64_t>(shape_rng.next_u64() % 40);
            int64_t w = 8 + static_cast<int64_t>(shape_rng.next_u64() % 40);
            int64_t c = (shape_rng.next_u64() % 2) == 0 ? 1 : 3;
            Tensor img = random_image(c, h, w, 100 + static_cast<uint64_t>(trial));
            Tensor out = apply_pipeline(img, p, aug_rng, PipelineMode::train);
            CHECK(out.shape() == std::vector<int64_t>{3, 16, 16});
        }
    }

    SUBCASE("values stay in [0,1] until mean subtraction") {
        AugmentPipeline no_mean = p;
        no_mean.methods = method_execution_order({1, 3, 4, 6});
        Tensor img = random_image(3, 30, 30, 14);
        SeededRng rng(7);
        Tensor out = apply_pipeline(img, no_mean, rng, PipelineMode::train);
        for (int64_t i = 0; i < out.size(); ++i) {
            CHECK(out[i] >= 0.0);
            CHECK(out[i] <= 1.0 + 1e-12);
        }
    }

    SUBCASE("method ids outside 1..6 and duplicates are rejected") {
        CHECK_THROWS_AS(method_execution_order({0}), ArgumentError);
        CHECK_THROWS_AS(method_execution_order({7}), ArgumentError);
        CHECK_THROWS_AS(method_execution_order({1, 1}), ArgumentError);
    }
}
