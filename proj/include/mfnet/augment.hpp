#pragma once

#include <array>
#include <string>
#include <vector>

#include "mfnet/tensor.hpp"

namespace mfnet {

// Pre-processing methods, numbered 1-6:
//   1 random horizontal/vertical flip   4 random area crop + resize
//   2 random rotation                   5 per-channel mean subtraction
//   3 resize to the target side         6 brightness/contrast jitter
struct AugmentParams {
    double rotation_deg = 15.0;       // method 2: uniform in +-rotation_deg
    double crop_area_min = 0.05;      // method 4
    double crop_area_max = 1.0;
    double crop_aspect_min = 0.75;    // 3/4
    double crop_aspect_max = 4.0 / 3.0;
    double brightness_delta = 0.125;  // method 6: add uniform in +-delta
    double contrast_min = 0.8;        // method 6: multiply uniform in [min,max]
    double contrast_max = 1.2;
    bool per_image_mean = false;      // method 5 fallback when no dataset mean
    std::array<double, 3> channel_mean = {0.0, 0.0, 0.0};
};

struct AugmentPipeline {
    std::vector<int> methods;  // subset of 1..6, stored in execution order
    int target_side = 224;
    AugmentParams params;
};

enum class ArchFamily { vgg_resnet, inception };

ArchFamily family_from_string(const std::string& name);

// Table-driven presets: vgg_resnet/3 -> {1,3,5}, vgg_resnet/4 -> {1,3,4,5},
// inception/4 -> {1,3,5,6}, inception/5 -> {1,3,4,5,6}. `side_override` of 0
// keeps the family default (224 / 299).
AugmentPipeline build_preset(int num_aug, ArchFamily family, int side_override = 0);

enum class PipelineMode { train, eval };

// ---- primitive transforms, exposed for tests ----
struct CropRect {
    int64_t top = 0;
    int64_t left = 0;
    int64_t height = 0;
    int64_t width = 0;
};

// Area ratio uniform in [crop_area_min, crop_area_max], aspect jitter in
// [3/4, 4/3]; falls back to the full frame when the jittered rectangle does
// not fit after a few tries.
CropRect sample_crop_rect(int64_t h, int64_t w, const AugmentParams& params, SeededRng& rng);

Tensor flip_horizontal(const Tensor& img);
Tensor flip_vertical(const Tensor& img);
Tensor rotate_bilinear(const Tensor& img, double degrees);
Tensor resize_bilinear(const Tensor& img, int64_t out_h, int64_t out_w);
Tensor grayscale_to_rgb(const Tensor& img);

// One numbered method with the pipeline's parameters.
Tensor apply_method(const Tensor& img, int method, const AugmentPipeline& pipeline, SeededRng& rng);

// Train mode runs each stochastic method in pipeline order; eval mode runs
// only the deterministic resize and mean subtraction.
Tensor apply_pipeline(const Tensor& img, const AugmentPipeline& pipeline, SeededRng& rng, PipelineMode mode);

// Normalizes a method set into execution order (mean subtraction last).
std::vector<int> method_execution_order(std::vector<int> methods);

}  // namespace mfnet
