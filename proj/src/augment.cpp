#include "mfnet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace mfnet {

ArchFamily family_from_string(const std::string& name) {
    if (name == "vgg_resnet") return ArchFamily::vgg_resnet;
    if (name == "inception") return ArchFamily::inception;
    throw ArgumentError("unknown architecture family '" + name + "'");
}

std::vector<int> method_execution_order(std::vector<int> methods) {
    std::set<int> seen;
    for (int m : methods) {
        if (m < 1 || m > 6) throw ArgumentError("augmentation method id must be in 1..6");
        if (!seen.insert(m).second) throw ArgumentError("duplicate augmentation method " + std::to_string(m));
    }
    // geometric methods first, color jitter next, mean subtraction last so the
    // [0,1] range holds until normalization
    std::vector<int> order;
    for (int m : {1, 2, 3, 4, 6, 5})
        if (seen.count(m)) order.push_back(m);
    return order;
}

AugmentPipeline build_preset(int num_aug, ArchFamily family, int side_override) {
    AugmentPipeline p;
    if (family == ArchFamily::vgg_resnet) {
        if (num_aug == 3)
            p.methods = method_execution_order({1, 3, 5});
        else if (num_aug == 4)
            p.methods = method_execution_order({1, 3, 4, 5});
        else
            throw ArgumentError("vgg_resnet presets accept num_aug 3 or 4, got " + std::to_string(num_aug));
        p.target_side = 224;
    } else {
        if (num_aug == 4)
            p.methods = method_execution_order({1, 3, 5, 6});
        else if (num_aug == 5)
            p.methods = method_execution_order({1, 3, 4, 5, 6});
        else
            throw ArgumentError("inception presets accept num_aug 4 or 5, got " + std::to_string(num_aug));
        p.target_side = 299;
    }
    if (side_override > 0) p.target_side = side_override;
    return p;
}

namespace {

void check_image(const Tensor& img) {
    if (img.rank() != 3) throw DimensionError("image must be [c,h,w], got " + shape_to_string(img.shape()));
}

double bilinear_at(const Tensor& img, int64_t c, double y, double x) {
    int64_t h = img.dim(1), w = img.dim(2);
    double yc = std::min(std::max(y, 0.0), static_cast<double>(h - 1));
    double xc = std::min(std::max(x, 0.0), static_cast<double>(w - 1));
    int64_t y0 = static_cast<int64_t>(std::floor(yc));
    int64_t x0 = static_cast<int64_t>(std::floor(xc));
    int64_t y1 = std::min(y0 + 1, h - 1);
    int64_t x1 = std::min(x0 + 1, w - 1);
    double fy = yc - static_cast<double>(y0);
    double fx = xc - static_cast<double>(x0);
    double top = img.at3(c, y0, x0) * (1.0 - fx) + img.at3(c, y0, x1) * fx;
    double bot = img.at3(c, y1, x0) * (1.0 - fx) + img.at3(c, y1, x1) * fx;
    return top * (1.0 - fy) + bot * fy;
}

Tensor crop_region(const Tensor& img, int64_t top, int64_t left, int64_t ch, int64_t cw) {
    Tensor out({img.dim(0), ch, cw});
    for (int64_t c = 0; c < img.dim(0); ++c)
        for (int64_t y = 0; y < ch; ++y)
            for (int64_t x = 0; x < cw; ++x) out.at3(c, y, x) = img.at3(c, top + y, left + x);
    return out;
}

}  // namespace

CropRect sample_crop_rect(int64_t h, int64_t w, const AugmentParams& prm, SeededRng& rng) {
    if (!(prm.crop_area_min >= 0.05 && prm.crop_area_max <= 1.0 && prm.crop_area_min <= prm.crop_area_max))
        throw ArgumentError("crop area ratio range must lie within [0.05, 1]");
    double full = static_cast<double>(h * w);
    for (int attempt = 0; attempt < 10; ++attempt) {
        double area = rng.uniform(prm.crop_area_min, prm.crop_area_max) * full;
        double aspect = rng.uniform(prm.crop_aspect_min, prm.crop_aspect_max);
        int64_t try_w = static_cast<int64_t>(std::lround(std::sqrt(area * aspect)));
        int64_t try_h = static_cast<int64_t>(std::lround(std::sqrt(area / aspect)));
        if (try_w < 1 || try_h < 1 || try_w > w || try_h > h) continue;
        // keep the realized ratio inside [min, max] despite integer rounding
        double realized = static_cast<double>(try_w * try_h) / full;
        if (realized < prm.crop_area_min || realized > prm.crop_area_max) continue;
        int64_t top =
            try_h == h ? 0 : static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(h - try_h + 1));
        int64_t left =
            try_w == w ? 0 : static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(w - try_w + 1));
        return {top, left, try_h, try_w};
    }
    return {0, 0, h, w};  // full frame, ratio 1
}

Tensor flip_horizontal(const Tensor& img) {
    check_image(img);
    Tensor out(img.shape());
    int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) out.at3(ch, y, x) = img.at3(ch, y, w - 1 - x);
    return out;
}

Tensor flip_vertical(const Tensor& img) {
    check_image(img);
    Tensor out(img.shape());
    int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) out.at3(ch, y, x) = img.at3(ch, h - 1 - y, x);
    return out;
}

Tensor rotate_bilinear(const Tensor& img, double degrees) {
    check_image(img);
    double rad = degrees * std::numbers::pi / 180.0;
    double cs = std::cos(rad), sn = std::sin(rad);
    int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    double cy = (static_cast<double>(h) - 1.0) / 2.0, cx = (static_cast<double>(w) - 1.0) / 2.0;
    Tensor out(img.shape());
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                // inverse mapping; out-of-frame samples stay 0
                double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
                double sy = cy + (cs * dy - sn * dx);
                double sx = cx + (sn * dy + cs * dx);
                if (sy < -0.5 || sy > static_cast<double>(h) - 0.5 || sx < -0.5 ||
                    sx > static_cast<double>(w) - 0.5)
                    continue;
                out.at3(ch, y, x) = bilinear_at(img, ch, sy, sx);
            }
    apply_precision(out);
    return out;
}

Tensor resize_bilinear(const Tensor& img, int64_t out_h, int64_t out_w) {
    check_image(img);
    if (out_h < 1 || out_w < 1) throw ArgumentError("resize target must be >= 1");
    int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (h == out_h && w == out_w) return img;
    Tensor out({c, out_h, out_w});
    double sy = static_cast<double>(h) / static_cast<double>(out_h);
    double sx = static_cast<double>(w) / static_cast<double>(out_w);
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < out_h; ++y)
            for (int64_t x = 0; x < out_w; ++x)
                out.at3(ch, y, x) =
                    bilinear_at(img, ch, (static_cast<double>(y) + 0.5) * sy - 0.5,
                                (static_cast<double>(x) + 0.5) * sx - 0.5);
    apply_precision(out);
    return out;
}

Tensor grayscale_to_rgb(const Tensor& img) {
    check_image(img);
    if (img.dim(0) == 3) return img;
    if (img.dim(0) != 1)
        throw DimensionError("grayscale_to_rgb expects 1 or 3 channels, got " +
                             std::to_string(img.dim(0)));
    Tensor out({3, img.dim(1), img.dim(2)});
    int64_t plane = img.dim(1) * img.dim(2);
    for (int c = 0; c < 3; ++c) std::copy(img.data(), img.data() + plane, out.data() + c * plane);
    return out;
}

Tensor apply_method(const Tensor& img, int method, const AugmentPipeline& pipeline, SeededRng& rng) {
    check_image(img);
    const AugmentParams& prm = pipeline.params;
    switch (method) {
        case 1: {
            Tensor out = img;
            if (rng.next_unit() < 0.5) out = flip_horizontal(out);
            if (rng.next_unit() < 0.5) out = flip_vertical(out);
            return out;
        }
        case 2: {
            if (!(prm.rotation_deg >= 0.0)) throw ArgumentError("rotation range must be >= 0");
            double angle = rng.uniform(-prm.rotation_deg, prm.rotation_deg + 1e-12);
            return rotate_bilinear(img, angle);
        }
        case 3: return resize_bilinear(img, pipeline.target_side, pipeline.target_side);
        case 4: {
            CropRect rect = sample_crop_rect(img.dim(1), img.dim(2), prm, rng);
            Tensor cropped = crop_region(img, rect.top, rect.left, rect.height, rect.width);
            return resize_bilinear(cropped, pipeline.target_side, pipeline.target_side);
        }
        case 5: {
            Tensor out = img;
            int64_t plane = img.dim(1) * img.dim(2);
            for (int64_t c = 0; c < img.dim(0); ++c) {
                double mean;
                if (prm.per_image_mean) {
                    double sum = 0.0;
                    for (int64_t p = 0; p < plane; ++p) sum += img.data()[c * plane + p];
                    mean = sum / static_cast<double>(plane);
                } else {
                    mean = prm.channel_mean[static_cast<size_t>(c % 3)];
                }
                for (int64_t p = 0; p < plane; ++p) out.data()[c * plane + p] -= mean;
            }
            apply_precision(out);
            return out;
        }
        case 6: {
            if (!(prm.brightness_delta >= 0.0 && prm.contrast_min > 0.0 &&
                  prm.contrast_min <= prm.contrast_max))
                throw ArgumentError("brightness/contrast parameters out of range");
            double bright = rng.uniform(-prm.brightness_delta, prm.brightness_delta + 1e-12);
            double contrast = rng.uniform(prm.contrast_min, prm.contrast_max);
            Tensor out(img.shape());
            for (int64_t i = 0; i < img.size(); ++i) {
                double v = std::min(1.0, std::max(0.0, img[i] + bright));
                v = std::min(1.0, std::max(0.0, v * contrast));
                out[i] = v;
            }
            apply_precision(out);
            return out;
        }
        default: throw ArgumentError("augmentation method id must be in 1..6, got " + std::to_string(method));
    }
}

Tensor apply_pipeline(const Tensor& img, const AugmentPipeline& pipeline, SeededRng& rng,
                      PipelineMode mode) {
    check_image(img);
    if (pipeline.target_side < 1) throw ArgumentError("pipeline target side must be >= 1");
    Tensor cur = grayscale_to_rgb(img);
    if (mode == PipelineMode::eval) {
        cur = resize_bilinear(cur, pipeline.target_side, pipeline.target_side);
        if (std::count(pipeline.methods.begin(), pipeline.methods.end(), 5))
            cur = apply_method(cur, 5, pipeline, rng);
        return cur;
    }
    bool resized = false;
    for (int m : pipeline.methods) {
        cur = apply_method(cur, m, pipeline, rng);
        if (m == 3 || m == 4) resized = true;
    }
    if (!resized) cur = resize_bilinear(cur, pipeline.target_side, pipeline.target_side);
    return cur;
}

}  // namespace mfnet
