#include "mfnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mfnet/image_io.hpp"

namespace mfnet {

const std::vector<std::string>& shape_catalog() {
    static const std::vector<std::string> catalog = {"circle", "cross",  "diamond", "frame", "hbar",
                                                     "ring",   "saltire", "square",  "triangle", "vbar"};
    return catalog;
}

namespace {

bool inside_shape(const std::string& shape, double u, double v, double r) {
    // u, v in [-1, 1] relative to the shape center, r is the half-extent
    double au = std::abs(u), av = std::abs(v);
    if (shape == "circle") return u * u + v * v <= r * r;
    if (shape == "ring") {
        double d = std::sqrt(u * u + v * v);
        return d <= r && d >= 0.55 * r;
    }
    if (shape == "square") return au <= r && av <= r;
    if (shape == "frame") return au <= r && av <= r && (au >= 0.55 * r || av >= 0.55 * r);
    if (shape == "diamond") return au + av <= r;
    if (shape == "cross") return (au <= 0.33 * r && av <= r) || (av <= 0.33 * r && au <= r);
    if (shape == "saltire") return std::abs(au - av) <= 0.4 * r && au <= r && av <= r;
    if (shape == "hbar") return av <= 0.35 * r && au <= r;
    if (shape == "vbar") return au <= 0.35 * r && av <= r;
    if (shape == "triangle") return v >= -r && v <= r && au <= (v + r) / 2.0;
    throw ArgumentError("unknown shape '" + shape + "'");
}

}  // namespace

Tensor render_shape(const std::string& shape, int side, SeededRng& rng) {
    if (side < 8) throw ArgumentError("shape images need side >= 8");
    double bg[3], fg[3];
    for (int c = 0; c < 3; ++c) bg[c] = rng.uniform(0.0, 0.35);
    for (int c = 0; c < 3; ++c) fg[c] = rng.uniform(0.55, 1.0);
    double cx = rng.uniform(0.4, 0.6) * side;
    double cy = rng.uniform(0.4, 0.6) * side;
    double half = rng.uniform(0.25, 0.42) * side;

    Tensor img({3, side, side});
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            double u = (static_cast<double>(x) + 0.5 - cx) / half;
            double v = (static_cast<double>(y) + 0.5 - cy) / half;
            bool in = inside_shape(shape, u, v, 1.0);
            for (int c = 0; c < 3; ++c) {
                double noise = rng.uniform(-0.03, 0.03);
                double val = (in ? fg[c] : bg[c]) + noise;
                img.at3(c, y, x) = std::min(1.0, std::max(0.0, val));
            }
        }
    return img;
}

std::string make_shapes_dataset(const std::string& dir, const ShapesDatasetSpec& spec) {
    if (spec.n_per_class < 1) throw ArgumentError("n_per_class must be >= 1");
    for (const std::string& cls : spec.classes)
        if (std::find(shape_catalog().begin(), shape_catalog().end(), cls) == shape_catalog().end())
            throw ArgumentError("unknown shape class '" + cls + "'");

    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::string manifest_path = (fs::path(dir) / "manifest.csv").string();
    std::ofstream manifest(manifest_path, std::ios::trunc);
    if (!manifest) throw IoError("cannot open '" + manifest_path + "' for writing");
    manifest << "path,label,source\n";

    SeededRng rng(spec.seed);
    for (const std::string& cls : spec.classes) {
        fs::create_directories(fs::path(dir) / cls);
        for (int i = 0; i < spec.n_per_class; ++i) {
            Tensor img = render_shape(cls, spec.side, rng);
            std::string rel = cls + "/" + cls + "_" + std::to_string(i) + ".ppm";
            save_ppm((fs::path(dir) / rel).string(), img);
            manifest << rel << "," << cls << ",own\n";
        }
    }
    if (!manifest) throw IoError("write failure on '" + manifest_path + "'");
    return manifest_path;
}

}  // namespace mfnet
