#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfnet/tensor.hpp"

namespace mfnet {

// Separable toy dataset of colored geometric shapes, used for desk-scale
// convergence runs and as the source task for transfer experiments. Classes
// differ by geometry, not color, so flips and color jitter stay
// label-preserving.
struct ShapesDatasetSpec {
    int n_per_class = 200;
    int side = 32;
    uint64_t seed = 0;
    std::vector<std::string> classes = {"circle", "cross", "square", "triangle"};
};

// All supported class names (10 shapes).
const std::vector<std::string>& shape_catalog();

Tensor render_shape(const std::string& shape, int side, SeededRng& rng);

// Writes PPM files plus manifest.csv into `dir`; returns the manifest path.
std::string make_shapes_dataset(const std::string& dir, const ShapesDatasetSpec& spec);

}  // namespace mfnet
