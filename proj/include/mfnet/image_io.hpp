#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfnet/tensor.hpp"

namespace mfnet {

// Binary portable pixmaps: P6 (RGB) and P5 (grayscale), maxval 255 only.
// Values decode bit-exactly to value/255 into a [c,h,w] tensor.
Tensor decode_image(const std::vector<uint8_t>& bytes);

Tensor load_image(const std::string& path);

// Encoders used for feature-map export and the synthetic dataset.
std::vector<uint8_t> encode_ppm(const Tensor& img_3hw);
std::vector<uint8_t> encode_pgm(const Tensor& img_hw);
void save_ppm(const std::string& path, const Tensor& img_3hw);
void save_pgm(const std::string& path, const Tensor& img_hw);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace mfnet
