#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace navmini {

// 8-bit RGB PNG. rgb is row-major H*W*3.
void write_png(const std::string& path, int height, int width, const std::vector<uint8_t>& rgb);

// Raw little-endian blobs used for depth / label ground truth files.
void write_f32_blob(const std::string& path, const std::vector<float>& data);
void write_u8_blob(const std::string& path, const std::vector<uint8_t>& data);
std::vector<float> read_f32_blob(const std::string& path);
std::vector<uint8_t> read_u8_blob(const std::string& path);

// [0,1] float image to 8-bit with rounding.
std::vector<uint8_t> to_u8(const std::vector<float>& rgb01);

} // namespace navmini
