#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diae/conditioning.hpp" // ImageF

namespace diae {

// 8-bit PNG I/O (RGB images, grayscale masks). Deterministic encoder
// settings, so identical pixels give identical files.
void write_png_rgb8(const std::string& path, int w, int h,
                    const std::vector<uint8_t>& rgb);
void write_png_gray8(const std::string& path, int w, int h,
                     const std::vector<uint8_t>& gray);
std::vector<uint8_t> read_png_rgb8(const std::string& path, int& w, int& h);
std::vector<uint8_t> read_png_gray8(const std::string& path, int& w, int& h);

// [3,H,W] float in [0,1] <-> interleaved RGB8
std::vector<uint8_t> image_to_rgb8(const ImageF& img);
ImageF rgb8_to_image(const std::vector<uint8_t>& rgb, int w, int h);

void write_image_png(const std::string& path, const ImageF& img);
ImageF read_image_png(const std::string& path);

} // namespace diae
