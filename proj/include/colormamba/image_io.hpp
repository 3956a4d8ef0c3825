#pragma once

#include "colormamba/tensor.hpp"

namespace colormamba {

struct ImageU8 {
    int64_t h = 0, w = 0, channels = 0;
    std::vector<uint8_t> pixels;  // row-major, interleaved
};

// PGM (P5) and PPM (P6), 8-bit.
ImageU8 read_pnm(const std::string& path);
void write_pgm(const std::string& path, const ImageU8& img);

// PNG, 8-bit gray / RGB / RGBA (alpha dropped on read), non-interlaced.
ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);  // gray or RGB

// Dispatch on magic bytes (PNG signature / P5 / P6).
ImageU8 read_image(const std::string& path);

Tensor image_to_tensor(const ImageU8& img);  // (1,H,W,C) in [0,1]
ImageU8 tensor_to_image(const Tensor& t);    // rounds and clamps to 8-bit

}  // namespace colormamba
