// Copyright 2026 The Disentangle Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "disentangle/image_io.h"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "disentangle/errors.h"

namespace disentangle {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

torch::Tensor read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IngestionError("cannot open image: " + path.string());

  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 ||
      png_sig_cmp(signature, 0, 8) != 0) {
    throw IngestionError("not a PNG file: " + path.string());
  }

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestionError("corrupt PNG: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  const size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<png_byte> pixels(row_bytes * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (channels != 1 && channels != 3) {
    throw IngestionError("unsupported channel count in " + path.string());
  }
  auto out = torch::empty({channels, static_cast<int64_t>(height),
                           static_cast<int64_t>(width)},
                          torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  for (png_uint_32 y = 0; y < height; ++y) {
    for (png_uint_32 x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        acc[c][y][x] =
            static_cast<float>(rows[y][x * channels + c]) / 255.0f;
      }
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  torch::Tensor img = image.detach().to(torch::kCPU, torch::kFloat64);
  if (img.dim() == 2) img = img.unsqueeze(0);
  if (img.dim() != 3 || (img.size(0) != 1 && img.size(0) != 3)) {
    throw ContractError("write_png expects [1|3, H, W], got " +
                        std::to_string(img.dim()) + "-d tensor");
  }
  const int channels = static_cast<int>(img.size(0));
  const int height = static_cast<int>(img.size(1));
  const int width = static_cast<int>(img.size(2));
  auto bytes = (img.clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8);
  bytes = bytes.permute({1, 2, 0}).contiguous();

  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error("io", "cannot write image: " + path.string());
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("io", "PNG encoding failed: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const uint8_t* data = bytes.data_ptr<uint8_t>();
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(data + y * width * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

torch::Tensor resize_image(const torch::Tensor& image, int64_t size) {
  if (image.size(-1) == size && image.size(-2) == size) return image;
  namespace F = torch::nn::functional;
  return F::interpolate(image.unsqueeze(0),
                        F::InterpolateFuncOptions()
                            .size(std::vector<int64_t>{size, size})
                            .mode(torch::kBilinear)
                            .align_corners(false))
      .squeeze(0)
      .clamp(0.0, 1.0);
}

torch::Tensor convert_channels(const torch::Tensor& image, int64_t channels) {
  const int64_t have = image.size(0);
  if (have == channels) return image;
  if (have == 3 && channels == 1) return image.mean(0, /*keepdim=*/true);
  if (have == 1 && channels == 3) return image.expand({3, -1, -1}).clone();
  throw ContractError("cannot convert " + std::to_string(have) +
                      " channels to " + std::to_string(channels));
}

torch::Tensor quantize_8bit(const torch::Tensor& image) {
  return (image.clamp(0.0, 1.0) * 255.0).round() / 255.0;
}

}  // namespace disentangle
