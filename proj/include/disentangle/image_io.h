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

#ifndef DISENTANGLE_IMAGE_IO_H_
#define DISENTANGLE_IMAGE_IO_H_

#include <filesystem>

#include <torch/torch.h>

namespace disentangle {

// Decodes an 8-bit grayscale or RGB PNG (palette and alpha are expanded or
// dropped) into a float32 [C, H, W] tensor with values in [0, 1].
torch::Tensor read_png(const std::filesystem::path& path);

// Encodes a [C, H, W] (C = 1 or 3) or [H, W] tensor as an 8-bit PNG. Values
// are clipped to [0, 1] and rounded to the nearest 1/255 step.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

// Bilinear resize of a [C, H, W] image to size x size. Returns the input
// unchanged when it already has that size.
torch::Tensor resize_image(const torch::Tensor& image, int64_t size);

// Converts between grayscale and RGB by luminance averaging / replication.
torch::Tensor convert_channels(const torch::Tensor& image, int64_t channels);

// Rounds values to the 8-bit grid so in-memory images equal their PNG form.
torch::Tensor quantize_8bit(const torch::Tensor& image);

}  // namespace disentangle

#endif  // DISENTANGLE_IMAGE_IO_H_
