// ----------------------------------------------------------------------------
// Copyright 2026 The FUDA Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ----------------------------------------------------------------------------

// Dense 2-D array files. The primary container is NumPy's .npy v1.0 layout
// (magic, ASCII dict header with descr/fortran_order/shape, row-major
// little-endian payload); 8/16-bit grayscale PNG is accepted as well.

#pragma once

#include <cstdint>
#include <filesystem>

#include "fuda/image.hpp"

namespace fuda::io {

/// Any supported dtype is widened to double.
Image<double> read_npy(const std::filesystem::path& file);
void write_npy(const std::filesystem::path& file, const Image<double>& img);
void write_npy(const std::filesystem::path& file,
               const Image<std::uint8_t>& img);

/// Raw sample values (0..255 or 0..65535), no rescaling.
Image<double> read_png(const std::filesystem::path& file);
void write_png(const std::filesystem::path& file,
               const Image<std::uint8_t>& img);

/// Dispatch on extension (.npy or .png).
Image<double> read_array(const std::filesystem::path& file);

/// Clamps to [0,1] and quantizes to 8 bits.
Image<std::uint8_t> to_gray8(const Image<double>& img);

}  // namespace fuda::io
