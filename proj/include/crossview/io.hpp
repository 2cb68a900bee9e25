#pragma once

#include <string>

#include "crossview/raster.hpp"

namespace crossview {

// Reads a raster from disk, dispatching on extension:
//   .png — 8-bit gray/RGB/RGBA, values scaled to [0, 1]
//   .cvt — raw float32 tensor (see below)
Raster raster_read(const std::string& path);

// Writes a raster; .png clamps to [0, 1] and quantizes with rounding, so a
// round trip errs by at most 1/510 per value. .cvt round trips bit-exactly.
void raster_write(const Raster& r, const std::string& path);

// .cvt layout: magic bytes "CVLT", then three little-endian uint32 values
// C, H, W, then C*H*W little-endian IEEE-754 float32 values in
// channel-major row-major order.
Raster cvt_read(const std::string& path);
void cvt_write(const Raster& r, const std::string& path);

Raster png_read(const std::string& path);
void png_write(const Raster& r, const std::string& path);

}  // namespace crossview
