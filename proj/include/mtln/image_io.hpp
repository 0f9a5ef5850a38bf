#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mtln/grid.hpp"

namespace mtln {

/// Writes an 8-bit binary PGM (P5, maxval 255). Values are rounded from [0, 1].
void write_pgm(const std::filesystem::path& path, const Image& image);

/// Writes a mask as P5 with values {0, 255}.
void write_mask_pgm(const std::filesystem::path& path, const BinaryMask& mask);

/// Reads an 8-bit P5 file, scaling to [0, 1].
Image read_pgm(const std::filesystem::path& path);

/// Reads a P5 mask; any nonzero value is foreground.
BinaryMask read_mask_pgm(const std::filesystem::path& path);

/// Bilinear resampling to a new extent (stretching both axes), with pixel
/// centers aligned at the corners: source coordinate = dest * (src - 1) / (dest - 1).
Image resize_bilinear(const Image& image, int height, int width);

/// Splits one CSV line on commas. Quoting is not supported.
std::vector<std::string> split_csv_line(std::string_view line);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// Parses a double, rejecting trailing garbage.
bool parse_double(std::string_view text, double& out);

}  // namespace mtln
