#pragma once

#include "nsfc/grid.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace nsfc {

// NSFC1 grid container:
//   bytes 0..4   magic "NSFC1"
//   u32 LE       rows
//   u32 LE       cols
//   u32 LE       channels
//   f32 LE       payload, channel planes of row-major data
// Height fields use one channel, irradiance one channel per wavelength.
inline constexpr char kNsfcMagic[5] = {'N', 'S', 'F', 'C', '1'};

void write_nsfc(std::ostream& out, const Grid& grid);
[[nodiscard]] Grid read_nsfc(std::istream& in);

void save_nsfc(const std::filesystem::path& path, const Grid& grid);
[[nodiscard]] Grid load_nsfc(const std::filesystem::path& path);

// Rounds every value through f32, i.e. what a save/load cycle produces.
[[nodiscard]] Grid quantize_f32(Grid grid);

struct PngOptions
{
    // Linear values are scaled by 2^exposure before the gamma curve.
    double exposure = 0.0;
    double gamma = 2.2;
    // Divide by the grid maximum first (used for height fields).
    bool normalize = false;
};

// 1 channel -> gray, 3 channels -> RGB (channel 0 red), otherwise the
// channel mean is written as gray.
void save_png(const std::filesystem::path& path, const Grid& grid, const PngOptions& options = {});

// Loads an 8/16-bit PNG as a one-channel grid of luminance in [0, 1]
// (gamma is not removed).
[[nodiscard]] Grid load_png_gray(const std::filesystem::path& path);

void save_csv(const std::filesystem::path& path, const Grid& grid);

void write_text_file(const std::filesystem::path& path, const std::string& text);
[[nodiscard]] std::string read_text_file(const std::filesystem::path& path);

} // namespace nsfc
