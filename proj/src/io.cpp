#include "nsfc/io.hpp"

#include "nsfc/error.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace nsfc {

namespace {

static_assert(std::endian::native == std::endian::little, "NSFC1 I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& in)
{
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw Error(ErrorKind::io, "NSFC1: truncated header");
    return v;
}

Error io_error(const std::filesystem::path& path, const std::string& what)
{
    return Error(ErrorKind::io, what + ": " + path.string());
}

} // namespace

void write_nsfc(std::ostream& out, const Grid& grid)
{
    require(grid.size() == static_cast<std::size_t>(grid.channels) * grid.rows * grid.cols,
            "NSFC1: grid payload does not match its shape");
    out.write(kNsfcMagic, sizeof kNsfcMagic);
    put_u32(out, static_cast<std::uint32_t>(grid.rows));
    put_u32(out, static_cast<std::uint32_t>(grid.cols));
    put_u32(out, static_cast<std::uint32_t>(grid.channels));
    std::vector<float> payload(grid.values.begin(), grid.values.end());
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw Error(ErrorKind::io, "NSFC1: write failed");
}

Grid read_nsfc(std::istream& in)
{
    char magic[sizeof kNsfcMagic] = {};
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kNsfcMagic, sizeof magic) != 0)
        throw Error(ErrorKind::io, "NSFC1: bad magic");
    const auto rows = get_u32(in);
    const auto cols = get_u32(in);
    const auto channels = get_u32(in);
    const std::uint64_t count = std::uint64_t{rows} * cols * channels;
    if (count > (std::uint64_t{1} << 32)) throw Error(ErrorKind::io, "NSFC1: implausible shape");

    std::vector<float> payload(count);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) throw Error(ErrorKind::io, "NSFC1: truncated payload");

    Grid grid(static_cast<int>(channels), static_cast<int>(rows), static_cast<int>(cols));
    std::copy(payload.begin(), payload.end(), grid.values.begin());
    return grid;
}

void save_nsfc(const std::filesystem::path& path, const Grid& grid)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error(path, "cannot open for writing");
    write_nsfc(out, grid);
}

Grid load_nsfc(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error(path, "cannot open for reading");
    try {
        return read_nsfc(in);
    } catch (const Error& e) {
        throw io_error(path, e.what());
    }
}

Grid quantize_f32(Grid grid)
{
    for (double& v : grid.values) v = static_cast<double>(static_cast<float>(v));
    return grid;
}

void save_png(const std::filesystem::path& path, const Grid& grid, const PngOptions& options)
{
    require(grid.rows > 0 && grid.cols > 0 && grid.channels > 0, "PNG: empty grid");
    const bool rgb = grid.channels == 3;
    const int out_channels = rgb ? 3 : 1;

    double scale = std::exp2(options.exposure);
    if (options.normalize) {
        const double peak = *std::max_element(grid.values.begin(), grid.values.end());
        scale = peak > 0.0 ? scale / peak : scale;
    }
    auto tonemap = [&](double v) {
        const double x = std::clamp(v * scale, 0.0, 1.0);
        return static_cast<png_byte>(std::lround(255.0 * std::pow(x, 1.0 / options.gamma)));
    };

    std::vector<png_byte> pixels(grid.plane_size() * out_channels);
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            png_byte* px = &pixels[(static_cast<std::size_t>(r) * grid.cols + c) * out_channels];
            if (rgb) {
                for (int ch = 0; ch < 3; ++ch) px[ch] = tonemap(grid.at(ch, r, c));
            } else {
                double sum = 0.0;
                for (int ch = 0; ch < grid.channels; ++ch) sum += grid.at(ch, r, c);
                px[0] = tonemap(sum / grid.channels);
            }
        }
    }

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!file) throw io_error(path, "cannot open for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw io_error(path, "libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw io_error(path, "PNG encode failed");
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(grid.cols), static_cast<png_uint_32>(grid.rows), 8,
                 rgb ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    // Row 0 is at the bottom of the physical sensor; flip so +y points up.
    for (int r = grid.rows - 1; r >= 0; --r)
        png_write_row(png, &pixels[static_cast<std::size_t>(r) * grid.cols * out_channels]);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Grid load_png_gray(const std::filesystem::path& path)
{
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw io_error(path, std::string("cannot read PNG (") + image.message + ")");
    image.format = PNG_FORMAT_GRAY;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&image);
        throw io_error(path, std::string("PNG decode failed (") + image.message + ")");
    }
    const int rows = static_cast<int>(image.height);
    const int cols = static_cast<int>(image.width);
    Grid grid(1, rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            grid.at(0, rows - 1 - r, c) = buffer[static_cast<std::size_t>(r) * cols + c] / 255.0;
    return grid;
}

void save_csv(const std::filesystem::path& path, const Grid& grid)
{
    std::ostringstream out;
    out.precision(9);
    out << "channel,row,col,value\n";
    for (int ch = 0; ch < grid.channels; ++ch)
        for (int r = 0; r < grid.rows; ++r)
            for (int c = 0; c < grid.cols; ++c) out << ch << ',' << r << ',' << c << ',' << grid.at(ch, r, c) << '\n';
    write_text_file(path, out.str());
}

void write_text_file(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error(path, "cannot open for writing");
    out << text;
    if (!out) throw io_error(path, "write failed");
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error(path, "cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace nsfc
