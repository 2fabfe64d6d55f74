// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rigsplat {

namespace fs = std::filesystem;

void atomic_write(const fs::path& path, const std::string& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

void write_png(const fs::path& path, int width, int height, std::uint32_t format,
               const std::vector<std::uint8_t>& pixels) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(width);
    img.height = static_cast<png_uint_32>(height);
    img.format = format;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels.data(), 0, nullptr))
        throw FormatError("png encode failed for " + path.string() + ": " + img.message);
    std::string bytes(size, '\0');
    if (!png_image_write_to_memory(&img, bytes.data(), &size, 0, pixels.data(), 0, nullptr))
        throw FormatError("png encode failed for " + path.string() + ": " + img.message);
    bytes.resize(size);
    atomic_write(path, bytes);
}

Image read_png(const fs::path& path, std::uint32_t format, int channels) {
    const std::string bytes = read_file(path);
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
        throw FormatError("not a PNG image: " + path.string() + " (" + img.message + ")");
    img.format = format;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
        png_image_free(&img);
        throw FormatError("png decode failed for " + path.string() + ": " + img.message);
    }
    Image out(static_cast<int>(img.width), static_cast<int>(img.height), channels);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = pixels[i] / 255.0;
    return out;
}

}  // namespace

void write_png_rgb(const fs::path& path, const Image& rgb) {
    if (rgb.channels != 3) throw std::invalid_argument("write_png_rgb: expected 3 channels");
    std::vector<std::uint8_t> px(rgb.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = quantize(rgb.data[i]);
    write_png(path, rgb.width, rgb.height, PNG_FORMAT_RGB, px);
}

void write_png_mask(const fs::path& path, const Image& mask) {
    if (mask.channels != 1) throw std::invalid_argument("write_png_mask: expected 1 channel");
    std::vector<std::uint8_t> px(mask.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask.data[i] > 0.5 ? 255 : 0;
    write_png(path, mask.width, mask.height, PNG_FORMAT_GRAY, px);
}

Image read_png_rgb(const fs::path& path) { return read_png(path, PNG_FORMAT_RGB, 3); }

Image read_png_mask(const fs::path& path) { return read_png(path, PNG_FORMAT_GRAY, 1); }

}  // namespace rigsplat
