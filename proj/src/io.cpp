#include "tomodiff/io.hpp"

#include "tomodiff/errors.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>

namespace tomodiff {

namespace {

template <class U>
void put_le(std::string& out, U v) {
    for (std::size_t k = 0; k < sizeof(U); ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}

template <class U>
U get_le(const std::string& b, std::size_t off) {
    U v = 0;
    for (std::size_t k = 0; k < sizeof(U); ++k) v |= static_cast<U>(static_cast<unsigned char>(b[off + k])) << (8 * k);
    return v;
}

} // namespace

std::string encode_volume(const Volume3& vol) {
    const Shape3 s = vol.shape();
    const Spacing3 sp = vol.spacing();
    const auto lim = std::numeric_limits<std::uint32_t>::max();
    if (s.nz > lim || s.ny > lim || s.nx > lim) throw ConfigError("volume dimensions exceed the file format");
    std::string out;
    out.reserve(kVolumeHeaderBytes + 4 * vol.size());
    out += "TDV1";
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.nz));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.ny));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.nx));
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(sp.dz));
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(sp.dy));
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(sp.dx));
    for (double v : vol.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    return out;
}

Volume3 decode_volume(const std::string& b) {
    if (b.size() < 4 || b.compare(0, 4, "TDV1") != 0) throw FormatError("magic", 0, "expected TDV1");
    if (b.size() < kVolumeHeaderBytes) throw FormatError("header", b.size(), "truncated header");
    const char* dim_names[3] = {"nz", "ny", "nx"};
    std::size_t dims[3];
    for (int k = 0; k < 3; ++k) {
        dims[k] = get_le<std::uint32_t>(b, 4 + 4 * k);
        if (dims[k] == 0) throw FormatError(dim_names[k], 4 + 4 * k, "dimension must be positive");
    }
    const char* sp_names[3] = {"dz", "dy", "dx"};
    double sp[3];
    for (int k = 0; k < 3; ++k) {
        sp[k] = std::bit_cast<double>(get_le<std::uint64_t>(b, 16 + 8 * k));
        if (!std::isfinite(sp[k]) || !(sp[k] > 0.0))
            throw FormatError(sp_names[k], 16 + 8 * k, "spacing must be finite and positive");
    }
    const std::size_t n = dims[0] * dims[1] * dims[2];
    const std::size_t payload = b.size() - kVolumeHeaderBytes;
    if (payload != 4 * n)
        throw FormatError("payload", kVolumeHeaderBytes + std::min(payload, 4 * n),
                          "expected " + std::to_string(4 * n) + " bytes, found " + std::to_string(payload));
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i)
        data[i] = std::bit_cast<float>(get_le<std::uint32_t>(b, kVolumeHeaderBytes + 4 * i));
    return Volume3({dims[0], dims[1], dims[2]}, std::move(data), {sp[0], sp[1], sp[2]});
}

void write_raw(const std::string& path, const Volume3& vol) {
    const std::string bytes = encode_volume(vol);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

Volume3 read_raw(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_volume(bytes);
}

namespace {

void write_png(const std::string& path, const Image2& im, double lo, double hi) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("PNG encoding failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(im.cols), static_cast<png_uint_32>(im.rows), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(im.cols);
    for (std::size_t r = 0; r < im.rows; ++r) {
        for (std::size_t c = 0; c < im.cols; ++c) {
            const double t = std::clamp((im(r, c) - lo) / (hi - lo), 0.0, 1.0);
            row[c] = static_cast<png_byte>(std::lround(255.0 * t));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

} // namespace

std::vector<std::string> export_png_slices(const Volume3& vol, const std::string& dir, PlaneAxis axis, double lo,
                                           double hi) {
    if (!(hi > lo)) throw ConfigError("PNG window needs hi > lo");
    std::filesystem::create_directories(dir);
    std::vector<std::string> paths;
    const auto planes = plane_views(vol, axis);
    for (std::size_t k = 0; k < planes.size(); ++k) {
        char name[64];
        std::snprintf(name, sizeof name, "%s_%04zu.png", std::string(to_string(axis)).c_str(), k);
        const std::string p = (std::filesystem::path(dir) / name).string();
        write_png(p, planes[k], lo, hi);
        paths.push_back(p);
    }
    return paths;
}

} // namespace tomodiff
