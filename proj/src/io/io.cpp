// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "mimic/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mimic {

static_assert(std::endian::native == std::endian::little, "file writers assume a little-endian host");

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "' for reading");
    return in;
}

void finish(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError("'" + path + "': truncated checkpoint");
    return v;
}

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

// Tensors in file order; save and load walk the same list.
std::vector<ad::Tensor> file_order(const StudentField& s) {
    std::vector<ad::Tensor> out(s.coarse.planes.begin(), s.coarse.planes.end());
    for (const auto& t : s.decoder.parameters()) out.push_back(t);
    out.push_back(s.w.w);
    for (const auto& t : s.super_res.parameters()) out.push_back(t);
    if (s.aware) {
        for (const auto& t : s.aware->parameters()) out.push_back(t);
    }
    return out;
}

}  // namespace

void write_png(const std::string& path, const ad::Tensor& image) {
    if (image.dim() != 3 || image.size(2) != 3) {
        throw std::invalid_argument("write_png: expected H x W x 3, got " + ad::to_string(image.shape()));
    }
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.size(1));
    img.height = static_cast<png_uint_32>(image.size(0));
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> bytes(image.numel());
    const auto src = image.data();
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(src[i]);
    if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr)) {
        throw std::runtime_error("write_png '" + path + "': " + img.message);
    }
}

ad::Tensor read_png(const std::string& path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) throw FormatError("read_png '" + path + "': " + img.message);
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
        throw FormatError("read_png '" + path + "': " + img.message);
    }
    std::vector<double> v(bytes.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = bytes[i] / 255.0;
    return ad::Tensor::from_vector({img.height, img.width, 3}, std::move(v));
}

void write_pfm(const std::string& path, std::span<const double> values, std::size_t height, std::size_t width) {
    const std::size_t channels = height * width == 0 ? 0 : values.size() / (height * width);
    if ((channels != 1 && channels != 3) || channels * height * width != values.size()) {
        throw std::invalid_argument("write_pfm: values do not form H x W x {1, 3}");
    }
    auto out = open_out(path);
    out << (channels == 3 ? "PF" : "Pf") << '\n' << width << ' ' << height << "\n-1.0\n";
    for (std::size_t r = height; r-- > 0;) {
        for (std::size_t i = 0; i < width * channels; ++i) put(out, static_cast<float>(values[r * width * channels + i]));
    }
    finish(out, path);
}

void write_pfm(const std::string& path, const ad::Tensor& image) {
    if (image.dim() == 3 && image.size(2) == 3) return write_pfm(path, image.data(), image.size(0), image.size(1));
    if (image.dim() == 2) return write_pfm(path, image.data(), image.size(0), image.size(1));
    throw std::invalid_argument("write_pfm: expected H x W or H x W x 3, got " + ad::to_string(image.shape()));
}

ad::Tensor read_pfm(const std::string& path) {
    auto in = open_in(path);
    std::string magic;
    std::size_t width = 0, height = 0;
    double scale = 0.0;
    in >> magic >> width >> height >> scale;
    in.get();
    if (!in || (magic != "PF" && magic != "Pf")) throw FormatError("'" + path + "' is not a PFM file");
    if (scale >= 0.0) throw FormatError("'" + path + "': big-endian PFM is not supported");
    const std::size_t channels = magic == "PF" ? 3 : 1;
    std::vector<double> v(height * width * channels);
    for (std::size_t r = height; r-- > 0;) {
        for (std::size_t i = 0; i < width * channels; ++i) v[r * width * channels + i] = get<float>(in, path);
    }
    if (channels == 3) return ad::Tensor::from_vector({height, width, 3}, std::move(v));
    return ad::Tensor::from_vector({height, width}, std::move(v));
}

void save_checkpoint(const std::string& path, const StudentField& student, ad::DType dtype) {
    student.validate();
    auto out = open_out(path);
    out.write("TPL1", 4);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(student.coarse.channels()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(student.coarse.resolution()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(student.residual_resolution()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(student.w.dim()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(student.super_res.factor));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(student.decoder.hidden()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(student.decoder.depth()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(student.decoder.color_dim));
    put<std::uint8_t>(out, student.aware ? 1 : 0);
    for (const auto& t : file_order(student)) {
        for (double v : t.data()) {
            if (dtype == ad::DType::kFloat32) {
                put(out, static_cast<float>(v));
            } else {
                put(out, v);
            }
        }
    }
    finish(out, path);
}

StudentField load_checkpoint(const std::string& path) {
    auto in = open_in(path);
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "TPL1", 4) != 0) throw FormatError("'" + path + "': bad checkpoint magic");
    StudentConfig cfg;
    cfg.channels = get<std::uint32_t>(in, path);
    cfg.coarse_resolution = get<std::uint32_t>(in, path);
    const std::size_t resid = get<std::uint32_t>(in, path);
    cfg.style_dim = get<std::uint32_t>(in, path);
    const auto dtype = get<std::uint8_t>(in, path);
    cfg.factor = get<std::uint32_t>(in, path);
    cfg.hidden = get<std::uint32_t>(in, path);
    cfg.depth = get<std::uint32_t>(in, path);
    cfg.color_dim = get<std::uint32_t>(in, path);
    cfg.aware3d = get<std::uint8_t>(in, path) != 0;
    if (dtype > 1) throw FormatError("'" + path + "': unknown dtype " + std::to_string(dtype));
    if (cfg.channels == 0 || cfg.coarse_resolution == 0 || cfg.style_dim == 0 || cfg.depth == 0 ||
        resid != cfg.coarse_resolution * cfg.factor || cfg.channels * cfg.coarse_resolution > (1u << 24)) {
        throw FormatError("'" + path + "': inconsistent checkpoint header");
    }
    if (cfg.depth == 1) cfg.hidden = 1;
    StudentField student;
    try {
        student = StudentField::init(cfg, 0);
    } catch (const std::invalid_argument& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
    for (auto t : file_order(student)) {
        for (auto& v : t.mutable_data()) v = dtype == 1 ? double(get<float>(in, path)) : get<double>(in, path);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("'" + path + "': trailing bytes");
    student.validate();
    return student;
}

}  // namespace mimic
