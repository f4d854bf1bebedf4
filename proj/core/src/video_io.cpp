#include "dv/video_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

namespace dv {

namespace {
constexpr char kMagic[4] = {'D', 'V', 'I', 'D'};
}

void write_dvid(const std::string& path, const VideoTensor& video) {
    if (video.data.ndim() != 4) throw invalid_argument("write_dvid: video must be [T,H,W,C]");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write video file: " + path);
    os.write(kMagic, 4);
    uint32_t dims[4] = {static_cast<uint32_t>(video.data.dim(0)), static_cast<uint32_t>(video.data.dim(1)),
                        static_cast<uint32_t>(video.data.dim(2)), static_cast<uint32_t>(video.data.dim(3))};
    os.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    const double* p = video.data.data();
    std::vector<float> buf(static_cast<size_t>(video.data.size()));
    for (int64_t i = 0; i < video.data.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(p[i]);
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!os) throw io_error("write failed: " + path);
}

VideoTensor read_dvid(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open video file: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw io_error("not a DVID file: " + path);
    uint32_t dims[4];
    is.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!is) throw io_error("truncated DVID header: " + path);
    int64_t total = static_cast<int64_t>(dims[0]) * dims[1] * dims[2] * dims[3];
    if (total <= 0 || total > (1LL << 32)) throw io_error("implausible DVID dimensions: " + path);
    std::vector<float> buf(static_cast<size_t>(total));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!is) throw io_error("truncated DVID payload: " + path);
    Tensor t({dims[0], dims[1], dims[2], dims[3]});
    double* p = t.data();
    for (int64_t i = 0; i < total; ++i) p[i] = static_cast<double>(buf[static_cast<size_t>(i)]);
    return {std::move(t)};
}

void write_png(const std::string& path, const Tensor& image) {
    if (image.ndim() != 3 || image.dim(2) != 3) throw invalid_argument("write_png: expected [H,W,3]");
    int64_t H = image.dim(0), W = image.dim(1);
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw io_error("cannot write PNG: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw io_error("libpng failure writing " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<size_t>(W) * 3);
    const double* p = image.data();
    for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W * 3; ++x) {
            double v = p[y * W * 3 + x];
            v = std::clamp(v, 0.0, 1.0);
            row[static_cast<size_t>(x)] = static_cast<png_byte>(std::lround(v * 255.0));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

Tensor read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw io_error("cannot open PNG: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        std::fclose(fp);
        throw io_error("libpng failure reading " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_uint_32 W = png_get_image_width(png, info);
    png_uint_32 H = png_get_image_height(png, info);
    png_byte color = png_get_color_type(png, info);
    png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    std::vector<png_byte> row(static_cast<size_t>(png_get_rowbytes(png, info)));
    Tensor out({static_cast<int64_t>(H), static_cast<int64_t>(W), 3});
    double* p = out.data();
    for (png_uint_32 y = 0; y < H; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < W * 3; ++x)
            p[static_cast<int64_t>(y) * W * 3 + x] = static_cast<double>(row[x]) / 255.0;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return out;
}

void write_frame_grid_png(const std::string& path, const VideoTensor& video, int separator) {
    int64_t T = video.frames(), H = video.height(), W = video.width();
    int64_t gw = T * W + (T - 1) * separator;
    Tensor grid({H, gw, 3});
    grid.fill(1.0);
    const double* p = video.data.data();
    double* g = grid.data();
    for (int64_t t = 0; t < T; ++t) {
        int64_t x0 = t * (W + separator);
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                for (int64_t c = 0; c < 3; ++c)
                    g[(y * gw + x0 + x) * 3 + c] = p[((t * H + y) * W + x) * 3 + c];
    }
    write_png(path, grid);
}

Tensor read_image_any(const std::string& path) {
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".dvid") {
        VideoTensor v = read_dvid(path);
        int64_t H = v.height(), W = v.width();
        Tensor frame({H, W, 3});
        std::copy(v.data.data(), v.data.data() + H * W * 3, frame.data());
        return frame;
    }
    return read_png(path);
}

}  // namespace dv
