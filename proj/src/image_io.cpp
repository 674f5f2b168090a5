#include "ispl/image.hpp"

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

#include <jpeglib.h>
#include <png.h>

namespace ispl {

ImageBatch ImageBatch::concat(const std::vector<ImageBatch>& items) {
    check(!items.empty(), "ImageBatch::concat: empty list");
    const auto& first = items[0];
    int64_t total = 0;
    for (const auto& it : items) {
        check(it.channels() == first.channels() && it.height() == first.height() &&
                  it.width() == first.width() && it.range == first.range,
              "ImageBatch::concat: incompatible members");
        total += it.count();
    }
    Tensor t({total, first.channels(), first.height(), first.width()});
    double* dst = t.data();
    for (const auto& it : items) {
        std::copy(it.data.data(), it.data.data() + it.data.numel(), dst);
        dst += it.data.numel();
    }
    return ImageBatch(std::move(t), first.range);
}

namespace io {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

ImageBatch from_rgb8(const std::vector<uint8_t>& rgb, int64_t h, int64_t w) {
    Tensor t({1, 3, h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c)
                t.at(0, c, y, x) = rgb[(y * w + x) * 3 + c] / 255.0;
    return ImageBatch(std::move(t));
}

std::vector<uint8_t> to_rgb8(const ImageBatch& img, int64_t index) {
    check(img.channels() == 3, "image io: expected 3 channels");
    const int64_t h = img.height(), w = img.width();
    const double lo = img.range.lo, span = img.range.span();
    std::vector<uint8_t> rgb(static_cast<size_t>(h * w * 3));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c) {
                const double v = (img.data.at(index, c, y, x) - lo) / span;
                rgb[(y * w + x) * 3 + c] =
                    static_cast<uint8_t>(std::lround(clamp(v, 0.0, 1.0) * 255.0));
            }
    return rgb;
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    longjmp(err->jump, 1);
}

}  // namespace

ImageBatch read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png decode failed for " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    std::vector<uint8_t> rgb(static_cast<size_t>(w) * h * 3);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = rgb.data() + static_cast<size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return from_rgb8(rgb, h, w);
}

void write_png(const std::string& path, const ImageBatch& img, int64_t index) {
    const auto rgb = to_rgb8(img, index);
    const int64_t h = img.height(), w = img.width();

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        throw IoError("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png encode failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(h);
    for (int64_t y = 0; y < h; ++y)
        rows[y] = const_cast<png_bytep>(rgb.data() + y * w * 3);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::vector<uint8_t> jpeg_encode(const std::vector<uint8_t>& rgb, int64_t h, int64_t w,
                                 int quality) {
    check(quality >= 0 && quality <= 100, "jpeg_encode: quality must lie in [0,100]");
    jpeg_compress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;

    unsigned char* buffer = nullptr;
    unsigned long size = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        if (buffer) free(buffer);
        throw IoError(std::string("jpeg encode failed: ") + err.message);
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buffer, &size);
    cinfo.image_width = static_cast<JDIMENSION>(w);
    cinfo.image_height = static_cast<JDIMENSION>(h);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);  // force baseline tables
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<JSAMPROW>(rgb.data() + cinfo.next_scanline * w * 3);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    std::vector<uint8_t> out(buffer, buffer + size);
    free(buffer);
    return out;
}

std::vector<uint8_t> jpeg_decode(const std::vector<uint8_t>& bytes, int64_t& h, int64_t& w) {
    jpeg_decompress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw IoError(std::string("jpeg decode failed: ") + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    h = cinfo.output_height;
    w = cinfo.output_width;
    std::vector<uint8_t> rgb(static_cast<size_t>(h) * w * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = rgb.data() + static_cast<size_t>(cinfo.output_scanline) * w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return rgb;
}

namespace {

bool has_png_magic(const uint8_t* magic, size_t n) {
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    return n >= 8 && std::memcmp(magic, sig, 8) == 0;
}

std::vector<uint8_t> read_file(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path);
    std::fseek(fp.get(), 0, SEEK_END);
    const long sz = std::ftell(fp.get());
    std::fseek(fp.get(), 0, SEEK_SET);
    std::vector<uint8_t> bytes(static_cast<size_t>(sz));
    if (sz > 0 && std::fread(bytes.data(), 1, bytes.size(), fp.get()) != bytes.size())
        throw IoError("short read on " + path);
    return bytes;
}

}  // namespace

ImageBatch read_image(const std::string& path) {
    const auto bytes = read_file(path);
    if (has_png_magic(bytes.data(), bytes.size())) return read_png(path);
    if (bytes.size() >= 2 && bytes[0] == 0xFF && bytes[1] == 0xD8) {
        int64_t h = 0, w = 0;
        const auto rgb = jpeg_decode(bytes, h, w);
        return from_rgb8(rgb, h, w);
    }
    throw IoError("unsupported image format: " + path);
}

std::pair<int64_t, int64_t> read_image_size(const std::string& path) {
    const auto bytes = read_file(path);
    if (has_png_magic(bytes.data(), bytes.size())) {
        // IHDR is always the first chunk: width/height live at offsets 16/20.
        check(bytes.size() >= 24, "truncated png: " + path);
        auto be32 = [&](size_t off) {
            return (int64_t(bytes[off]) << 24) | (int64_t(bytes[off + 1]) << 16) |
                   (int64_t(bytes[off + 2]) << 8) | int64_t(bytes[off + 3]);
        };
        return {be32(20), be32(16)};
    }
    if (bytes.size() >= 2 && bytes[0] == 0xFF && bytes[1] == 0xD8) {
        jpeg_decompress_struct cinfo;
        JpegErrorMgr err;
        cinfo.err = jpeg_std_error(&err.pub);
        err.pub.error_exit = jpeg_error_exit;
        if (setjmp(err.jump)) {
            jpeg_destroy_decompress(&cinfo);
            throw IoError("jpeg header read failed for " + path);
        }
        jpeg_create_decompress(&cinfo);
        jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
        jpeg_read_header(&cinfo, TRUE);
        const int64_t h = cinfo.image_height, w = cinfo.image_width;
        jpeg_destroy_decompress(&cinfo);
        return {h, w};
    }
    throw IoError("unsupported image format: " + path);
}

}  // namespace io

}  // namespace ispl
