#include "lmk/png_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "lmk/errors.hpp"

namespace lmk {

namespace {

void put_u32(std::string& s, uint32_t v) {
    s.push_back(char((v >> 24) & 0xff));
    s.push_back(char((v >> 16) & 0xff));
    s.push_back(char((v >> 8) & 0xff));
    s.push_back(char(v & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void append_chunk(std::string& out, const char type[4], const std::string& payload) {
    put_u32(out, uint32_t(payload.size()));
    std::string body(type, 4);
    body += payload;
    out += body;
    uint32_t crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()), uInt(body.size()));
    put_u32(out, crc);
}

std::string zlib_compress(const std::string& raw) {
    uLongf bound = compressBound(uLong(raw.size()));
    std::string out(bound, '\0');
    if (compress2(reinterpret_cast<Bytef*>(out.data()), &bound,
                  reinterpret_cast<const Bytef*>(raw.data()), uLong(raw.size()), 6) != Z_OK)
        throw std::runtime_error("png: deflate failed");
    out.resize(bound);
    return out;
}

std::string zlib_decompress(const std::string& compressed, size_t expected) {
    std::string out(expected, '\0');
    uLongf out_len = uLongf(expected);
    int rc = uncompress(reinterpret_cast<Bytef*>(out.data()), &out_len,
                        reinterpret_cast<const Bytef*>(compressed.data()), uLong(compressed.size()));
    if (rc != Z_OK) throw ParseError("png: inflate failed", 0);
    out.resize(out_len);
    return out;
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
    if (img.c != 1 && img.c != 3) throw std::invalid_argument("write_png: channels must be 1 or 3");
    const uint8_t color_type = img.c == 1 ? 0 : 2;

    std::string ihdr;
    put_u32(ihdr, uint32_t(img.w));
    put_u32(ihdr, uint32_t(img.h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(char(color_type));
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // interlace

    const size_t stride = size_t(img.w) * img.c;
    std::string raw;
    raw.reserve((stride + 1) * img.h);
    for (int y = 0; y < img.h; ++y) {
        raw.push_back(0);  // filter: none
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch) {
                float v = std::clamp(img.at(y, x, ch), 0.f, 1.f);
                raw.push_back(char(uint8_t(std::lround(v * 255.f))));
            }
    }

    std::string out("\x89PNG\r\n\x1a\n", 8);
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", zlib_compress(raw));
    append_chunk(out, "IEND", "");

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_png: cannot open " + path);
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw std::runtime_error("write_png: write failed for " + path);
}

Image read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_png: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 8 || std::memcmp(buf.data(), "\x89PNG\r\n\x1a\n", 8) != 0)
        throw ParseError("read_png: bad signature in " + path, 0);

    const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data());
    size_t pos = 8;
    int w = 0, h = 0, channels = 0, file_channels = 0;
    std::string idat;
    while (pos + 8 <= buf.size()) {
        uint32_t len = get_u32(p + pos);
        std::string type(buf.data() + pos + 4, 4);
        if (pos + 12 + len > buf.size()) throw ParseError("read_png: truncated chunk in " + path, 0);
        const unsigned char* payload = p + pos + 8;
        if (type == "IHDR") {
            w = int(get_u32(payload));
            h = int(get_u32(payload + 4));
            int depth = payload[8], color = payload[9], interlace = payload[12];
            if (depth != 8 || interlace != 0)
                throw ParseError("read_png: only 8-bit non-interlaced supported", 0);
            switch (color) {
                case 0: file_channels = 1; channels = 1; break;
                case 2: file_channels = 3; channels = 3; break;
                case 6: file_channels = 4; channels = 3; break;  // drop alpha
                default: throw ParseError("read_png: unsupported color type", 0);
            }
        } else if (type == "IDAT") {
            idat.append(buf.data() + pos + 8, len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (w <= 0 || h <= 0 || channels == 0) throw ParseError("read_png: missing IHDR", 0);

    const size_t stride = size_t(w) * file_channels;
    std::string raw = zlib_decompress(idat, (stride + 1) * h);
    if (raw.size() != (stride + 1) * h) throw ParseError("read_png: bad decompressed size", 0);

    // undo per-scanline filters in place
    std::vector<uint8_t> prev(stride, 0), cur(stride, 0);
    Image img(h, w, channels);
    const int bpp = file_channels;
    for (int y = 0; y < h; ++y) {
        const uint8_t filter = uint8_t(raw[(stride + 1) * y]);
        const uint8_t* src = reinterpret_cast<const uint8_t*>(raw.data()) + (stride + 1) * y + 1;
        for (size_t i = 0; i < stride; ++i) {
            const int a = i >= size_t(bpp) ? cur[i - bpp] : 0;
            const int b = prev[i];
            const int c = i >= size_t(bpp) ? prev[i - bpp] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw ParseError("read_png: bad filter byte", y + 1);
            }
            cur[i] = uint8_t(v & 0xff);
        }
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < channels; ++ch)
                img.at(y, x, ch) = float(cur[size_t(x) * file_channels + ch]) / 255.f;
        std::swap(prev, cur);
    }
    return img;
}

}  // namespace lmk
