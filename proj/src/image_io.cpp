#include "colormamba/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

namespace colormamba {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(is),
                                std::istreambuf_iterator<char>());
}

// --- PNM ---------------------------------------------------------------

int pnm_token(const std::vector<uint8_t>& data, size_t& pos) {
    // skip whitespace and '#' comments
    while (pos < data.size()) {
        if (std::isspace(data[pos])) {
            ++pos;
        } else if (data[pos] == '#') {
            while (pos < data.size() && data[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    int value = 0;
    bool any = false;
    while (pos < data.size() && std::isdigit(data[pos])) {
        value = value * 10 + (data[pos] - '0');
        ++pos;
        any = true;
    }
    if (!any) throw std::runtime_error("malformed PNM header");
    return value;
}

}  // namespace

ImageU8 read_pnm(const std::string& path) {
    std::vector<uint8_t> data = read_file(path);
    if (data.size() < 2 || data[0] != 'P' || (data[1] != '5' && data[1] != '6'))
        throw std::runtime_error(path + ": not a P5/P6 PNM file");
    int channels = data[1] == '5' ? 1 : 3;
    size_t pos = 2;
    int w = pnm_token(data, pos);
    int h = pnm_token(data, pos);
    int maxval = pnm_token(data, pos);
    if (maxval < 1 || maxval > 255) throw std::runtime_error(path + ": unsupported PNM maxval");
    ++pos;  // single whitespace after maxval
    size_t need = size_t(w) * size_t(h) * size_t(channels);
    if (data.size() < pos + need) throw std::runtime_error(path + ": truncated PNM data");
    ImageU8 img;
    img.h = h;
    img.w = w;
    img.channels = channels;
    img.pixels.assign(data.begin() + pos, data.begin() + pos + need);
    if (maxval != 255) {
        for (auto& p : img.pixels)
            p = static_cast<uint8_t>(std::lround(double(p) * 255.0 / double(maxval)));
    }
    return img;
}

void write_pgm(const std::string& path, const ImageU8& img) {
    if (img.channels != 1) throw std::runtime_error("write_pgm: single channel only");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << "P5\n" << img.w << " " << img.h << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.pixels.data()),
             static_cast<std::streamsize>(img.pixels.size()));
    if (!os) throw std::runtime_error("write failed for " + path);
}

// --- PNG ---------------------------------------------------------------

namespace {

const uint8_t kPngSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

uint32_t get_be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4],
                  const std::vector<uint8_t>& payload) {
    put_be32(out, static_cast<uint32_t>(payload.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + start, static_cast<uInt>(out.size() - start));
    put_be32(out, crc);
}

uint8_t paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return uint8_t(a);
    if (pb <= pc) return uint8_t(b);
    return uint8_t(c);
}

}  // namespace

void write_png(const std::string& path, const ImageU8& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::runtime_error("write_png: gray or RGB only");
    std::vector<uint8_t> out(kPngSig, kPngSig + 8);

    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(img.w));
    put_be32(ihdr, static_cast<uint32_t>(img.h));
    ihdr.push_back(8);                                 // bit depth
    ihdr.push_back(img.channels == 1 ? 0 : 2);         // gray / truecolor
    ihdr.push_back(0);                                 // compression
    ihdr.push_back(0);                                 // filter
    ihdr.push_back(0);                                 // no interlace
    append_chunk(out, "IHDR", ihdr);

    // raw scanlines, filter byte 0 per row
    size_t stride = size_t(img.w) * size_t(img.channels);
    std::vector<uint8_t> raw((stride + 1) * size_t(img.h));
    for (int64_t y = 0; y < img.h; ++y) {
        raw[size_t(y) * (stride + 1)] = 0;
        std::memcpy(&raw[size_t(y) * (stride + 1) + 1], &img.pixels[size_t(y) * stride], stride);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> idat(bound);
    if (compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw std::runtime_error("write_png: deflate failed");
    idat.resize(bound);
    append_chunk(out, "IDAT", idat);
    append_chunk(out, "IEND", {});

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!os) throw std::runtime_error("write failed for " + path);
}

ImageU8 read_png(const std::string& path) {
    std::vector<uint8_t> data = read_file(path);
    if (data.size() < 8 || std::memcmp(data.data(), kPngSig, 8) != 0)
        throw std::runtime_error(path + ": not a PNG file");

    uint32_t width = 0, height = 0;
    int bit_depth = 0, color_type = 0, interlace = 0;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 8 <= data.size()) {
        uint32_t len = get_be32(&data[pos]);
        std::string type(reinterpret_cast<const char*>(&data[pos + 4]), 4);
        if (pos + 12 + len > data.size()) throw std::runtime_error(path + ": truncated PNG");
        const uint8_t* payload = &data[pos + 8];
        if (type == "IHDR") {
            width = get_be32(payload);
            height = get_be32(payload + 4);
            bit_depth = payload[8];
            color_type = payload[9];
            interlace = payload[12];
        } else if (type == "IDAT") {
            idat.insert(idat.end(), payload, payload + len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (width == 0 || height == 0) throw std::runtime_error(path + ": missing IHDR");
    if (bit_depth != 8 || interlace != 0)
        throw std::runtime_error(path + ": only 8-bit non-interlaced PNG supported");
    int channels;
    switch (color_type) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 6: channels = 4; break;
        default: throw std::runtime_error(path + ": unsupported PNG color type");
    }

    size_t stride = size_t(width) * size_t(channels);
    uLongf raw_size = static_cast<uLongf>((stride + 1) * height);
    std::vector<uint8_t> raw(raw_size);
    if (uncompress(raw.data(), &raw_size, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_size != (stride + 1) * height)
        throw std::runtime_error(path + ": PNG inflate failed");

    // undo per-row filters
    std::vector<uint8_t> pix(stride * height);
    int bpp = channels;
    for (uint32_t y = 0; y < height; ++y) {
        uint8_t filter = raw[size_t(y) * (stride + 1)];
        const uint8_t* src = &raw[size_t(y) * (stride + 1) + 1];
        uint8_t* dst = &pix[size_t(y) * stride];
        const uint8_t* prev = y > 0 ? &pix[size_t(y - 1) * stride] : nullptr;
        for (size_t x = 0; x < stride; ++x) {
            int a = x >= size_t(bpp) ? dst[x - bpp] : 0;
            int b = prev ? prev[x] : 0;
            int c = (prev && x >= size_t(bpp)) ? prev[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw std::runtime_error(path + ": bad PNG filter");
            }
            dst[x] = uint8_t(v);
        }
    }

    ImageU8 img;
    img.h = height;
    img.w = width;
    if (channels == 4) {  // strip alpha
        img.channels = 3;
        img.pixels.resize(size_t(width) * height * 3);
        for (size_t p = 0; p < size_t(width) * height; ++p) {
            img.pixels[3 * p] = pix[4 * p];
            img.pixels[3 * p + 1] = pix[4 * p + 1];
            img.pixels[3 * p + 2] = pix[4 * p + 2];
        }
    } else {
        img.channels = channels;
        img.pixels = std::move(pix);
    }
    return img;
}

ImageU8 read_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[2] = {0, 0};
    is.read(magic, 2);
    is.close();
    if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6')) return read_pnm(path);
    if (static_cast<uint8_t>(magic[0]) == 137 && magic[1] == 'P') return read_png(path);
    throw std::runtime_error(path + ": unrecognized image format (need PGM, PPM or PNG)");
}

Tensor image_to_tensor(const ImageU8& img) {
    std::vector<real> data(img.pixels.size());
    for (size_t i = 0; i < img.pixels.size(); ++i) data[i] = real(img.pixels[i]) / real(255);
    return Tensor::from_data({1, img.h, img.w, img.channels}, std::move(data));
}

ImageU8 tensor_to_image(const Tensor& t) {
    if (t.ndim() != 4 || t.dim(0) != 1) throw ShapeError("tensor_to_image: expects (1,H,W,C)");
    ImageU8 img;
    img.h = t.dim(1);
    img.w = t.dim(2);
    img.channels = t.dim(3);
    img.pixels.resize(t.values().size());
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        real v = std::clamp(t.values()[i], real(0), real(1));
        img.pixels[i] = static_cast<uint8_t>(std::lround(double(v) * 255.0));
    }
    return img;
}

}  // namespace colormamba
