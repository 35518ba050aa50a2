#include "mfnet/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mfnet {

namespace {

struct ByteCursor {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;

    bool eof() const { return pos >= bytes.size(); }
    uint8_t peek() const { return bytes[pos]; }
    uint8_t take() { return bytes[pos++]; }

    [[noreturn]] void fail(const std::string& what) const {
        throw DecodeError(what + " at byte offset " + std::to_string(pos));
    }
};

bool is_space(uint8_t c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

// Skip whitespace and '#' comment lines between header tokens.
void skip_separators(ByteCursor& c) {
    while (!c.eof()) {
        if (is_space(c.peek())) {
            c.take();
        } else if (c.peek() == '#') {
            while (!c.eof() && c.take() != '\n') {
            }
        } else {
            return;
        }
    }
}

int64_t read_header_int(ByteCursor& c, const char* what) {
    skip_separators(c);
    if (c.eof()) c.fail(std::string("unexpected end of header while reading ") + what);
    if (c.peek() < '0' || c.peek() > '9') c.fail(std::string("expected digit for ") + what);
    int64_t v = 0;
    while (!c.eof() && c.peek() >= '0' && c.peek() <= '9') {
        v = v * 10 + (c.take() - '0');
        if (v > 1'000'000) c.fail(std::string("implausibly large ") + what);
    }
    return v;
}

}  // namespace

Tensor decode_image(const std::vector<uint8_t>& bytes) {
    ByteCursor c{bytes};
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        c.fail("bad magic, expected P5 or P6");
    int channels = bytes[1] == '6' ? 3 : 1;
    c.pos = 2;

    int64_t w = read_header_int(c, "width");
    int64_t h = read_header_int(c, "height");
    int64_t maxval = read_header_int(c, "maxval");
    if (w < 1 || h < 1) c.fail("image dimensions must be >= 1");
    if (maxval != 255) c.fail("unsupported maxval " + std::to_string(maxval) + ", only 255 is handled");
    if (c.eof() || !is_space(c.peek())) c.fail("expected single whitespace after maxval");
    c.take();

    size_t need = static_cast<size_t>(w * h * channels);
    if (bytes.size() - c.pos < need)
        c.fail("payload truncated: need " + std::to_string(need) + " bytes, have " +
               std::to_string(bytes.size() - c.pos));

    // file stores pixels interleaved row-major; tensor is channels-first.
    // decode is bit-exact value/255 regardless of the precision mode
    Tensor img({channels, h, w});
    const uint8_t* src = bytes.data() + c.pos;
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int ch = 0; ch < channels; ++ch)
                img.at3(ch, y, x) = static_cast<double>(src[(y * w + x) * channels + ch]) / 255.0;
    return img;
}

Tensor load_image(const std::string& path) { return decode_image(read_file(path)); }

namespace {

uint8_t to_byte(double v) {
    double clamped = std::min(1.0, std::max(0.0, v));
    return static_cast<uint8_t>(std::lround(clamped * 255.0));
}

std::vector<uint8_t> encode_pnm(const Tensor& img, int channels) {
    int64_t h = img.dim(img.rank() - 2), w = img.dim(img.rank() - 1);
    std::string header = std::string(channels == 3 ? "P6" : "P5") + "\n" + std::to_string(w) + " " +
                         std::to_string(h) + "\n255\n";
    std::vector<uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + static_cast<size_t>(h * w * channels));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int ch = 0; ch < channels; ++ch)
                out.push_back(to_byte(channels == 3 ? img.at3(ch, y, x) : img.at2(y, x)));
    return out;
}

}  // namespace

std::vector<uint8_t> encode_ppm(const Tensor& img_3hw) {
    if (img_3hw.rank() != 3 || img_3hw.dim(0) != 3)
        throw DimensionError("encode_ppm expects [3,h,w], got " + shape_to_string(img_3hw.shape()));
    return encode_pnm(img_3hw, 3);
}

std::vector<uint8_t> encode_pgm(const Tensor& img_hw) {
    if (img_hw.rank() != 2)
        throw DimensionError("encode_pgm expects [h,w], got " + shape_to_string(img_hw.shape()));
    return encode_pnm(img_hw, 1);
}

void save_ppm(const std::string& path, const Tensor& img_3hw) { write_file(path, encode_ppm(img_3hw)); }
void save_pgm(const std::string& path, const Tensor& img_hw) { write_file(path, encode_pgm(img_hw)); }

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failure on '" + path + "'");
    return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failure on '" + path + "'");
}

}  // namespace mfnet
