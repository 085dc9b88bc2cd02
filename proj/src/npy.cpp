#include "modforge/npy.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "modforge/error.hpp"

namespace modforge::npy {
namespace {

constexpr std::array<char, 6> kMagic = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

template <typename T>
T byteswap_if_big(T value) {
    if constexpr (std::endian::native == std::endian::big) {
        std::array<unsigned char, sizeof(T)> bytes;
        std::memcpy(bytes.data(), &value, sizeof(T));
        std::reverse(bytes.begin(), bytes.end());
        std::memcpy(&value, bytes.data(), sizeof(T));
    }
    return value;
}

// Minimal parser for the Python dict literal in the header, e.g.
// {'descr': '<f8', 'fortran_order': False, 'shape': (2, 3), }
class HeaderParser {
public:
    explicit HeaderParser(std::string_view text) : text_(text) {}

    void parse(std::string& descr, bool& fortran_order, std::vector<std::uint64_t>& shape) {
        bool have_descr = false, have_order = false, have_shape = false;
        expect('{');
        while (true) {
            skip_ws();
            if (peek() == '}') {
                ++pos_;
                break;
            }
            const std::string key = parse_string();
            expect(':');
            if (key == "descr") {
                descr = parse_string();
                have_descr = true;
            } else if (key == "fortran_order") {
                fortran_order = parse_bool();
                have_order = true;
            } else if (key == "shape") {
                shape = parse_tuple();
                have_shape = true;
            } else {
                fail("unexpected header key '" + key + "'");
            }
            skip_ws();
            if (peek() == ',') ++pos_;
        }
        if (!have_descr || !have_order || !have_shape)
            fail("header must define descr, fortran_order and shape");
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw DataError("npy header: " + what);
    }
    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    char peek() {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of header");
        return text_[pos_];
    }
    void expect(char c) {
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }
    std::string parse_string() {
        const char quote = peek();
        if (quote != '\'' && quote != '"') fail("expected string");
        ++pos_;
        const auto end = text_.find(quote, pos_);
        if (end == std::string_view::npos) fail("unterminated string");
        std::string s(text_.substr(pos_, end - pos_));
        pos_ = end + 1;
        return s;
    }
    bool parse_bool() {
        skip_ws();
        if (text_.substr(pos_, 4) == "True") {
            pos_ += 4;
            return true;
        }
        if (text_.substr(pos_, 5) == "False") {
            pos_ += 5;
            return false;
        }
        fail("expected True or False");
    }
    std::vector<std::uint64_t> parse_tuple() {
        expect('(');
        std::vector<std::uint64_t> dims;
        while (true) {
            if (peek() == ')') {
                ++pos_;
                return dims;
            }
            std::uint64_t v = 0;
            bool any = false;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                v = v * 10 + static_cast<std::uint64_t>(text_[pos_] - '0');
                ++pos_;
                any = true;
            }
            if (!any) fail("expected integer in shape");
            dims.push_back(v);
            if (peek() == ',') ++pos_;
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

template <typename T>
void read_payload(std::istream& in, DenseMatrix& out) {
    std::vector<T> buf(out.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(T)));
    if (static_cast<std::size_t>(in.gcount()) != buf.size() * sizeof(T))
        throw DataError("npy payload truncated");
    auto dst = out.flat();
    for (std::size_t i = 0; i < buf.size(); ++i) dst[i] = static_cast<double>(byteswap_if_big(buf[i]));
}

}  // namespace

Matrix2D read(std::istream& in) {
    std::array<char, 6> magic{};
    in.read(magic.data(), magic.size());
    if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kMagic)
        throw DataError("not an npy file (bad magic)");
    unsigned char version[2] = {0, 0};
    in.read(reinterpret_cast<char*>(version), 2);
    if (in.gcount() != 2) throw DataError("npy file truncated in version");

    std::uint32_t header_len = 0;
    if (version[0] == 1) {
        unsigned char b[2];
        in.read(reinterpret_cast<char*>(b), 2);
        if (in.gcount() != 2) throw DataError("npy file truncated in header length");
        header_len = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8);
    } else if (version[0] == 2) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (in.gcount() != 4) throw DataError("npy file truncated in header length");
        header_len = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                     (static_cast<std::uint32_t>(b[2]) << 16) |
                     (static_cast<std::uint32_t>(b[3]) << 24);
    } else {
        throw DataError("unsupported npy format version " + std::to_string(version[0]));
    }

    std::string header(header_len, '\0');
    in.read(header.data(), header_len);
    if (static_cast<std::uint32_t>(in.gcount()) != header_len)
        throw DataError("npy file truncated in header");

    std::string descr;
    bool fortran_order = false;
    std::vector<std::uint64_t> shape;
    HeaderParser(header).parse(descr, fortran_order, shape);

    if (fortran_order) throw DataError("npy array must be C-ordered (fortran_order=False)");
    if (shape.size() != 2)
        throw DataError("npy array must be 2-D, got " + std::to_string(shape.size()) + "-D");
    if (shape[0] > std::numeric_limits<std::uint32_t>::max() ||
        shape[1] > std::numeric_limits<std::uint32_t>::max())
        throw DataError("npy shape too large");

    Matrix2D result;
    result.values = DenseMatrix(shape[0], shape[1]);
    if (descr == "<f8") {
        result.source_dtype = Dtype::f64;
        read_payload<double>(in, result.values);
    } else if (descr == "<f4") {
        result.source_dtype = Dtype::f32;
        read_payload<float>(in, result.values);
    } else {
        throw DataError("unsupported npy dtype '" + descr + "' (expected <f4 or <f8)");
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw DataError("npy file has trailing bytes after payload");
    return result;
}

Matrix2D read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open matrix file: " + path.string());
    return read(in);
}

void write(std::ostream& out, const DenseMatrix& values, Dtype dtype) {
    std::ostringstream dict;
    dict << "{'descr': '" << (dtype == Dtype::f64 ? "<f8" : "<f4")
         << "', 'fortran_order': False, 'shape': (" << values.rows() << ", " << values.cols()
         << "), }";
    std::string header = dict.str();
    // magic(6) + version(2) + length(2) + header + '\n' must be a multiple of 64.
    const std::size_t unpadded = 10 + header.size() + 1;
    header.append((64 - unpadded % 64) % 64, ' ');
    header.push_back('\n');

    out.write(kMagic.data(), kMagic.size());
    const char version[2] = {1, 0};
    out.write(version, 2);
    const auto len = static_cast<std::uint16_t>(header.size());
    const char len_bytes[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
    out.write(len_bytes, 2);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    if (dtype == Dtype::f64) {
        for (double v : values.flat()) {
            const double le = byteswap_if_big(v);
            out.write(reinterpret_cast<const char*>(&le), sizeof le);
        }
    } else {
        for (double v : values.flat()) {
            const float le = byteswap_if_big(static_cast<float>(v));
            out.write(reinterpret_cast<const char*>(&le), sizeof le);
        }
    }
}

void write(const std::filesystem::path& path, const DenseMatrix& values, Dtype dtype) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    write(out, values, dtype);
    out.flush();
    if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace modforge::npy
