#include "recat/binary_io.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>

#include "recat/error.hpp"

namespace recat::bin {

namespace {

template <std::size_t N>
void put_le(std::ostream& os, std::uint64_t v) {
    std::array<char, N> b{};
    for (std::size_t i = 0; i < N; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b.data(), N);
}

template <std::size_t N>
std::uint64_t get_le(std::istream& is, const char* what) {
    std::array<unsigned char, N> b{};
    is.read(reinterpret_cast<char*>(b.data()), N);
    if (is.gcount() != static_cast<std::streamsize>(N))
        throw FormatError(std::string("truncated input reading ") + what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < N; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void put_u32(std::ostream& os, std::uint32_t v) { put_le<4>(os, v); }
void put_u64(std::ostream& os, std::uint64_t v) { put_le<8>(os, v); }
void put_f64(std::ostream& os, double v) { put_le<8>(os, std::bit_cast<std::uint64_t>(v)); }
void put_bytes(std::ostream& os, std::string_view bytes) {
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t get_u32(std::istream& is, const char* what) {
    return static_cast<std::uint32_t>(get_le<4>(is, what));
}
std::uint64_t get_u64(std::istream& is, const char* what) { return get_le<8>(is, what); }
double get_f64(std::istream& is, const char* what) {
    return std::bit_cast<double>(get_le<8>(is, what));
}

std::string get_bytes(std::istream& is, std::size_t n, const char* what) {
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (is.gcount() != static_cast<std::streamsize>(n))
        throw FormatError(std::string("truncated input reading ") + what);
    return s;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path + " for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace recat::bin
