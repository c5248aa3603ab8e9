#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

// Little-endian primitives shared by the grid, dataset and checkpoint formats.
namespace recat::bin {

void put_u32(std::ostream& os, std::uint32_t v);
void put_u64(std::ostream& os, std::uint64_t v);
void put_f64(std::ostream& os, double v);
void put_bytes(std::ostream& os, std::string_view bytes);

// Readers throw FormatError on a short read; `what` names the field.
std::uint32_t get_u32(std::istream& is, const char* what);
std::uint64_t get_u64(std::istream& is, const char* what);
double get_f64(std::istream& is, const char* what);
std::string get_bytes(std::istream& is, std::size_t n, const char* what);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace recat::bin
