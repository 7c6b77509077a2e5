#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace smsrecon::io {

/// Raw little-endian element types of the on-disk formats.
enum class DType { c64, f32, f64, u8 };

std::string to_string(DType t);
DType dtype_from_string(std::string const &s);
std::size_t dtype_size(DType t);

// Writers convert from the in-memory element type to the on-disk one.
void write_f64(std::filesystem::path const &p, double const *data, std::size_t n);
void write_f32(std::filesystem::path const &p, double const *data, std::size_t n);
void write_c64(std::filesystem::path const &p, std::complex<double> const *data, std::size_t n);
void write_u8(std::filesystem::path const &p, std::uint8_t const *data, std::size_t n);

std::vector<double> read_f64(std::filesystem::path const &p, std::size_t n);
std::vector<double> read_f32(std::filesystem::path const &p, std::size_t n);
std::vector<std::complex<double>> read_c64(std::filesystem::path const &p, std::size_t n);
std::vector<std::uint8_t> read_u8(std::filesystem::path const &p, std::size_t n);

} // namespace smsrecon::io
