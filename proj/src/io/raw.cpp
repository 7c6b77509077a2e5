#include "smsrecon/io/raw.hpp"

#include "smsrecon/core/types.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace smsrecon::io {

namespace {

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

void write_bytes(std::filesystem::path const &p, void const *data, std::size_t bytes)
{
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + p.string() + " for writing");
  f.write(static_cast<char const *>(data), std::streamsize(bytes));
  if (!f) throw std::runtime_error("short write to " + p.string());
}

void read_bytes(std::filesystem::path const &p, void *data, std::size_t bytes)
{
  std::error_code ec;
  auto const size = std::filesystem::file_size(p, ec);
  if (ec) throw ConfigError("cannot stat " + p.string());
  if (size != bytes) {
    throw ConfigError(p.string() + ": expected " + std::to_string(bytes) + " bytes, found " + std::to_string(size));
  }
  std::ifstream f(p, std::ios::binary);
  f.read(static_cast<char *>(data), std::streamsize(bytes));
  if (!f) throw ConfigError("short read from " + p.string());
}

} // namespace

std::string to_string(DType t)
{
  switch (t) {
  case DType::c64: return "c64";
  case DType::f32: return "f32";
  case DType::f64: return "f64";
  case DType::u8: return "u8";
  }
  return "?";
}

DType dtype_from_string(std::string const &s)
{
  if (s == "c64") return DType::c64;
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  if (s == "u8") return DType::u8;
  throw ConfigError("unknown dtype '" + s + "'");
}

std::size_t dtype_size(DType t)
{
  switch (t) {
  case DType::c64: return 8;
  case DType::f32: return 4;
  case DType::f64: return 8;
  case DType::u8: return 1;
  }
  return 0;
}

void write_f64(std::filesystem::path const &p, double const *data, std::size_t n) { write_bytes(p, data, n * 8); }

void write_f32(std::filesystem::path const &p, double const *data, std::size_t n)
{
  std::vector<float> buf(data, data + n);
  write_bytes(p, buf.data(), n * 4);
}

void write_c64(std::filesystem::path const &p, std::complex<double> const *data, std::size_t n)
{
  std::vector<float> buf(2 * n);
  for (std::size_t i = 0; i < n; ++i) buf[2 * i] = float(data[i].real()), buf[2 * i + 1] = float(data[i].imag());
  write_bytes(p, buf.data(), n * 8);
}

void write_u8(std::filesystem::path const &p, std::uint8_t const *data, std::size_t n) { write_bytes(p, data, n); }

std::vector<double> read_f64(std::filesystem::path const &p, std::size_t n)
{
  std::vector<double> v(n);
  read_bytes(p, v.data(), n * 8);
  return v;
}

std::vector<double> read_f32(std::filesystem::path const &p, std::size_t n)
{
  std::vector<float> buf(n);
  read_bytes(p, buf.data(), n * 4);
  return {buf.begin(), buf.end()};
}

std::vector<std::complex<double>> read_c64(std::filesystem::path const &p, std::size_t n)
{
  std::vector<float> buf(2 * n);
  read_bytes(p, buf.data(), n * 8);
  std::vector<std::complex<double>> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = {buf[2 * i], buf[2 * i + 1]};
  return v;
}

std::vector<std::uint8_t> read_u8(std::filesystem::path const &p, std::size_t n)
{
  std::vector<std::uint8_t> v(n);
  read_bytes(p, v.data(), n);
  return v;
}

} // namespace smsrecon::io
