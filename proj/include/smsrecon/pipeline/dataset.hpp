#pragma once

#include "smsrecon/core/types.hpp"
#include "smsrecon/io/raw.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace smsrecon::pipeline {

inline constexpr char kDatasetFormat[] = "smsrecon-ds-v1";

/// One raw array: little-endian, C order (last index fastest).
struct ArrayEntry {
  std::string name;
  io::DType dtype = io::DType::f64;
  std::vector<Index> shape;
  std::string file; // relative to the dataset directory

  std::size_t count() const;
  std::size_t bytes() const { return count() * io::dtype_size(dtype); }
};

struct DatasetManifest {
  std::string format = kDatasetFormat;
  std::string kind;
  std::vector<ArrayEntry> arrays;
  nlohmann::json provenance = nlohmann::json::object();

  bool has(std::string const &name) const;
  ArrayEntry const &find(std::string const &name) const;
};

nlohmann::json to_json(DatasetManifest const &m);
DatasetManifest manifest_from_json(nlohmann::json const &j);

/// Checks the format id, entry names and that every file exists with the
/// cataloged byte length. Throws ConfigError naming the first problem.
DatasetManifest validate_dataset(std::filesystem::path const &dir);

/// Writes arrays into `dir` as they are added and the manifest on finish().
class DatasetWriter {
public:
  DatasetWriter(std::filesystem::path dir, std::string kind);

  void add_c64(std::string const &name, std::vector<Index> shape, Complex const *data);
  void add_f32(std::string const &name, std::vector<Index> shape, double const *data);
  void add_f64(std::string const &name, std::vector<Index> shape, double const *data);
  void add_u8(std::string const &name, std::vector<Index> shape, std::uint8_t const *data);
  void add_mask(std::string const &name, BoolGrid const &m);

  nlohmann::json &provenance() { return manifest_.provenance; }
  std::filesystem::path const &dir() const { return dir_; }
  void finish();

private:
  ArrayEntry &add(std::string const &name, io::DType t, std::vector<Index> shape);

  std::filesystem::path dir_;
  DatasetManifest manifest_;
};

class Dataset {
public:
  /// Validates before returning.
  static Dataset open(std::filesystem::path const &dir);

  DatasetManifest const &manifest() const { return manifest_; }
  nlohmann::json const &provenance() const { return manifest_.provenance; }
  std::filesystem::path const &dir() const { return dir_; }

  /// `expect` (if given) must equal the cataloged shape.
  std::vector<Complex> c64(std::string const &name, std::vector<Index> const &expect = {}) const;
  /// f32 or f64, widened to double.
  std::vector<double> real(std::string const &name, std::vector<Index> const &expect = {}) const;
  std::vector<std::uint8_t> u8(std::string const &name, std::vector<Index> const &expect = {}) const;
  BoolGrid mask(std::string const &name) const;
  ArrayEntry const &entry(std::string const &name, std::vector<Index> const &expect) const;

private:
  std::filesystem::path dir_;
  DatasetManifest manifest_;
};

/// Top-level manifest and config of a command's output directory.
void write_json(std::filesystem::path const &p, nlohmann::json const &j);
nlohmann::json read_json(std::filesystem::path const &p);

} // namespace smsrecon::pipeline
