#include "smsrecon/pipeline/dataset.hpp"

#include <fstream>
#include <set>

namespace smsrecon::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t ArrayEntry::count() const
{
  std::size_t n = 1;
  for (Index d : shape) n *= std::size_t(d);
  return n;
}

bool DatasetManifest::has(std::string const &name) const
{
  for (auto const &a : arrays)
    if (a.name == name) return true;
  return false;
}

ArrayEntry const &DatasetManifest::find(std::string const &name) const
{
  for (auto const &a : arrays)
    if (a.name == name) return a;
  throw ConfigError("dataset has no array '" + name + "'");
}

json to_json(DatasetManifest const &m)
{
  json arrays = json::array();
  for (auto const &a : m.arrays) {
    arrays.push_back({{"name", a.name},
                      {"dtype", io::to_string(a.dtype)},
                      {"byte_order", "little"},
                      {"shape", a.shape},
                      {"file", a.file}});
  }
  return {{"format", m.format}, {"kind", m.kind}, {"arrays", arrays}, {"provenance", m.provenance}};
}

DatasetManifest manifest_from_json(json const &j)
{
  DatasetManifest m;
  try {
    m.format = j.at("format").get<std::string>();
    if (m.format != kDatasetFormat) throw ConfigError("unknown dataset format '" + m.format + "'");
    m.kind = j.at("kind").get<std::string>();
    m.provenance = j.value("provenance", json::object());
    std::set<std::string> names;
    for (auto const &e : j.at("arrays")) {
      ArrayEntry a;
      a.name = e.at("name").get<std::string>();
      a.dtype = io::dtype_from_string(e.at("dtype").get<std::string>());
      if (e.value("byte_order", std::string("little")) != "little") throw ConfigError(a.name + ": only little-endian arrays");
      a.shape = e.at("shape").get<std::vector<Index>>();
      a.file = e.at("file").get<std::string>();
      for (Index d : a.shape)
        if (d < 0) throw ConfigError(a.name + ": negative dimension");
      if (a.file.empty() || fs::path(a.file).is_absolute() || a.file.find("..") != std::string::npos) {
        throw ConfigError(a.name + ": file must be a plain relative path");
      }
      if (!names.insert(a.name).second) throw ConfigError("duplicate array '" + a.name + "'");
      m.arrays.push_back(std::move(a));
    }
  } catch (json::exception const &e) {
    throw ConfigError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void write_json(fs::path const &p, json const &j)
{
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << j.dump(2) << '\n';
}

json read_json(fs::path const &p)
{
  std::ifstream f(p);
  if (!f) throw ConfigError("cannot read " + p.string());
  try {
    return json::parse(f);
  } catch (json::exception const &e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

DatasetManifest validate_dataset(fs::path const &dir)
{
  auto m = manifest_from_json(read_json(dir / "manifest.json"));
  for (auto const &a : m.arrays) {
    std::error_code ec;
    auto const size = fs::file_size(dir / a.file, ec);
    if (ec) throw ConfigError(dir.string() + ": missing " + a.file);
    if (size != a.bytes()) {
      throw ConfigError(dir.string() + ": " + a.file + " has " + std::to_string(size) + " bytes, manifest says " +
                        std::to_string(a.bytes()));
    }
  }
  return m;
}

DatasetWriter::DatasetWriter(fs::path dir, std::string kind) : dir_(std::move(dir))
{
  fs::create_directories(dir_);
  manifest_.kind = std::move(kind);
}

ArrayEntry &DatasetWriter::add(std::string const &name, io::DType t, std::vector<Index> shape)
{
  if (manifest_.has(name)) throw ConfigError("duplicate array '" + name + "'");
  manifest_.arrays.push_back(ArrayEntry{name, t, std::move(shape), name + "." + io::to_string(t)});
  return manifest_.arrays.back();
}

void DatasetWriter::add_c64(std::string const &name, std::vector<Index> shape, Complex const *data)
{
  auto const &a = add(name, io::DType::c64, std::move(shape));
  io::write_c64(dir_ / a.file, data, a.count());
}

void DatasetWriter::add_f32(std::string const &name, std::vector<Index> shape, double const *data)
{
  auto const &a = add(name, io::DType::f32, std::move(shape));
  io::write_f32(dir_ / a.file, data, a.count());
}

void DatasetWriter::add_f64(std::string const &name, std::vector<Index> shape, double const *data)
{
  auto const &a = add(name, io::DType::f64, std::move(shape));
  io::write_f64(dir_ / a.file, data, a.count());
}

void DatasetWriter::add_u8(std::string const &name, std::vector<Index> shape, std::uint8_t const *data)
{
  auto const &a = add(name, io::DType::u8, std::move(shape));
  io::write_u8(dir_ / a.file, data, a.count());
}

void DatasetWriter::add_mask(std::string const &name, BoolGrid const &m)
{
  std::vector<std::uint8_t> v(std::size_t(m.size()));
  for (Index i = 0; i < m.size(); ++i) v[std::size_t(i)] = m.data()[i] ? 1 : 0;
  add_u8(name, {m.rows(), m.cols()}, v.data());
}

void DatasetWriter::finish()
{
  write_json(dir_ / "manifest.json", to_json(manifest_));
  validate_dataset(dir_);
}

Dataset Dataset::open(fs::path const &dir)
{
  Dataset d;
  d.dir_ = dir;
  d.manifest_ = validate_dataset(dir);
  return d;
}

ArrayEntry const &Dataset::entry(std::string const &name, std::vector<Index> const &expect) const
{
  auto const &a = manifest_.find(name);
  if (!expect.empty() && a.shape != expect) throw ConfigError(dir_.string() + ": array '" + name + "' has the wrong shape");
  return a;
}

std::vector<Complex> Dataset::c64(std::string const &name, std::vector<Index> const &expect) const
{
  auto const &a = entry(name, expect);
  if (a.dtype != io::DType::c64) throw ConfigError(name + ": expected c64");
  return io::read_c64(dir_ / a.file, a.count());
}

std::vector<double> Dataset::real(std::string const &name, std::vector<Index> const &expect) const
{
  auto const &a = entry(name, expect);
  if (a.dtype == io::DType::f64) return io::read_f64(dir_ / a.file, a.count());
  if (a.dtype == io::DType::f32) return io::read_f32(dir_ / a.file, a.count());
  throw ConfigError(name + ": expected f32 or f64");
}

std::vector<std::uint8_t> Dataset::u8(std::string const &name, std::vector<Index> const &expect) const
{
  auto const &a = entry(name, expect);
  if (a.dtype != io::DType::u8) throw ConfigError(name + ": expected u8");
  return io::read_u8(dir_ / a.file, a.count());
}

BoolGrid Dataset::mask(std::string const &name) const
{
  auto const &a = manifest_.find(name);
  if (a.shape.size() != 2) throw ConfigError(name + ": mask must be 2-D");
  auto v = u8(name);
  BoolGrid m(a.shape[0], a.shape[1]);
  for (Index i = 0; i < m.size(); ++i) {
    if (v[std::size_t(i)] > 1) throw ConfigError(name + ": mask values must be 0 or 1");
    m.data()[i] = v[std::size_t(i)] != 0;
  }
  return m;
}

} // namespace smsrecon::pipeline
