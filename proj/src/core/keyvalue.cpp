#include "smsrecon/util/keyvalue.hpp"

#include "smsrecon/core/types.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace smsrecon {

namespace {

std::string trim(std::string const &s)
{
  auto const b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto const e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T> T parse_number(std::string const &key, std::string const &v)
{
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("config: '" + key + "' is not a valid number: " + v);
  return out;
}

} // namespace

std::string format_double(double v)
{
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

KeyValue KeyValue::parse(std::string const &text)
{
  KeyValue kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto const hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto const eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string const key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (kv.has(key)) throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv.set(key, trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValue KeyValue::load(std::filesystem::path const &path)
{
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string KeyValue::dump() const
{
  std::string out;
  for (auto const &k : order_) out += k + " = " + values_.at(k) + "\n";
  return out;
}

void KeyValue::save(std::filesystem::path const &path) const
{
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << dump();
}

void KeyValue::set(std::string const &key, std::string const &value)
{
  if (!values_.count(key)) order_.push_back(key);
  values_[key] = value;
}

void KeyValue::set(std::string const &key, double value) { set(key, format_double(value)); }
void KeyValue::set(std::string const &key, std::int64_t value) { set(key, std::to_string(value)); }
void KeyValue::set(std::string const &key, std::uint64_t value) { set(key, std::to_string(value)); }
void KeyValue::set(std::string const &key, bool value) { set(key, std::string(value ? "true" : "false")); }

std::string const *KeyValue::find(std::string const &key) const
{
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

std::string KeyValue::get_string(std::string const &key, std::string const &fallback) const
{
  auto const *v = find(key);
  return v ? *v : fallback;
}

double KeyValue::get_double(std::string const &key, double fallback) const
{
  auto const *v = find(key);
  return v ? parse_number<double>(key, *v) : fallback;
}

std::int64_t KeyValue::get_int(std::string const &key, std::int64_t fallback) const
{
  auto const *v = find(key);
  return v ? parse_number<std::int64_t>(key, *v) : fallback;
}

std::uint64_t KeyValue::get_uint(std::string const &key, std::uint64_t fallback) const
{
  auto const *v = find(key);
  return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

bool KeyValue::get_bool(std::string const &key, bool fallback) const
{
  auto const *v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError("config: '" + key + "' is not a boolean: " + *v);
}

std::vector<std::string> KeyValue::unused() const
{
  std::vector<std::string> out;
  for (auto const &k : order_)
    if (!used_.count(k)) out.push_back(k);
  return out;
}

} // namespace smsrecon
