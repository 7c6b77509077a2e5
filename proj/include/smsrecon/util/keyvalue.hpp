#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace smsrecon {

/// Plain-text `key = value` files. '#' starts a comment; blank lines are
/// ignored; keys are unique. Numbers are written with enough digits to
/// round-trip exactly.
class KeyValue {
public:
  static KeyValue parse(std::string const &text);
  static KeyValue load(std::filesystem::path const &path);
  std::string dump() const;
  void save(std::filesystem::path const &path) const;

  bool has(std::string const &key) const { return values_.count(key) > 0; }
  void set(std::string const &key, std::string const &value);
  void set(std::string const &key, double value);
  void set(std::string const &key, std::int64_t value);
  void set(std::string const &key, std::uint64_t value);
  void set(std::string const &key, int value) { set(key, std::int64_t(value)); }
  void set(std::string const &key, bool value);

  std::string get_string(std::string const &key, std::string const &fallback) const;
  double get_double(std::string const &key, double fallback) const;
  std::int64_t get_int(std::string const &key, std::int64_t fallback) const;
  std::uint64_t get_uint(std::string const &key, std::uint64_t fallback) const;
  bool get_bool(std::string const &key, bool fallback) const;

  /// Keys that no getter has asked for. Typos show up here.
  std::vector<std::string> unused() const;
  std::vector<std::string> keys() const { return order_; }

private:
  std::string const *find(std::string const &key) const;
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
  mutable std::set<std::string> used_;
};

std::string format_double(double v);

} // namespace smsrecon
