// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace usrn {

/// A value in the small TOML subset used for metadata, run configs and transfer
/// functions: booleans, integers, floats, double-quoted strings and (nested) arrays.
class TextValue {
 public:
  using Array = std::vector<TextValue>;
  using Storage = std::variant<bool, std::int64_t, double, std::string, Array>;

  TextValue() : storage_(std::int64_t{0}) {}
  explicit TextValue(Storage s) : storage_(std::move(s)) {}

  bool is_bool() const { return std::holds_alternative<bool>(storage_); }
  bool is_integer() const { return std::holds_alternative<std::int64_t>(storage_); }
  bool is_number() const { return is_integer() || std::holds_alternative<double>(storage_); }
  bool is_string() const { return std::holds_alternative<std::string>(storage_); }
  bool is_array() const { return std::holds_alternative<Array>(storage_); }

  bool as_bool() const;
  std::int64_t as_integer() const;
  double as_number() const;
  const std::string& as_string() const;
  const Array& as_array() const;
  std::vector<double> as_number_list() const;
  std::vector<std::int64_t> as_integer_list() const;

  const Storage& storage() const { return storage_; }

 private:
  Storage storage_;
};

/// Flat table keyed by dotted names: `[train]` + `steps = 10` becomes "train.steps".
using TextTable = std::map<std::string, TextValue>;

/// Parses a document. Throws FormatError with the offending line number.
TextTable parse_text_config(const std::string& text);
TextTable read_text_config(const std::filesystem::path& path);

/// Parses a single value literal such as `[1, 2.5, "x"]` or `true`.
TextValue parse_text_value(const std::string& literal);

std::string format_text_value(const TextValue& value);

}  // namespace usrn
