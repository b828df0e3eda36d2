// SPDX-License-Identifier: Apache-2.0
#include "usrn/text_config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "usrn/errors.hpp"

namespace usrn {

bool TextValue::as_bool() const {
  if (!is_bool()) throw ConfigError("expected a boolean, got " + format_text_value(*this));
  return std::get<bool>(storage_);
}

std::int64_t TextValue::as_integer() const {
  if (is_integer()) return std::get<std::int64_t>(storage_);
  if (std::holds_alternative<double>(storage_)) {
    const double d = std::get<double>(storage_);
    if (d == static_cast<double>(static_cast<std::int64_t>(d))) return static_cast<std::int64_t>(d);
  }
  throw ConfigError("expected an integer, got " + format_text_value(*this));
}

double TextValue::as_number() const {
  if (is_integer()) return static_cast<double>(std::get<std::int64_t>(storage_));
  if (std::holds_alternative<double>(storage_)) return std::get<double>(storage_);
  throw ConfigError("expected a number, got " + format_text_value(*this));
}

const std::string& TextValue::as_string() const {
  if (!is_string()) throw ConfigError("expected a string, got " + format_text_value(*this));
  return std::get<std::string>(storage_);
}

const TextValue::Array& TextValue::as_array() const {
  if (!is_array()) throw ConfigError("expected an array, got " + format_text_value(*this));
  return std::get<Array>(storage_);
}

std::vector<double> TextValue::as_number_list() const {
  std::vector<double> out;
  if (!is_array()) {
    out.push_back(as_number());
    return out;
  }
  for (const auto& v : as_array()) out.push_back(v.as_number());
  return out;
}

std::vector<std::int64_t> TextValue::as_integer_list() const {
  std::vector<std::int64_t> out;
  if (!is_array()) {
    out.push_back(as_integer());
    return out;
  }
  for (const auto& v : as_array()) out.push_back(v.as_integer());
  return out;
}

namespace {

class Cursor {
 public:
  explicit Cursor(const std::string& s) : s_(s) {}

  void skip_space() {
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }
  bool done() const { return pos_ >= s_.size(); }
  char peek() const { return done() ? '\0' : s_[pos_]; }
  char get() { return s_[pos_++]; }
  std::size_t pos() const { return pos_; }

  TextValue value() {
    skip_space();
    if (done()) fail("missing value");
    const char c = peek();
    if (c == '[') return array();
    if (c == '"') return TextValue(string());
    if (s_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      return TextValue(true);
    }
    if (s_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      return TextValue(false);
    }
    return number();
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("parse error at offset " + std::to_string(pos_) + ": " + what);
  }

 private:
  TextValue array() {
    get();  // '['
    TextValue::Array items;
    skip_space();
    if (peek() == ']') {
      get();
      return TextValue(std::move(items));
    }
    while (true) {
      items.push_back(value());
      skip_space();
      const char c = done() ? '\0' : get();
      if (c == ']') break;
      if (c != ',') fail("expected ',' or ']' in array");
      skip_space();
      if (peek() == ']') {  // trailing comma
        get();
        break;
      }
    }
    return TextValue(std::move(items));
  }

  std::string string() {
    get();  // opening quote
    std::string out;
    while (!done() && peek() != '"') {
      char c = get();
      if (c == '\\' && !done()) {
        const char e = get();
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          default: c = e; break;
        }
      }
      out.push_back(c);
    }
    if (done()) fail("unterminated string");
    get();
    return out;
  }

  TextValue number() {
    const std::size_t start = pos_;
    while (!done()) {
      const char c = peek();
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.' ||
          c == 'e' || c == 'E' || c == '_') {
        ++pos_;
      } else {
        break;
      }
    }
    std::string token;
    for (std::size_t i = start; i < pos_; ++i)
      if (s_[i] != '_') token.push_back(s_[i]);
    if (token.empty()) fail("unexpected character '" + std::string(1, peek()) + "'");
    if (token.front() == '+') token.erase(0, 1);
    const bool is_float = token.find_first_of(".eE") != std::string::npos;
    if (!is_float) {
      std::int64_t v = 0;
      const auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec == std::errc() && p == token.data() + token.size()) return TextValue(v);
    }
    double d = 0.0;
    const auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), d);
    if (ec != std::errc() || p != token.data() + token.size()) fail("bad number '" + token + "'");
    return TextValue(d);
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (const char c : key)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
      return false;
  return true;
}

}  // namespace

TextValue parse_text_value(const std::string& literal) {
  Cursor cursor(literal);
  TextValue v = cursor.value();
  cursor.skip_space();
  if (!cursor.done()) cursor.fail("trailing characters after value");
  return v;
}

TextTable parse_text_config(const std::string& text) {
  TextTable table;
  std::string section;
  std::istringstream in(text);
  std::string line;
  std::string pending;  // multi-line arrays are joined until brackets balance
  int line_no = 0;
  int pending_start = 0;

  auto bracket_depth = [](const std::string& s) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const char c = s[i];
      if (c == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
      if (in_string) continue;
      if (c == '#') break;
      if (c == '[') ++depth;
      if (c == ']') --depth;
    }
    return depth;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!pending.empty()) {
      pending += "\n" + line;
      if (bracket_depth(pending) > 0) continue;
      line = pending;
      pending.clear();
    } else {
      pending_start = line_no;
    }
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const int where = pending_start;
    try {
      if (stripped.front() == '[' && stripped.find('=') == std::string::npos) {
        const auto close = stripped.find(']');
        if (close == std::string::npos) throw FormatError("unterminated section header");
        section = trim(stripped.substr(1, close - 1));
        if (!valid_key(section)) throw FormatError("bad section name '" + section + "'");
        continue;
      }
      const auto eq = stripped.find('=');
      if (eq == std::string::npos) throw FormatError("expected 'key = value'");
      const std::string key = trim(stripped.substr(0, eq));
      if (!valid_key(key)) throw FormatError("bad key '" + key + "'");
      const std::string rest = stripped.substr(eq + 1);
      if (bracket_depth(rest) > 0) {
        pending = stripped;
        continue;
      }
      const std::string full = section.empty() ? key : section + "." + key;
      if (table.count(full)) throw FormatError("duplicate key '" + full + "'");
      table[full] = parse_text_value(rest);
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(where) + ": " + e.what());
    }
  }
  if (!pending.empty())
    throw FormatError("line " + std::to_string(pending_start) + ": unterminated array");
  return table;
}

TextTable read_text_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_text_config(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string format_text_value(const TextValue& value) {
  std::ostringstream out;
  std::visit(
      [&out](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, bool>) {
          out << (v ? "true" : "false");
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          out << v;
        } else if constexpr (std::is_same_v<T, double>) {
          out << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
          const std::string s = out.str();
          if (s.find_first_of(".eEn") == std::string::npos) out << ".0";
        } else if constexpr (std::is_same_v<T, std::string>) {
          out << '"';
          for (const char c : v) {
            if (c == '"' || c == '\\') out << '\\';
            out << c;
          }
          out << '"';
        } else {
          out << '[';
          for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) out << ", ";
            out << format_text_value(v[i]);
          }
          out << ']';
        }
      },
      value.storage());
  return out.str();
}

}  // namespace usrn
