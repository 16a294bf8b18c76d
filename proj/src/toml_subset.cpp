#include "stylegate/toml_subset.hpp"

#include <cctype>
#include <charconv>
#include <string>
#include <vector>

#include "stylegate/error.hpp"

namespace stylegate {

namespace {

class TomlReader {
 public:
  explicit TomlReader(std::string_view text) : src_(text) {}

  nlohmann::json run() {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;
    while (pos_ < src_.size()) {
      skip_ws();
      if (at_end_of_line()) {
        next_line();
        continue;
      }
      if (peek() == '[') {
        ++pos_;
        if (peek() == '[') fail("arrays of tables are not supported");
        const auto path = read_key_path(']');
        expect(']');
        table = &descend(root, path, true);
        if (!table->is_object()) fail("table header names a non-table key");
      } else {
        const auto path = read_key_path('=');
        expect('=');
        skip_ws();
        nlohmann::json value = read_value();
        nlohmann::json* parent = table;
        for (std::size_t i = 0; i + 1 < path.size(); ++i) parent = &descend(*parent, {path[i]}, false);
        if (parent->contains(path.back())) fail("duplicate key '" + path.back() + "'");
        (*parent)[path.back()] = std::move(value);
      }
      skip_ws();
      if (!at_end_of_line()) fail("unexpected trailing characters");
      next_line();
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::invalid_config, "toml line " + std::to_string(line_) + ": " + what);
  }

  char peek() const { return pos_ < src_.size() ? src_[pos_] : '\0'; }
  void skip_ws() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t')) ++pos_;
  }
  bool at_end_of_line() const {
    return pos_ >= src_.size() || src_[pos_] == '\n' || src_[pos_] == '\r' || src_[pos_] == '#';
  }
  void next_line() {
    while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
    if (pos_ < src_.size()) ++pos_;
    ++line_;
  }
  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  static nlohmann::json& descend(nlohmann::json& node, const std::vector<std::string>& path, bool) {
    nlohmann::json* cur = &node;
    for (const auto& key : path) {
      if (!cur->contains(key)) (*cur)[key] = nlohmann::json::object();
      cur = &(*cur)[key];
    }
    return *cur;
  }

  std::vector<std::string> read_key_path(char terminator) {
    std::vector<std::string> path;
    while (true) {
      skip_ws();
      if (peek() == '"') {
        path.push_back(read_basic_string());
      } else if (peek() == '\'') {
        path.push_back(read_literal_string());
      } else {
        const auto start = pos_;
        while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_' ||
                                      src_[pos_] == '-')) {
          ++pos_;
        }
        if (pos_ == start) fail("expected a key");
        path.emplace_back(src_.substr(start, pos_ - start));
      }
      skip_ws();
      if (peek() == '.') {
        ++pos_;
        continue;
      }
      if (peek() != terminator) fail(std::string("expected '") + terminator + "' after key");
      return path;
    }
  }

  std::string read_basic_string() {
    ++pos_;  // "
    if (src_.substr(pos_, 2) == "\"\"") fail("multi-line strings are not supported");
    std::string out;
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n') fail("unterminated string");
      const char c = src_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      const char e = src_[pos_++];
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case 'b': out.push_back('\b'); break;
        case 'f': out.push_back('\f'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'u': {
          if (pos_ + 4 > src_.size()) fail("bad \\u escape");
          unsigned cp = 0;
          const auto r = std::from_chars(src_.data() + pos_, src_.data() + pos_ + 4, cp, 16);
          if (r.ec != std::errc{} || r.ptr != src_.data() + pos_ + 4) fail("bad \\u escape");
          pos_ += 4;
          append_utf8(out, cp);
          break;
        }
        default: fail(std::string("unknown escape \\") + e);
      }
    }
  }

  static void append_utf8(std::string& out, unsigned cp) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }

  std::string read_literal_string() {
    ++pos_;
    const auto end = src_.find('\'', pos_);
    const auto eol = src_.find('\n', pos_);
    if (end == std::string_view::npos || (eol != std::string_view::npos && eol < end)) fail("unterminated string");
    std::string out(src_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }

  nlohmann::json read_value() {
    const char c = peek();
    if (c == '"') return read_basic_string();
    if (c == '\'') return read_literal_string();
    if (c == '[') return read_array();
    if (c == '{') return read_inline_table();
    if (src_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (src_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return read_number();
  }

  nlohmann::json read_array() {
    ++pos_;
    nlohmann::json arr = nlohmann::json::array();
    while (true) {
      skip_ws();
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      if (at_end_of_line()) fail("arrays must fit on one line");
      arr.push_back(read_value());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  nlohmann::json read_inline_table() {
    ++pos_;
    nlohmann::json obj = nlohmann::json::object();
    skip_ws();
    if (peek() == '}') {
      ++pos_;
      return obj;
    }
    while (true) {
      const auto path = read_key_path('=');
      expect('=');
      skip_ws();
      nlohmann::json* parent = &obj;
      for (std::size_t i = 0; i + 1 < path.size(); ++i) parent = &descend(*parent, {path[i]}, false);
      (*parent)[path.back()] = read_value();
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      if (peek() == '}') {
        ++pos_;
        return obj;
      }
      fail("expected ',' or '}' in inline table");
    }
  }

  nlohmann::json read_number() {
    const auto start = pos_;
    while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '+' ||
                                  src_[pos_] == '-' || src_[pos_] == '.' || src_[pos_] == '_')) {
      ++pos_;
    }
    std::string token;
    for (char ch : src_.substr(start, pos_ - start)) {
      if (ch != '_') token.push_back(ch);
    }
    if (token.empty()) fail("expected a value");
    if (token.front() == '+') token.erase(0, 1);
    const bool is_float = token.find_first_of(".eE") != std::string::npos || token == "inf" || token == "nan";
    if (is_float) {
      double d = 0;
      const auto r = std::from_chars(token.data(), token.data() + token.size(), d);
      if (r.ec != std::errc{} || r.ptr != token.data() + token.size()) fail("bad number '" + token + "'");
      return d;
    }
    std::int64_t i = 0;
    const auto r = std::from_chars(token.data(), token.data() + token.size(), i);
    if (r.ec != std::errc{} || r.ptr != token.data() + token.size()) fail("bad value '" + token + "'");
    return i;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace

nlohmann::json parse_toml_subset(std::string_view text) { return TomlReader(text).run(); }

}  // namespace stylegate
