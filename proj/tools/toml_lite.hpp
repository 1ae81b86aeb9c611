#pragma once

// Reader for the small TOML subset used by the bench configs: [table]
// headers, key = value pairs, strings, integers, floats, booleans, flat
// arrays of those, and # comments. Keys are returned fully dotted
// ("bench.runs").

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "qcoh/errors.hpp"

namespace toml_lite {

struct Value;
using Array = std::vector<Value>;

struct Value {
    std::variant<std::string, std::int64_t, double, bool, Array> v;

    bool is_string() const { return std::holds_alternative<std::string>(v); }
    bool is_integer() const { return std::holds_alternative<std::int64_t>(v); }
    bool is_array() const { return std::holds_alternative<Array>(v); }
};

using Document = std::map<std::string, Value>;

namespace detail {

class Parser {
public:
    Parser(std::string text, std::string name) : s_(std::move(text)), name_(std::move(name)) {}

    Document parse() {
        Document doc;
        std::string table;
        while (true) {
            skip_blank_lines();
            if (pos_ >= s_.size()) break;
            if (s_[pos_] == '[') {
                ++pos_;
                table = bare_key();
                skip_ws();
                expect(']');
            } else {
                std::string key = bare_key();
                skip_ws();
                expect('=');
                skip_ws();
                const std::string full = table.empty() ? key : table + "." + key;
                if (doc.count(full)) fail("duplicate key '" + full + "'");
                doc[full] = value();
            }
            end_of_line();
        }
        return doc;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw qcoh::ConfigError(name_ + ":" + std::to_string(line()) + ": " + msg);
    }

    std::size_t line() const {
        std::size_t l = 1;
        for (std::size_t i = 0; i < pos_ && i < s_.size(); ++i) l += s_[i] == '\n';
        return l;
    }

    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }

    void skip_comment() {
        if (pos_ < s_.size() && s_[pos_] == '#')
            while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
    }

    void skip_blank_lines() {
        while (pos_ < s_.size()) {
            skip_ws();
            skip_comment();
            if (pos_ < s_.size() && (s_[pos_] == '\n' || s_[pos_] == '\r')) ++pos_;
            else break;
        }
    }

    // Whitespace, comments and newlines inside arrays.
    void skip_space_in_array() {
        while (pos_ < s_.size()) {
            const char c = s_[pos_];
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r') ++pos_;
            else if (c == '#') skip_comment();
            else break;
        }
    }

    void end_of_line() {
        skip_ws();
        skip_comment();
        if (pos_ < s_.size() && s_[pos_] == '\r') ++pos_;
        if (pos_ < s_.size() && s_[pos_] != '\n') fail("unexpected trailing characters");
    }

    void expect(char c) {
        if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    std::string bare_key() {
        skip_ws();
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '-' || s_[pos_] == '.'))
            ++pos_;
        if (pos_ == start) fail("expected a key");
        return s_.substr(start, pos_ - start);
    }

    Value value() {
        if (pos_ >= s_.size()) fail("missing value");
        const char c = s_[pos_];
        if (c == '"') return Value{string()};
        if (c == '[') {
            ++pos_;
            Array items;
            skip_space_in_array();
            while (pos_ < s_.size() && s_[pos_] != ']') {
                items.push_back(value());
                skip_space_in_array();
                if (pos_ < s_.size() && s_[pos_] == ',') {
                    ++pos_;
                    skip_space_in_array();
                } else if (pos_ < s_.size() && s_[pos_] != ']') fail("expected ',' or ']' in array");
            }
            expect(']');
            return Value{std::move(items)};
        }
        const std::size_t start = pos_;
        while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])) && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#')
            ++pos_;
        std::string tok = s_.substr(start, pos_ - start);
        if (tok == "true") return Value{true};
        if (tok == "false") return Value{false};
        std::string digits;
        for (char ch : tok)
            if (ch != '_') digits += ch;
        const bool is_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" || digits == "nan";
        try {
            std::size_t used = 0;
            if (is_float) {
                const double d = std::stod(digits, &used);
                if (used == digits.size()) return Value{d};
            } else {
                const long long i = std::stoll(digits, &used);
                if (used == digits.size()) return Value{static_cast<std::int64_t>(i)};
            }
        } catch (const std::exception&) {
        }
        fail("cannot parse value '" + tok + "'");
    }

    std::string string() {
        expect('"');
        std::string out;
        while (pos_ < s_.size() && s_[pos_] != '"') {
            if (s_[pos_] == '\n') fail("unterminated string");
            if (s_[pos_] == '\\') {
                ++pos_;
                if (pos_ >= s_.size()) fail("unterminated string");
                switch (s_[pos_]) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default: fail("unsupported escape");
                }
            } else out += s_[pos_];
            ++pos_;
        }
        expect('"');
        return out;
    }

    std::string s_;
    std::string name_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline Document parse(const std::string& text, const std::string& name = "<toml>") {
    return detail::Parser(text, name).parse();
}

inline Document parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw qcoh::InputError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

} // namespace toml_lite
