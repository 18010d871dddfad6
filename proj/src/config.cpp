#include "eventcast/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "eventcast/errors.hpp"

namespace eventcast {

using nlohmann::json;

namespace {

class TomlParser {
public:
    explicit TomlParser(std::string_view text) : s_(text) {}

    json parse() {
        json root = json::object();
        json* table = &root;
        while (true) {
            skip_blank_lines();
            if (eof()) break;
            if (peek() == '[') {
                table = &open_table(root);
            } else {
                key_value(*table);
            }
            end_of_line();
        }
        return root;
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
    int line_ = 1;

    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError("config line " + std::to_string(line_) + ": " + what);
    }

    bool eof() const { return pos_ >= s_.size(); }
    char peek() const { return eof() ? '\0' : s_[pos_]; }
    char get() {
        const char c = s_[pos_++];
        if (c == '\n') ++line_;
        return c;
    }

    void skip_spaces() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) get();
    }

    void skip_comment() {
        if (peek() == '#')
            while (!eof() && peek() != '\n') get();
    }

    void skip_blank_lines() {
        while (!eof()) {
            skip_spaces();
            skip_comment();
            if (peek() == '\n' || peek() == '\r') {
                get();
            } else {
                break;
            }
        }
    }

    // Inside arrays newlines and comments are whitespace.
    void skip_array_space() {
        while (!eof()) {
            skip_spaces();
            skip_comment();
            if (peek() == '\n' || peek() == '\r') {
                get();
            } else {
                break;
            }
        }
    }

    void end_of_line() {
        skip_spaces();
        skip_comment();
        if (peek() == '\r') get();
        if (eof()) return;
        if (peek() != '\n') fail("unexpected text after value");
        get();
    }

    static bool bare_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    }

    std::string key_part() {
        skip_spaces();
        if (peek() == '"') return basic_string();
        std::string k;
        while (!eof() && bare_char(peek())) k += get();
        if (k.empty()) fail("expected a key");
        return k;
    }

    std::vector<std::string> dotted_key() {
        std::vector<std::string> parts{key_part()};
        skip_spaces();
        while (peek() == '.') {
            get();
            parts.push_back(key_part());
            skip_spaces();
        }
        return parts;
    }

    json& descend(json& root, const std::vector<std::string>& path, std::size_t count) {
        json* node = &root;
        for (std::size_t i = 0; i < count; ++i) {
            json& next = (*node)[path[i]];
            if (next.is_null()) next = json::object();
            if (!next.is_object()) fail("'" + path[i] + "' is already a value");
            node = &next;
        }
        return *node;
    }

    json& open_table(json& root) {
        get();
        if (peek() == '[') fail("arrays of tables are not supported");
        const auto path = dotted_key();
        if (peek() != ']') fail("expected ']'");
        get();
        return descend(root, path, path.size());
    }

    void key_value(json& table) {
        const auto path = dotted_key();
        if (peek() != '=') fail("expected '='");
        get();
        skip_spaces();
        json& parent = descend(table, path, path.size() - 1);
        if (parent.contains(path.back())) fail("duplicate key '" + path.back() + "'");
        parent[path.back()] = value();
    }

    json value() {
        const char c = peek();
        if (c == '"') return basic_string();
        if (c == '\'') return literal_string();
        if (c == '[') return array();
        if (c == '{') fail("inline tables are not supported");
        return scalar();
    }

    std::string literal_string() {
        get();
        std::string out;
        while (!eof() && peek() != '\'') {
            if (peek() == '\n') fail("unterminated string");
            out += get();
        }
        if (eof()) fail("unterminated string");
        get();
        return out;
    }

    std::string basic_string() {
        get();
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            const char c = get();
            if (c == '"') break;
            if (c != '\\') {
                out += c;
                continue;
            }
            if (eof()) fail("unterminated escape");
            switch (const char e = get()) {
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                default: fail(std::string("unsupported escape \\") + e);
            }
        }
        return out;
    }

    json array() {
        get();
        json out = json::array();
        while (true) {
            skip_array_space();
            if (peek() == ']') {
                get();
                return out;
            }
            out.push_back(value());
            skip_array_space();
            if (peek() == ',') {
                get();
            } else if (peek() != ']') {
                fail("expected ',' or ']' in array");
            }
        }
    }

    json scalar() {
        std::string tok;
        while (!eof() && !std::isspace(static_cast<unsigned char>(peek())) && peek() != ',' && peek() != ']' &&
               peek() != '#')
            tok += get();
        if (tok.empty()) fail("expected a value");
        if (tok == "true") return true;
        if (tok == "false") return false;
        if (tok == "inf" || tok == "+inf") return std::numeric_limits<double>::infinity();
        if (tok == "-inf") return -std::numeric_limits<double>::infinity();
        if (tok == "nan" || tok == "+nan" || tok == "-nan") return std::numeric_limits<double>::quiet_NaN();

        std::string digits;
        for (char c : tok)
            if (c != '_') digits += c;
        if (!digits.empty() && digits[0] == '+') digits.erase(0, 1);
        const char* b = digits.data();
        const char* e = b + digits.size();
        const bool is_float = digits.find_first_of(".eE") != std::string::npos;
        if (!is_float) {
            long long v = 0;
            const auto [p, ec] = std::from_chars(b, e, v);
            if (ec == std::errc() && p == e) return v;
        } else {
            double v = 0.0;
            const auto [p, ec] = std::from_chars(b, e, v);
            if (ec == std::errc() && p == e) return v;
        }
        fail("cannot parse value '" + tok + "'");
    }
};

}  // namespace

json parse_toml(std::string_view text) { return TomlParser(text).parse(); }

json read_toml(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    try {
        return parse_toml(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace eventcast
