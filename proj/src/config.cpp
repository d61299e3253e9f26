#include "actevo/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <utility>
#include <vector>

#include "json.hpp"

namespace actevo {

using json = nlohmann::ordered_json;

ConfigError::ConfigError(std::string field_path, const std::string& message)
    : std::runtime_error("config error at \"" + field_path + "\": " + message),
      field(std::move(field_path)) {}

namespace {

[[noreturn]] void fail(int line, const std::string& msg) {
    throw ConfigError("line " + std::to_string(line), msg);
}

std::string trim(const std::string& s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

// Drops a trailing comment; '#' inside a basic string does not count.
std::string strip_comment(const std::string& raw, int line) {
    std::string out;
    bool in_string = false;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const char c = raw[i];
        if (in_string) {
            out += c;
            if (c == '\\') {
                if (i + 1 >= raw.size()) fail(line, "dangling escape at end of line");
                out += raw[++i];
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
            out += c;
            continue;
        }
        if (c == '#') break;
        out += c;
    }
    if (in_string) fail(line, "unterminated string");
    return trim(out);
}

// Net '[' minus ']' outside strings; >0 means an array continues on the next
// physical line.
int bracket_balance(const std::string& s, int line) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') ++i;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '[') ++depth;
        else if (c == ']') --depth;
        if (depth < 0) fail(line, "unmatched ']'");
    }
    return depth;
}

struct ValueParser {
    std::string_view s;
    int line;
    std::size_t i = 0;

    void skip_ws() {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n')) ++i;
    }

    json parse() {
        skip_ws();
        if (i >= s.size()) fail(line, "missing value");
        if (s[i] == '"') return parse_string();
        if (s[i] == '[') return parse_array();
        return parse_scalar();
    }

    json parse_string() {
        ++i;  // opening quote
        std::string out;
        while (i < s.size() && s[i] != '"') {
            char c = s[i++];
            if (c != '\\') {
                out += c;
                continue;
            }
            if (i >= s.size()) fail(line, "dangling escape");
            const char esc = s[i++];
            switch (esc) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default: fail(line, std::string("unsupported escape \\") + esc);
            }
        }
        if (i >= s.size()) fail(line, "unterminated string");
        ++i;  // closing quote
        return json(out);
    }

    json parse_array() {
        ++i;  // '['
        json arr = json::array();
        skip_ws();
        if (i < s.size() && s[i] == ']') {
            ++i;
            return arr;
        }
        for (;;) {
            arr.push_back(parse());
            skip_ws();
            if (i < s.size() && s[i] == ',') {
                ++i;
                skip_ws();
                if (i < s.size() && s[i] == ']') {  // trailing comma
                    ++i;
                    return arr;
                }
                continue;
            }
            if (i < s.size() && s[i] == ']') {
                ++i;
                return arr;
            }
            fail(line, "expected ',' or ']' in array");
        }
    }

    json parse_scalar() {
        const std::size_t start = i;
        while (i < s.size() && s[i] != ',' && s[i] != ']' && s[i] != ' ' &&
               s[i] != '\t' && s[i] != '\n')
            ++i;
        const std::string tok{s.substr(start, i - start)};
        if (tok == "true") return json(true);
        if (tok == "false") return json(false);
        std::string digits;
        bool is_float = false;
        for (const char c : tok) {
            if (c == '_') continue;  // 1_000 style separators
            digits += c;
            if (c == '.' || c == 'e' || c == 'E') is_float = true;
        }
        try {
            std::size_t used = 0;
            if (is_float) {
                const double v = std::stod(digits, &used);
                if (used != digits.size()) throw std::invalid_argument(digits);
                return json(v);
            }
            const long long v = std::stoll(digits, &used);
            if (used != digits.size()) throw std::invalid_argument(digits);
            return json(v);
        } catch (const ConfigError&) {
            throw;
        } catch (...) {
            fail(line, "cannot parse value \"" + tok + "\"");
        }
    }

    void expect_end() {
        skip_ws();
        if (i < s.size()) fail(line, "trailing characters after value");
    }
};

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (const char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
            return false;
    return true;
}

std::vector<std::string> split_dotted(const std::string& path, int line) {
    std::vector<std::string> out;
    std::string cur;
    for (const char c : path) {
        if (c == '.') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    for (const auto& seg : out)
        if (!valid_key(seg)) fail(line, "invalid key \"" + path + "\"");
    return out;
}

json* descend(json* node, const std::vector<std::string>& path, std::size_t upto,
              int line) {
    for (std::size_t i = 0; i < upto; ++i) {
        json& child = (*node)[path[i]];
        if (child.is_null()) child = json::object();
        if (!child.is_object()) fail(line, "\"" + path[i] + "\" is not a table");
        node = &child;
    }
    return node;
}

}  // namespace

std::string toml_to_json(std::string_view text) {
    json root = json::object();
    json* table = &root;

    std::istringstream in{std::string(text)};
    std::string raw;
    std::string pending;
    int line = 0;
    int pending_line = 0;

    auto handle = [&](const std::string& s, int ln) {
        if (s.front() == '[') {
            if (s.size() >= 2 && s[1] == '[') fail(ln, "arrays of tables are not supported");
            if (s.back() != ']') fail(ln, "malformed table header");
            const auto path = split_dotted(trim(s.substr(1, s.size() - 2)), ln);
            table = descend(&root, path, path.size(), ln);
            return;
        }
        // key = value, with the '=' found outside strings
        std::size_t eq = std::string::npos;
        bool in_string = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const char c = s[i];
            if (in_string) {
                if (c == '\\') ++i;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '=') {
                eq = i;
                break;
            }
        }
        if (eq == std::string::npos) fail(ln, "expected key = value");
        const auto path = split_dotted(trim(s.substr(0, eq)), ln);
        json* parent = descend(table, path, path.size() - 1, ln);
        const std::string& leaf = path.back();
        if (parent->contains(leaf)) fail(ln, "duplicate key \"" + leaf + "\"");
        ValueParser vp{std::string_view(s).substr(eq + 1), ln};
        (*parent)[leaf] = vp.parse();
        vp.expect_end();
    };

    while (std::getline(in, raw)) {
        ++line;
        const std::string stripped = strip_comment(raw, line);
        if (pending.empty()) {
            if (stripped.empty()) continue;
            pending = stripped;
            pending_line = line;
        } else if (!stripped.empty()) {
            pending += '\n';
            pending += stripped;
        }
        if (bracket_balance(pending, pending_line) > 0) continue;  // array continues
        handle(pending, pending_line);
        pending.clear();
    }
    if (!pending.empty()) fail(pending_line, "unterminated array");
    return root.dump();
}

std::string load_config_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open config file");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    const auto dot = path.find_last_of('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    if (ext == "toml" || ext == "tml") return toml_to_json(text);
    try {
        return json::parse(text).dump();
    } catch (const json::parse_error& e) {
        throw ConfigError(path, std::string("invalid JSON: ") + e.what());
    }
}

}  // namespace actevo
