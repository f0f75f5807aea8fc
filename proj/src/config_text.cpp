#include "edgeray/config_text.hpp"

#include <cctype>
#include <cstdlib>

#include "edgeray/error.hpp"

namespace edgeray {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

struct Cursor {
    int line;
    int column;
    void advance(char c) {
        if (c == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
};

}  // namespace

std::string trim(std::string_view s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && is_space(s[a])) ++a;
    while (b > a && is_space(s[b - 1])) --b;
    return std::string(s.substr(a, b - a));
}

std::vector<ConfigEntry> parse_entries(std::string_view text) {
    std::vector<ConfigEntry> entries;
    std::size_t i = 0;
    Cursor cur{1, 1};
    while (i < text.size()) {
        // Skip separators and whitespace.
        while (i < text.size() && (is_space(text[i]) || text[i] == ';')) cur.advance(text[i++]);
        if (i >= text.size()) break;
        if (text[i] == '#') {
            while (i < text.size() && text[i] != '\n') cur.advance(text[i++]);
            continue;
        }
        const Cursor start = cur;
        std::string statement;
        std::vector<Cursor> positions;
        int depth = 0;
        bool quoted = false;
        while (i < text.size()) {
            const char c = text[i];
            if (!quoted) {
                if (c == '#') break;
                if (depth == 0 && (c == '\n' || c == ';')) break;
                if (c == '[' || c == '(') ++depth;
                if (c == ']' || c == ')') {
                    if (--depth < 0) throw ParseError("syntax error: unbalanced bracket", cur.line, cur.column);
                }
            }
            if (c == '"') quoted = !quoted;
            statement += c;
            positions.push_back(cur);
            cur.advance(c);
            ++i;
        }
        if (quoted) throw ParseError("syntax error: unterminated string", start.line, start.column);
        if (depth != 0) throw ParseError("syntax error: unbalanced bracket", start.line, start.column);
        const std::size_t eq = statement.find('=');
        if (eq == std::string::npos)
            throw ParseError("syntax error: expected 'key = value'", start.line, start.column);
        ConfigEntry entry;
        entry.key = trim(std::string_view(statement).substr(0, eq));
        entry.line = start.line;
        entry.column = start.column;
        if (entry.key.empty()) throw ParseError("syntax error: missing key", start.line, start.column);
        for (char c : entry.key) {
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_'))
                throw ParseError("syntax error: invalid key '" + entry.key + "'", start.line, start.column);
        }
        std::size_t v = eq + 1;
        while (v < statement.size() && is_space(statement[v])) ++v;
        if (v >= statement.size())
            throw ParseError("syntax error: missing value for '" + entry.key + "'", start.line, start.column);
        entry.value = trim(std::string_view(statement).substr(v));
        entry.value_line = positions[v].line;
        entry.value_column = positions[v].column;
        entries.push_back(std::move(entry));
    }
    return entries;
}

std::vector<ListCell> split_list(std::string_view text, int line, int column) {
    Cursor cur{line, column};
    std::size_t i = 0;
    while (i < text.size() && is_space(text[i])) cur.advance(text[i++]);
    if (i >= text.size() || text[i] != '[') throw ParseError("syntax error: expected '['", cur.line, cur.column);
    cur.advance(text[i++]);
    std::vector<ListCell> cells;
    ListCell current;
    bool started = false;
    bool quoted = false;
    bool was_quoted = false;
    int depth = 0;
    auto finish = [&](const Cursor& at) {
        std::string t = was_quoted ? current.text : trim(current.text);
        if (t.empty() && !was_quoted) throw ParseError("syntax error: empty list element", at.line, at.column);
        current.text = std::move(t);
        cells.push_back(current);
        current = ListCell{};
        started = false;
        was_quoted = false;
    };
    bool closed = false;
    for (; i < text.size(); ++i) {
        const char c = text[i];
        if (!quoted) {
            if (depth == 0 && c == ']') {
                if (started || !cells.empty()) finish(cur);
                cur.advance(c);
                ++i;
                closed = true;
                break;
            }
            if (depth == 0 && c == ',') {
                finish(cur);
                cur.advance(c);
                continue;
            }
            if (c == '[' || c == '(') ++depth;
            if (c == ']' || c == ')') --depth;
        }
        if (c == '"') {
            if (!quoted && !started) {
                started = true;
                current.line = cur.line;
                current.column = cur.column + 1;
            }
            quoted = !quoted;
            was_quoted = true;
            cur.advance(c);
            continue;
        }
        if (!started && !is_space(c)) {
            started = true;
            current.line = cur.line;
            current.column = cur.column;
        }
        if (started) current.text += c;
        cur.advance(c);
    }
    if (!closed) throw ParseError("syntax error: expected ']'", cur.line, cur.column);
    while (i < text.size() && is_space(text[i])) cur.advance(text[i++]);
    if (i < text.size()) throw ParseError("syntax error: trailing characters after ']'", cur.line, cur.column);
    return cells;
}

std::vector<ListCell> split_list(const ConfigEntry& entry) {
    return split_list(entry.value, entry.value_line, entry.value_column);
}

std::vector<std::vector<ListCell>> split_matrix(const ConfigEntry& entry) {
    std::vector<std::vector<ListCell>> rows;
    for (const ListCell& row : split_list(entry)) rows.push_back(split_list(row.text, row.line, row.column));
    return rows;
}

CallValue split_call(const ConfigEntry& entry) {
    CallValue call;
    const std::string& v = entry.value;
    const std::size_t paren = v.find('(');
    if (paren == std::string::npos) {
        call.name = trim(v);
        return call;
    }
    call.name = trim(std::string_view(v).substr(0, paren));
    if (v.back() != ')')
        throw ParseError("syntax error: expected ')' in '" + v + "'", entry.value_line, entry.value_column);
    call.has_parens = true;
    std::string inner = "[" + v.substr(paren + 1, v.size() - paren - 2) + "]";
    if (trim(inner.substr(1, inner.size() - 2)).empty()) return call;
    call.args = split_list(inner, entry.value_line, entry.value_column + static_cast<int>(paren));
    return call;
}

double parse_double(const ListCell& cell) {
    const std::string t = trim(cell.text);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size())
        throw ParseError("syntax error: expected a number, got '" + t + "'", cell.line, cell.column);
    return v;
}

double parse_double(const ConfigEntry& entry) {
    return parse_double(ListCell{entry.value, entry.value_line, entry.value_column});
}

long parse_int(const ConfigEntry& entry) {
    const std::string t = trim(entry.value);
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (t.empty() || end != t.c_str() + t.size())
        throw ParseError("syntax error: expected an integer for '" + entry.key + "'", entry.value_line,
                         entry.value_column);
    return v;
}

}  // namespace edgeray
