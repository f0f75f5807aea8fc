#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace edgeray {

// One `key = value` assignment of the structured-text format. Assignments are
// separated by newlines or ';' outside brackets and quotes; '#' starts a
// comment.
struct ConfigEntry {
    std::string key;
    std::string value;
    int line = 1;
    int column = 1;  // of the key
    int value_line = 1;
    int value_column = 1;
};

std::vector<ConfigEntry> parse_entries(std::string_view text);

// A cell of a bracketed list, with its source position.
struct ListCell {
    std::string text;
    int line = 1;
    int column = 1;
};

// Splits "[a, b, c]" into cells. Quoted cells have their quotes removed.
std::vector<ListCell> split_list(const ConfigEntry& entry);
std::vector<ListCell> split_list(std::string_view text, int line, int column);

// Splits "[[a, b], [c, d]]" into rows of cells.
std::vector<std::vector<ListCell>> split_matrix(const ConfigEntry& entry);

// "name(arg1, key=arg2)" -> name and raw argument cells.
struct CallValue {
    std::string name;
    std::vector<ListCell> args;
    bool has_parens = false;
};

CallValue split_call(const ConfigEntry& entry);

double parse_double(const ListCell& cell);
double parse_double(const ConfigEntry& entry);
long parse_int(const ConfigEntry& entry);

std::string trim(std::string_view s);

}  // namespace edgeray
