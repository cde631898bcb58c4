#include "seqvimp/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace seqvimp {

namespace {

bool parse_numeric(const std::string& cell, double* out) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end == begin || *end != '\0') return false;
    *out = value;
    return true;
}

std::string trimmed(const std::string& text) {
    std::size_t lo = 0, hi = text.size();
    while (lo < hi && std::isspace(static_cast<unsigned char>(text[lo]))) ++lo;
    while (hi > lo && std::isspace(static_cast<unsigned char>(text[hi - 1])))
        --hi;
    return text.substr(lo, hi - lo);
}

// Splits one CSV line; double quotes delimit fields that contain commas or
// quotes, with "" as the escaped quote.  Unquoted fields are whitespace
// trimmed.
std::vector<std::string> split_csv_line(const std::string& line, int line_no) {
    std::vector<std::string> fields;
    std::string field;
    std::size_t i = 0;
    const std::size_t len = line.size();
    while (true) {
        field.clear();
        if (i < len && line[i] == '"') {
            ++i;
            bool closed = false;
            while (i < len) {
                if (line[i] == '"' && i + 1 < len && line[i + 1] == '"') {
                    field += '"';
                    i += 2;
                } else if (line[i] == '"') {
                    ++i;
                    closed = true;
                    break;
                } else {
                    field += line[i++];
                }
            }
            if (!closed)
                throw DataError("csv line " + std::to_string(line_no) +
                                ": unterminated quoted field");
            fields.push_back(field);
        } else {
            const std::size_t start = i;
            while (i < len && line[i] != ',') ++i;
            fields.push_back(trimmed(line.substr(start, i - start)));
        }
        if (i >= len) break;
        if (line[i] != ',')
            throw DataError("csv line " + std::to_string(line_no) +
                            ": garbage after quoted field");
        ++i;
        if (i == len) {  // trailing comma: one final empty field
            fields.emplace_back();
            break;
        }
    }
    return fields;
}

bool next_line(std::istream& in, std::string* line) {
    if (!std::getline(in, *line)) return false;
    if (!line->empty() && line->back() == '\r') line->pop_back();
    return true;
}

ColumnType forced_or_inferred(
    const std::string& name,
    const std::vector<std::pair<std::string, ColumnType>>& schema,
    const std::vector<std::string>& cells) {
    for (const auto& entry : schema)
        if (entry.first == name) return entry.second;
    for (const std::string& cell : cells) {
        double ignored;
        if (!parse_numeric(cell, &ignored)) return ColumnType::Categorical;
    }
    return ColumnType::Numeric;
}

void append_cell(std::string* out, const std::string& cell) {
    if (cell.find_first_of(",\"\n") == std::string::npos) {
        *out += cell;
        return;
    }
    *out += '"';
    for (char c : cell) {
        if (c == '"') *out += '"';
        *out += c;
    }
    *out += '"';
}

std::string format_numeric(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

}  // namespace

Column numeric_column(std::string name, std::vector<double> values) {
    Column col;
    col.name = std::move(name);
    col.type = ColumnType::Numeric;
    col.numeric = std::move(values);
    return col;
}

Column categorical_column(std::string name, std::vector<int> codes,
                          std::vector<std::string> levels) {
    Column col;
    col.name = std::move(name);
    col.type = ColumnType::Categorical;
    col.codes = std::move(codes);
    col.levels = std::move(levels);
    return col;
}

std::size_t Dataset::n_rows() const {
    return columns.empty() ? 0 : columns.front().size();
}

std::vector<int> Dataset::predictor_indices() const {
    std::vector<int> out;
    out.reserve(columns.size());
    for (int i = 0; i < int(columns.size()); ++i)
        if (i != target) out.push_back(i);
    return out;
}

int Dataset::column_index(const std::string& name) const {
    for (int i = 0; i < int(columns.size()); ++i)
        if (columns[i].name == name) return i;
    return -1;
}

bool Dataset::classification() const {
    return columns.at(target).type == ColumnType::Categorical;
}

void Dataset::validate() const {
    if (columns.empty()) throw DataError("dataset has no columns");
    if (target < 0 || target >= int(columns.size()))
        throw DataError("dataset target index out of range");
    if (columns.size() < 2)
        throw DataError("dataset has no predictor columns");
    const std::size_t n = columns.front().size();
    std::set<std::string> names;
    for (const Column& col : columns) {
        if (col.name.empty()) throw DataError("dataset column with empty name");
        if (!names.insert(col.name).second)
            throw DataError("duplicate column name: " + col.name);
        if (col.size() != n)
            throw DataError("column " + col.name + " has " +
                            std::to_string(col.size()) + " rows, expected " +
                            std::to_string(n));
        if (col.type == ColumnType::Categorical) {
            std::set<std::string> levels(col.levels.begin(), col.levels.end());
            if (levels.size() != col.levels.size())
                throw DataError("column " + col.name + " has duplicate levels");
            for (int code : col.codes)
                if (code < 0 || code >= int(col.levels.size()))
                    throw DataError("column " + col.name +
                                    " has a code outside its level list");
        }
    }
}

void shuffle_column(Dataset& data, int col, std::mt19937_64& rng) {
    Column& column = data.columns.at(col);
    if (column.type == ColumnType::Numeric)
        std::shuffle(column.numeric.begin(), column.numeric.end(), rng);
    else
        std::shuffle(column.codes.begin(), column.codes.end(), rng);
}

bool is_missing_cell(const std::string& cell) {
    if (cell.empty() || cell == "?") return true;
    std::string lower;
    lower.reserve(cell.size());
    for (char c : cell)
        lower += char(std::tolower(static_cast<unsigned char>(c)));
    return lower == "na" || lower == "nan";
}

Dataset read_csv(std::istream& in, const std::string& target_name,
                 const std::vector<std::pair<std::string, ColumnType>>& schema,
                 CsvReadReport* report) {
    std::string line;
    if (!next_line(in, &line)) throw DataError("csv: empty input");
    const std::vector<std::string> header = split_csv_line(line, 1);

    std::vector<std::vector<std::string>> rows;
    int line_no = 1;
    std::size_t rows_read = 0;
    while (next_line(in, &line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line, line_no);
        if (cells.size() != header.size())
            throw DataError("csv line " + std::to_string(line_no) + ": " +
                            std::to_string(cells.size()) + " fields, expected " +
                            std::to_string(header.size()));
        ++rows_read;
        const bool complete =
            std::none_of(cells.begin(), cells.end(), [](const std::string& c) {
                return is_missing_cell(c);
            });
        if (complete) rows.push_back(std::move(cells));
    }
    if (report) {
        report->rows_read = rows_read;
        report->rows_dropped = rows_read - rows.size();
    }
    if (rows.empty()) throw DataError("csv: no complete rows");

    for (const auto& entry : schema) {
        if (std::find(header.begin(), header.end(), entry.first) == header.end())
            throw ConfigError("schema names unknown column: " + entry.first);
    }

    Dataset data;
    for (std::size_t c = 0; c < header.size(); ++c) {
        std::vector<std::string> cells;
        cells.reserve(rows.size());
        for (const auto& row : rows) cells.push_back(row[c]);
        const ColumnType type = forced_or_inferred(header[c], schema, cells);
        if (type == ColumnType::Numeric) {
            std::vector<double> values;
            values.reserve(cells.size());
            for (std::size_t r = 0; r < cells.size(); ++r) {
                double value;
                if (!parse_numeric(cells[r], &value))
                    throw DataError("column " + header[c] + ": cell '" +
                                    cells[r] + "' is not numeric");
                values.push_back(value);
            }
            data.columns.push_back(numeric_column(header[c], std::move(values)));
        } else {
            std::vector<std::string> levels = cells;
            std::sort(levels.begin(), levels.end());
            levels.erase(std::unique(levels.begin(), levels.end()),
                         levels.end());
            std::vector<int> codes;
            codes.reserve(cells.size());
            for (const std::string& cell : cells)
                codes.push_back(int(std::lower_bound(levels.begin(),
                                                     levels.end(), cell) -
                                    levels.begin()));
            data.columns.push_back(categorical_column(
                header[c], std::move(codes), std::move(levels)));
        }
    }
    data.target = data.column_index(target_name);
    if (data.target < 0)
        throw DataError("target column not found: " + target_name);
    data.validate();
    return data;
}

Dataset read_csv_file(const std::string& path, const std::string& target_name,
                      const std::string& schema_path, CsvReadReport* report) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    const auto schema = schema_path.empty()
                            ? std::vector<std::pair<std::string, ColumnType>>{}
                            : read_schema_file(schema_path);
    return read_csv(in, target_name, schema, report);
}

std::vector<std::pair<std::string, ColumnType>> read_schema_file(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open schema file: " + path);
    std::vector<std::pair<std::string, ColumnType>> schema;
    std::string line;
    int line_no = 0;
    while (next_line(in, &line)) {
        ++line_no;
        const std::string entry = trimmed(line);
        if (entry.empty() || entry[0] == '#') continue;
        const std::size_t colon = entry.find(':');
        if (colon == std::string::npos)
            throw ConfigError("schema line " + std::to_string(line_no) +
                              ": expected name:type");
        const std::string name = trimmed(entry.substr(0, colon));
        const std::string type = trimmed(entry.substr(colon + 1));
        if (name.empty())
            throw ConfigError("schema line " + std::to_string(line_no) +
                              ": empty column name");
        if (type == "numeric")
            schema.emplace_back(name, ColumnType::Numeric);
        else if (type == "categorical")
            schema.emplace_back(name, ColumnType::Categorical);
        else
            throw ConfigError("schema line " + std::to_string(line_no) +
                              ": unknown type '" + type +
                              "' (use numeric or categorical)");
    }
    return schema;
}

void write_csv(std::ostream& out, const Dataset& data) {
    std::string line;
    for (std::size_t c = 0; c < data.columns.size(); ++c) {
        if (c) line += ',';
        append_cell(&line, data.columns[c].name);
    }
    line += '\n';
    out << line;
    const std::size_t n = data.n_rows();
    for (std::size_t r = 0; r < n; ++r) {
        line.clear();
        for (std::size_t c = 0; c < data.columns.size(); ++c) {
            if (c) line += ',';
            const Column& col = data.columns[c];
            if (col.type == ColumnType::Numeric)
                append_cell(&line, format_numeric(col.numeric[r]));
            else
                append_cell(&line, col.levels[col.codes[r]]);
        }
        line += '\n';
        out << line;
    }
}

}  // namespace seqvimp
