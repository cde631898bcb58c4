#pragma once

#include <cstddef>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "seqvimp/errors.hpp"

namespace seqvimp {

enum class ColumnType { Numeric, Categorical };

// One typed column.  Numeric columns live in `numeric`; categorical columns
// store per-row level indices in `codes` against the sorted, duplicate-free
// `levels` list (sorted so the coding does not depend on row order).
struct Column {
    std::string name;
    ColumnType type = ColumnType::Numeric;
    std::vector<double> numeric;
    std::vector<int> codes;
    std::vector<std::string> levels;

    std::size_t size() const {
        return type == ColumnType::Numeric ? numeric.size() : codes.size();
    }
};

Column numeric_column(std::string name, std::vector<double> values);
Column categorical_column(std::string name, std::vector<int> codes,
                          std::vector<std::string> levels);

// The learning data: predictor columns plus one designated target column.
struct Dataset {
    std::vector<Column> columns;
    int target = -1;

    std::size_t n_rows() const;
    std::size_t n_predictors() const { return columns.size() - 1; }
    // Column indices excluding the target, in declaration order.
    std::vector<int> predictor_indices() const;
    int column_index(const std::string& name) const;  // -1 when absent
    bool classification() const;  // true when the target is categorical

    // Throws DataError unless all columns share one length, names are unique
    // and nonempty, the target index is valid, there is at least one
    // predictor, and categorical codes point into their level lists.
    void validate() const;
};

// Replaces column `col` with a uniformly random permutation of itself.
void shuffle_column(Dataset& data, int col, std::mt19937_64& rng);

struct CsvReadReport {
    std::size_t rows_read = 0;     // data rows in the file
    std::size_t rows_dropped = 0;  // removed for holding a missing value
};

// Empty cells and the markers NA, NaN (any case) and ? count as missing;
// rows containing one are dropped (complete-case analysis).
bool is_missing_cell(const std::string& cell);

// Reads a header-rowed CSV.  Column types are inferred -- numeric when every
// kept cell parses as a real number, categorical otherwise -- or forced by
// `schema`, a map of name:type lines (see read_schema_file).  Throws
// DataError for malformed or unusable data, ConfigError for a schema entry
// that names no column.
Dataset read_csv(std::istream& in, const std::string& target_name,
                 const std::vector<std::pair<std::string, ColumnType>>& schema =
                     {},
                 CsvReadReport* report = nullptr);
Dataset read_csv_file(const std::string& path, const std::string& target_name,
                      const std::string& schema_path = "",
                      CsvReadReport* report = nullptr);

// Schema files hold one "name:type" pair per line with type `numeric` or
// `categorical`; blank lines and #-comments are skipped.
std::vector<std::pair<std::string, ColumnType>> read_schema_file(
    const std::string& path);

// Writes the dataset back out as CSV; numeric cells round-trip exactly.
void write_csv(std::ostream& out, const Dataset& data);

}  // namespace seqvimp
