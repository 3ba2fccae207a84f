#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "paraspace/core/table.hpp"

namespace paraspace::core {

/// Shortest decimal that parses back to the same double.
std::string format_double(double value);

/// Header row of variable names, one line per row in table order. Missing
/// cells are NA, labels are quoted, vectors are a quoted JSON array.
void write_csv(std::ostream& out, const DataTable& table);
void write_csv(std::ostream& out, const DataTable& table, std::span<const RowId> rows);

/// Reads rows into a table with the given schema; header names must match
/// the schema's variable names (any order). With an empty schema, columns
/// are inferred: quoted text becomes a label, everything else a response.
/// Imported rows are computed when every response is present, else pending.
DataTable read_csv(std::istream& in, std::vector<Variable> schema = {});

/// Raw field splitting, exposed for tests.
struct CsvField {
    std::string text;
    bool quoted = false;
};
std::vector<std::vector<CsvField>> parse_csv_records(std::istream& in);

} // namespace paraspace::core
