#include "paraspace/core/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <iterator>
#include <ostream>

#include <nlohmann/json.hpp>

#include "paraspace/error.hpp"

namespace paraspace::core {
namespace {

constexpr std::string_view kMissing = "NA";

std::string quote(std::string_view text) {
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

std::string header_name(const std::string& name) {
    if (name.find_first_of(",\"\r\n") != std::string::npos) {
        return quote(name);
    }
    return name;
}

std::string format_cell(const Cell& cell) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Missing>) {
                return std::string(kMissing);
            } else if constexpr (std::is_same_v<T, double>) {
                return format_double(v);
            } else if constexpr (std::is_same_v<T, std::string>) {
                return quote(v);
            } else {
                std::string arr = "[";
                for (std::size_t i = 0; i < v.size(); ++i) {
                    if (i > 0) {
                        arr += ',';
                    }
                    arr += format_double(v[i]);
                }
                arr += ']';
                return quote(arr);
            }
        },
        cell);
}

double parse_double(const std::string& text, std::size_t line) {
    double value = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
        throw Error(ErrorCode::parse_error,
                    "line " + std::to_string(line) + ": bad number '" + text + "'");
    }
    return value;
}

bool looks_like_array(const CsvField& f) {
    return f.quoted && !f.text.empty() && f.text.front() == '[';
}

Cell parse_cell(const CsvField& field, const Variable& var, std::size_t line) {
    if (var.role == Role::label) {
        if (!field.quoted && field.text == kMissing) {
            return Missing{};
        }
        return field.text;
    }
    if (!field.quoted && (field.text == kMissing || field.text.empty())) {
        return Missing{};
    }
    if (looks_like_array(field)) {
        try {
            const auto doc = nlohmann::json::parse(field.text);
            return doc.get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse_error,
                        "line " + std::to_string(line) + ": bad vector cell: " + e.what());
        }
    }
    return parse_double(field.text, line);
}

} // namespace

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const DataTable& table) {
    const auto ids = table.row_ids();
    write_csv(out, table, ids);
}

void write_csv(std::ostream& out, const DataTable& table, std::span<const RowId> rows) {
    const auto& vars = table.variables();
    for (std::size_t i = 0; i < vars.size(); ++i) {
        out << (i ? "," : "") << header_name(vars[i].name);
    }
    out << '\n';
    for (RowId id : rows) {
        const auto& row = table.row(id);
        for (std::size_t i = 0; i < row.values.size(); ++i) {
            out << (i ? "," : "") << format_cell(row.values[i]);
        }
        out << '\n';
    }
}

std::vector<std::vector<CsvField>> parse_csv_records(std::istream& in) {
    std::vector<std::vector<CsvField>> records;
    std::vector<CsvField> record;
    CsvField field;
    bool in_quotes = false;
    bool any = false;
    std::istreambuf_iterator<char> it(in);
    const std::istreambuf_iterator<char> end;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field = CsvField{};
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(record));
        record.clear();
        any = false;
    };

    while (it != end) {
        const char c = *it++;
        if (in_quotes) {
            if (c == '"') {
                if (it != end && *it == '"') {
                    field.text += '"';
                    ++it;
                } else {
                    in_quotes = false;
                }
            } else {
                field.text += c;
            }
            continue;
        }
        switch (c) {
        case '"':
            in_quotes = true;
            field.quoted = true;
            any = true;
            break;
        case ',':
            end_field();
            any = true;
            break;
        case '\r':
            break;
        case '\n':
            end_record();
            break;
        default:
            field.text += c;
            any = true;
        }
    }
    if (in_quotes) {
        throw Error(ErrorCode::parse_error, "unterminated quoted field");
    }
    if (any || !field.text.empty() || !record.empty()) {
        end_record();
    }
    return records;
}

DataTable read_csv(std::istream& in, std::vector<Variable> schema) {
    auto records = parse_csv_records(in);
    if (records.empty()) {
        throw Error(ErrorCode::parse_error, "CSV has no header row");
    }
    const auto& header = records.front();
    std::vector<std::string> names;
    for (const auto& f : header) {
        names.push_back(f.text);
    }

    if (schema.empty()) {
        for (std::size_t c = 0; c < names.size(); ++c) {
            Variable v;
            v.name = names[c];
            v.role = Role::response;
            for (std::size_t r = 1; r < records.size(); ++r) {
                if (c >= records[r].size()) {
                    continue;
                }
                if (looks_like_array(records[r][c])) {
                    v.vector_valued = true;
                } else if (records[r][c].quoted) {
                    v.role = Role::label;
                    break;
                }
            }
            schema.push_back(std::move(v));
        }
    }

    DataTable table = DataTable::create(schema);
    std::vector<std::size_t> column_of(names.size());
    for (std::size_t c = 0; c < names.size(); ++c) {
        const auto idx = table.index_of(names[c]);
        if (!idx) {
            throw Error(ErrorCode::unknown_variable, "CSV column '" + names[c] + "' not in schema");
        }
        column_of[c] = *idx;
    }
    if (names.size() != table.variables().size()) {
        throw Error(ErrorCode::parse_error, "CSV header does not cover every schema variable");
    }

    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() == 1 && rec.front().text.empty() && !rec.front().quoted) {
            continue;
        }
        if (rec.size() != names.size()) {
            throw Error(ErrorCode::parse_error, "line " + std::to_string(r + 1) + ": expected " +
                                                    std::to_string(names.size()) + " fields");
        }
        Configuration row;
        row.id = RowId{table.next_row_id()};
        row.values.resize(names.size());
        bool complete = true;
        for (std::size_t c = 0; c < names.size(); ++c) {
            const auto& var = table.variables()[column_of[c]];
            row.values[column_of[c]] = parse_cell(rec[c], var, r + 1);
            if (var.role == Role::response && is_missing(row.values[column_of[c]])) {
                complete = false;
            }
        }
        row.status = complete && !table.names_with_role(Role::response).empty()
                         ? Status::computed
                         : Status::pending;
        table.restore_row(std::move(row));
    }
    return table;
}

} // namespace paraspace::core
