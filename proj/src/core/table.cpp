#include "paraspace/core/table.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "paraspace/core/expression.hpp"
#include "paraspace/error.hpp"

namespace paraspace::core {

std::string_view to_string(Role role) {
    switch (role) {
    case Role::factor: return "factor";
    case Role::response: return "response";
    case Role::derived: return "derived";
    case Role::label: return "label";
    case Role::embedding: return "embedding";
    }
    return "response";
}

Role role_from_string(std::string_view text) {
    if (text == "factor") return Role::factor;
    if (text == "response") return Role::response;
    if (text == "derived") return Role::derived;
    if (text == "label") return Role::label;
    if (text == "embedding") return Role::embedding;
    throw Error(ErrorCode::parse_error, "unknown variable role '" + std::string(text) + "'");
}

std::string_view to_string(Status status) {
    switch (status) {
    case Status::pending: return "pending";
    case Status::computed: return "computed";
    case Status::failed: return "failed";
    }
    return "pending";
}

Status status_from_string(std::string_view text) {
    if (text == "pending") return Status::pending;
    if (text == "computed") return Status::computed;
    if (text == "failed") return Status::failed;
    throw Error(ErrorCode::parse_error, "unknown row status '" + std::string(text) + "'");
}

bool is_missing(const Cell& cell) {
    return std::holds_alternative<Missing>(cell);
}

namespace {

bool numeric_role(Role role) {
    return role != Role::label;
}

} // namespace

DataTable DataTable::create(std::vector<Variable> variables) {
    DataTable table;
    for (auto& v : variables) {
        table.add_variable(std::move(v));
    }
    return table;
}

const Variable& DataTable::variable(std::string_view name) const {
    return variables_[require_index(name)];
}

std::optional<std::size_t> DataTable::index_of(std::string_view name) const {
    const auto it = column_index_.find(std::string(name));
    if (it == column_index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::vector<std::string> DataTable::names_with_role(Role role) const {
    std::vector<std::string> out;
    for (const auto& v : variables_) {
        if (v.role == role) {
            out.push_back(v.name);
        }
    }
    return out;
}

std::size_t DataTable::factor_count() const {
    return static_cast<std::size_t>(std::count_if(
        variables_.begin(), variables_.end(), [](const Variable& v) { return v.role == Role::factor; }));
}

std::size_t DataTable::response_count() const {
    return static_cast<std::size_t>(
        std::count_if(variables_.begin(), variables_.end(), [](const Variable& v) {
            return v.role == Role::response || v.role == Role::derived;
        }));
}

const Configuration& DataTable::row(RowId id) const {
    return rows_[require_row(id)];
}

std::vector<RowId> DataTable::row_ids() const {
    std::vector<RowId> out;
    out.reserve(rows_.size());
    for (const auto& r : rows_) {
        out.push_back(r.id);
    }
    return out;
}

std::size_t DataTable::require_index(std::string_view name) const {
    const auto idx = index_of(name);
    if (!idx) {
        throw Error(ErrorCode::unknown_variable, "unknown variable '" + std::string(name) + "'");
    }
    return *idx;
}

std::size_t DataTable::require_row(RowId id) const {
    const auto it = row_index_.find(to_int(id));
    if (it == row_index_.end()) {
        throw Error(ErrorCode::unknown_row, "unknown row " + std::to_string(to_int(id)));
    }
    return it->second;
}

Cell DataTable::initial_cell(const Variable& v) const {
    if (v.role == Role::label) {
        return std::string(kUnlabeled);
    }
    return Missing{};
}

void DataTable::set_default(std::string_view name, double value) {
    Variable& v = variables_[require_index(name)];
    if (v.role != Role::factor) {
        throw Error(ErrorCode::type_mismatch, "'" + v.name + "' is not a factor");
    }
    if (!std::isfinite(value)) {
        throw Error(ErrorCode::invalid_value, "default of '" + v.name + "' is not finite");
    }
    v.default_value = value;
}

const Variable& DataTable::add_variable(Variable variable) {
    if (variable.name.empty()) {
        throw Error(ErrorCode::invalid_argument, "variable name must not be empty");
    }
    if (column_index_.contains(variable.name)) {
        throw Error(ErrorCode::duplicate_variable, "duplicate variable '" + variable.name + "'");
    }
    if (variable.default_value && !std::isfinite(*variable.default_value)) {
        throw Error(ErrorCode::invalid_value, "default of '" + variable.name + "' is not finite");
    }
    if (variable.role != Role::factor) {
        variable.default_value.reset();
    }
    if (variable.source && variable.role != Role::derived) {
        throw Error(ErrorCode::invalid_argument,
                    "only derived variables carry a source ('" + variable.name + "')");
    }
    if (variable.source) {
        if (const auto* expr = std::get_if<Expression>(&*variable.source)) {
            auto program = ExpressionProgram::parse(expr->text);
            for (const auto& col : program->columns()) {
                const auto idx = index_of(col);
                if (!idx) {
                    throw Error(ErrorCode::unknown_variable,
                                "expression references unknown column '" + col + "'");
                }
                if (!numeric_role(variables_[*idx].role) || variables_[*idx].vector_valued) {
                    throw Error(ErrorCode::type_mismatch,
                                "expression column '" + col + "' is not scalar numeric");
                }
            }
            programs_[variable.name] = std::move(program);
        } else if (std::get<NodeFeature>(*variable.source).vector) {
            variable.vector_valued = true;
        }
    }
    column_index_.emplace(variable.name, variables_.size());
    variables_.push_back(std::move(variable));
    const Variable& added = variables_.back();
    for (auto& r : rows_) {
        r.values.push_back(initial_cell(added));
    }
    return added;
}

std::vector<RowId> DataTable::append_rows(std::span<const FactorPoint> points) {
    std::vector<std::vector<Cell>> staged;
    staged.reserve(points.size());
    for (const auto& point : points) {
        for (const auto& [name, value] : point) {
            const auto idx = index_of(name);
            if (!idx) {
                throw Error(ErrorCode::unknown_variable, "unknown variable '" + name + "'");
            }
            if (variables_[*idx].role != Role::factor) {
                throw Error(ErrorCode::invalid_argument, "'" + name + "' is not a factor");
            }
            if (!std::isfinite(value)) {
                throw Error(ErrorCode::invalid_value, "non-finite value for '" + name + "'");
            }
        }
        std::vector<Cell> values;
        values.reserve(variables_.size());
        for (const auto& v : variables_) {
            if (v.role == Role::factor) {
                const auto it = point.find(v.name);
                if (it != point.end()) {
                    values.emplace_back(it->second);
                } else if (v.default_value) {
                    values.emplace_back(*v.default_value);
                } else {
                    throw Error(ErrorCode::invalid_value,
                                "no value and no default for factor '" + v.name + "'");
                }
            } else {
                values.push_back(initial_cell(v));
            }
        }
        staged.push_back(std::move(values));
    }

    std::vector<RowId> ids;
    ids.reserve(staged.size());
    for (auto& values : staged) {
        Configuration row;
        row.id = RowId{next_row_id_++};
        row.values = std::move(values);
        row_index_.emplace(to_int(row.id), rows_.size());
        ids.push_back(row.id);
        rows_.push_back(std::move(row));
    }
    return ids;
}

const Variable& DataTable::add_derived_variable(std::string name, DerivedSource source) {
    Variable v;
    v.name = std::move(name);
    v.role = Role::derived;
    v.source = std::move(source);
    const Variable& added = add_variable(std::move(v));
    const std::size_t column = column_index_.at(added.name);
    if (programs_.contains(added.name)) {
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            evaluate_expression(column, i);
        }
    }
    return variables_[column];
}

bool DataTable::evaluate_expression(std::size_t column, std::size_t row_index) {
    const auto& program = *programs_.at(variables_[column].name);
    Configuration& r = rows_[row_index];
    const auto result = program.evaluate([&](const std::string& col) -> std::optional<double> {
        const auto* v = std::get_if<double>(&r.values[column_index_.at(col)]);
        return v ? std::optional<double>(*v) : std::nullopt;
    });
    if (result) {
        r.values[column] = *result;
        return true;
    }
    r.values[column] = Missing{};
    // Pending rows simply lack their responses yet.
    if (r.status != Status::pending) {
        r.flags |= row_flag::derived_error;
    }
    return false;
}

std::vector<RowId> DataTable::recompute_derived(std::optional<std::span<const RowId>> rows) {
    std::vector<std::size_t> targets;
    if (rows) {
        for (RowId id : *rows) {
            targets.push_back(require_row(id));
        }
    } else {
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            targets.push_back(i);
        }
    }
    std::vector<RowId> failed;
    for (std::size_t i : targets) {
        rows_[i].flags &= ~row_flag::derived_error;
        bool ok = true;
        // Variable order is dependency order: an expression can only
        // reference columns that existed when it was added.
        for (std::size_t c = 0; c < variables_.size(); ++c) {
            if (programs_.contains(variables_[c].name)) {
                ok = evaluate_expression(c, i) && ok;
            }
        }
        if (!ok && rows_[i].status != Status::pending) {
            failed.push_back(rows_[i].id);
        }
    }
    return failed;
}

const Cell& DataTable::cell(RowId id, std::string_view name) const {
    return rows_[require_row(id)].values[require_index(name)];
}

std::optional<double> DataTable::numeric(RowId id, std::string_view name) const {
    const auto* v = std::get_if<double>(&cell(id, name));
    return v ? std::optional<double>(*v) : std::nullopt;
}

void DataTable::set_cell(RowId id, std::string_view name, Cell value) {
    const std::size_t r = require_row(id);
    const std::size_t c = require_index(name);
    Variable& var = variables_[c];
    if (var.role == Role::label) {
        if (!std::holds_alternative<std::string>(value)) {
            throw Error(ErrorCode::type_mismatch, "label column '" + var.name + "' takes strings");
        }
    } else if (std::holds_alternative<std::string>(value)) {
        throw Error(ErrorCode::type_mismatch, "column '" + var.name + "' is numeric");
    }
    if (const auto* d = std::get_if<double>(&value)) {
        if (var.vector_valued) {
            throw Error(ErrorCode::type_mismatch, "column '" + var.name + "' is vector valued");
        }
        if (!std::isfinite(*d)) {
            value = Missing{};
        }
    }
    if (const auto* vec = std::get_if<std::vector<double>>(&value)) {
        var.vector_valued = true;
        if (!var.vector_length) {
            var.vector_length = vec->size();
        } else if (*var.vector_length != vec->size()) {
            rows_[r].values[c] = Missing{};
            rows_[r].status = Status::failed;
            rows_[r].message = "vector length " + std::to_string(vec->size()) + " for '" +
                               var.name + "', expected " + std::to_string(*var.vector_length);
            return;
        }
    }
    rows_[r].values[c] = std::move(value);
}

void DataTable::apply_result(RowId id, Status status, const std::map<std::string, Cell>& values,
                             std::optional<std::string> artifact_ref, std::string message) {
    const std::size_t r = require_row(id);
    for (const auto& [name, value] : values) {
        if (const auto c = index_of(name); c && variables_[*c].role != Role::factor) {
            set_cell(id, name, value);
        }
    }
    Configuration& row = rows_[r];
    if (row.status == Status::failed && status == Status::computed) {
        // set_cell rejected a vector of the wrong length.
        return;
    }
    row.status = status;
    row.message = std::move(message);
    row.artifact_ref = std::move(artifact_ref);
    if (status == Status::computed) {
        for (std::size_t c = 0; c < variables_.size(); ++c) {
            if (variables_[c].role == Role::response && is_missing(row.values[c])) {
                row.status = Status::failed;
                row.message = "missing response '" + variables_[c].name + "'";
                break;
            }
        }
    }
}

void DataTable::set_status(RowId id, Status status, std::string message) {
    Configuration& row = rows_[require_row(id)];
    row.status = status;
    row.message = std::move(message);
}

void DataTable::set_flags(RowId id, std::uint32_t flags) {
    rows_[require_row(id)].flags = flags;
}

void DataTable::set_artifact(RowId id, std::optional<std::string> artifact_ref) {
    rows_[require_row(id)].artifact_ref = std::move(artifact_ref);
}

FilterResult DataTable::filter(const region::Region& region) const {
    const auto names = region.variables();
    std::vector<std::size_t> columns;
    columns.reserve(names.size());
    for (const auto& name : names) {
        const std::size_t c = require_index(name);
        if (!numeric_role(variables_[c].role) || variables_[c].vector_valued) {
            throw Error(ErrorCode::type_mismatch,
                        "region references non-scalar column '" + name + "'");
        }
        columns.push_back(c);
    }
    const region::CompiledRegion compiled(region, names);

    FilterResult out;
    std::vector<double> values(columns.size());
    for (const auto& row : rows_) {
        bool complete = true;
        for (std::size_t k = 0; k < columns.size(); ++k) {
            const auto* v = std::get_if<double>(&row.values[columns[k]]);
            if (v == nullptr) {
                complete = false;
                break;
            }
            values[k] = *v;
        }
        if (!complete) {
            out.excluded_missing.push_back(row.id);
        } else if (compiled.contains(values)) {
            out.rows.push_back(row.id);
        }
    }
    return out;
}

std::size_t DataTable::set_labels(std::span<const RowId> ids, std::string_view label_column,
                                  const std::string& label) {
    const std::size_t c = require_index(label_column);
    if (variables_[c].role != Role::label) {
        throw Error(ErrorCode::type_mismatch,
                    "'" + std::string(label_column) + "' is not a label column");
    }
    std::vector<std::size_t> targets;
    targets.reserve(ids.size());
    for (RowId id : ids) {
        targets.push_back(require_row(id));
    }
    for (std::size_t r : targets) {
        rows_[r].values[c] = label;
    }
    return targets.size();
}

void DataTable::add_group(DimensionGroup group) {
    for (const auto& m : group.members) {
        require_index(m);
    }
    const auto it = std::find_if(groups_.begin(), groups_.end(),
                                 [&](const DimensionGroup& g) { return g.name == group.name; });
    if (it != groups_.end()) {
        *it = std::move(group);
    } else {
        groups_.push_back(std::move(group));
    }
}

const DimensionGroup& DataTable::group(std::string_view name) const {
    const auto it = std::find_if(groups_.begin(), groups_.end(),
                                 [&](const DimensionGroup& g) { return g.name == name; });
    if (it == groups_.end()) {
        throw Error(ErrorCode::not_found, "no dimension group '" + std::string(name) + "'");
    }
    return *it;
}

void DataTable::restore_row(Configuration row) {
    if (row.values.size() != variables_.size()) {
        throw Error(ErrorCode::parse_error, "restored row has the wrong number of cells");
    }
    if (row_index_.contains(to_int(row.id))) {
        throw Error(ErrorCode::parse_error,
                    "duplicate row id " + std::to_string(to_int(row.id)));
    }
    next_row_id_ = std::max(next_row_id_, to_int(row.id) + 1);
    row_index_.emplace(to_int(row.id), rows_.size());
    rows_.push_back(std::move(row));
}

void DataTable::set_next_row_id(std::uint64_t next) {
    next_row_id_ = std::max(next_row_id_, next);
}

} // namespace paraspace::core
