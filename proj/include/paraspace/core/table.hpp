#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "paraspace/region/region.hpp"

namespace paraspace::core {

enum class Role { factor, response, derived, label, embedding };

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

inline constexpr std::string_view kUnlabeled = "unlabeled";

/// Reference to a named feature computed by the compute node.
struct NodeFeature {
    std::string feature;
    bool vector = false;

    friend bool operator==(const NodeFeature&, const NodeFeature&) = default;
};

/// Arithmetic over other columns, e.g. "v0 - 0.5 * v_half".
struct Expression {
    std::string text;

    friend bool operator==(const Expression&, const Expression&) = default;
};

using DerivedSource = std::variant<NodeFeature, Expression>;

struct Variable {
    std::string name;
    Role role = Role::response;
    std::optional<std::string> units;
    std::optional<std::string> description;
    /// Factors only.
    std::optional<double> default_value;
    /// Derived columns only.
    std::optional<DerivedSource> source;
    /// Vector columns: length fixed by the first stored value.
    std::optional<std::size_t> vector_length;
    bool vector_valued = false;

    friend bool operator==(const Variable&, const Variable&) = default;
};

struct Missing {
    friend bool operator==(Missing, Missing) = default;
};

using Cell = std::variant<Missing, double, std::vector<double>, std::string>;

bool is_missing(const Cell& cell);

enum class RowId : std::uint64_t {};

inline std::uint64_t to_int(RowId id) { return static_cast<std::uint64_t>(id); }

enum class Status { pending, computed, failed };

std::string_view to_string(Status status);
Status status_from_string(std::string_view text);

namespace row_flag {
inline constexpr std::uint32_t derived_error = 1U << 0;
inline constexpr std::uint32_t artifact_missing = 1U << 1;
} // namespace row_flag

struct Configuration {
    RowId id{};
    /// One cell per table variable, in variable order.
    std::vector<Cell> values;
    Status status = Status::pending;
    std::optional<std::string> artifact_ref;
    std::uint32_t flags = 0;
    std::string message;

    friend bool operator==(const Configuration&, const Configuration&) = default;
};

struct DimensionGroup {
    std::string name;
    std::vector<std::string> members;

    friend bool operator==(const DimensionGroup&, const DimensionGroup&) = default;
};

using FactorPoint = std::map<std::string, double>;

/// Row ids matched by a filter, plus the rows skipped for missing values.
struct FilterResult {
    std::vector<RowId> rows;
    std::vector<RowId> excluded_missing;
};

class ExpressionProgram;

/// Relational table of configurations: rows are runs, columns variables.
/// Not internally synchronized; one owner mutates, copies serve as snapshots.
class DataTable {
public:
    DataTable() = default;

    /// Throws DuplicateVariable.
    static DataTable create(std::vector<Variable> variables);

    const std::vector<Variable>& variables() const noexcept { return variables_; }
    const Variable& variable(std::string_view name) const;
    std::optional<std::size_t> index_of(std::string_view name) const;
    bool has_variable(std::string_view name) const { return index_of(name).has_value(); }
    std::vector<std::string> names_with_role(Role role) const;

    /// n: the simulation input dimension.
    std::size_t factor_count() const;
    /// r: responses plus derived outputs.
    std::size_t response_count() const;

    const std::vector<Configuration>& rows() const noexcept { return rows_; }
    std::size_t row_count() const noexcept { return rows_.size(); }
    const Configuration& row(RowId id) const;
    bool has_row(RowId id) const { return row_index_.contains(to_int(id)); }
    std::vector<RowId> row_ids() const;
    std::uint64_t next_row_id() const noexcept { return next_row_id_; }

    /// Adds an ordinary column; existing rows get a missing cell (labels get
    /// "unlabeled").
    const Variable& add_variable(Variable variable);

    /// Factors only. Throws TypeMismatch for other roles, InvalidValue for
    /// non-finite defaults.
    void set_default(std::string_view name, double value);

    /// Missing factors are filled from defaults. New rows are pending.
    /// Throws UnknownVariable, InvalidValue.
    std::vector<RowId> append_rows(std::span<const FactorPoint> points);

    /// Adds a derived column and evaluates expression sources on every row.
    const Variable& add_derived_variable(std::string name, DerivedSource source);

    /// Re-evaluates expression columns. Node-feature columns are filled by
    /// the compute node and left alone. Returns rows that failed to evaluate.
    std::vector<RowId> recompute_derived(std::optional<std::span<const RowId>> rows = std::nullopt);

    const Cell& cell(RowId id, std::string_view name) const;
    std::optional<double> numeric(RowId id, std::string_view name) const;

    /// Stores a value, enforcing column type and the fixed vector length.
    /// A vector of the wrong length marks the row failed instead of storing.
    void set_cell(RowId id, std::string_view name, Cell value);

    /// Records a simulation outcome for a row.
    void apply_result(RowId id, Status status, const std::map<std::string, Cell>& values,
                      std::optional<std::string> artifact_ref, std::string message = {});

    void set_status(RowId id, Status status, std::string message = {});
    void set_flags(RowId id, std::uint32_t flags);
    void set_artifact(RowId id, std::optional<std::string> artifact_ref);

    /// Rows whose tuples satisfy the region. Rows with a missing value in a
    /// referenced column are excluded and reported.
    FilterResult filter(const region::Region& region) const;

    /// Last write wins. Throws UnknownRow before touching anything.
    std::size_t set_labels(std::span<const RowId> ids, std::string_view label_column,
                           const std::string& label);

    void add_group(DimensionGroup group);
    const std::vector<DimensionGroup>& groups() const noexcept { return groups_; }
    const DimensionGroup& group(std::string_view name) const;

    /// Full row insert used when restoring persisted tables.
    void restore_row(Configuration row);
    void set_next_row_id(std::uint64_t next);

    friend bool operator==(const DataTable& a, const DataTable& b) {
        return a.variables_ == b.variables_ && a.rows_ == b.rows_ &&
               a.groups_ == b.groups_ && a.next_row_id_ == b.next_row_id_;
    }

private:
    std::size_t require_index(std::string_view name) const;
    std::size_t require_row(RowId id) const;
    Cell initial_cell(const Variable& v) const;
    bool evaluate_expression(std::size_t column, std::size_t row_index);

    std::vector<Variable> variables_;
    std::unordered_map<std::string, std::size_t> column_index_;
    std::vector<Configuration> rows_;
    std::unordered_map<std::uint64_t, std::size_t> row_index_;
    std::vector<DimensionGroup> groups_;
    std::uint64_t next_row_id_ = 1;
    std::unordered_map<std::string, std::shared_ptr<const ExpressionProgram>> programs_;
};

} // namespace paraspace::core
