#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace paraspace {

enum class ErrorCode {
    duplicate_variable,
    unknown_variable,
    unknown_row,
    invalid_value,
    invalid_argument,
    invalid_region,
    type_mismatch,
    unbounded_region,
    unsupported_analytic,
    unsupported_region,
    region_too_thin,
    empty_region,
    parse_error,
    protocol_error,
    node_unavailable,
    unknown_feature,
    unsupported_capability,
    batch_aborted,
    empty_selection,
    zero_norm_row,
    invalid_for_l1,
    invalid_matrix,
    too_many_rows,
    empty_cluster,
    io_error,
    startup_error,
    not_found,
};

std::string_view to_string(ErrorCode code);

/// Process exit status used by the CLI for each error kind. 0 is success,
/// 1 is an unexpected failure and 2 a usage error, so codes start at 10.
int exit_code(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace paraspace
