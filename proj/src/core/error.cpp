#include "paraspace/error.hpp"

namespace paraspace {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::duplicate_variable: return "DuplicateVariable";
    case ErrorCode::unknown_variable: return "UnknownVariable";
    case ErrorCode::unknown_row: return "UnknownRow";
    case ErrorCode::invalid_value: return "InvalidValue";
    case ErrorCode::invalid_argument: return "InvalidArgument";
    case ErrorCode::invalid_region: return "InvalidRegion";
    case ErrorCode::type_mismatch: return "TypeMismatch";
    case ErrorCode::unbounded_region: return "UnboundedRegion";
    case ErrorCode::unsupported_analytic: return "UnsupportedAnalytic";
    case ErrorCode::unsupported_region: return "UnsupportedRegion";
    case ErrorCode::region_too_thin: return "RegionTooThin";
    case ErrorCode::empty_region: return "EmptyRegion";
    case ErrorCode::parse_error: return "ParseError";
    case ErrorCode::protocol_error: return "ProtocolError";
    case ErrorCode::node_unavailable: return "NodeUnavailable";
    case ErrorCode::unknown_feature: return "UnknownFeature";
    case ErrorCode::unsupported_capability: return "UnsupportedCapability";
    case ErrorCode::batch_aborted: return "BatchAborted";
    case ErrorCode::empty_selection: return "EmptySelection";
    case ErrorCode::zero_norm_row: return "ZeroNormRow";
    case ErrorCode::invalid_for_l1: return "InvalidForL1";
    case ErrorCode::invalid_matrix: return "InvalidMatrix";
    case ErrorCode::too_many_rows: return "TooManyRows";
    case ErrorCode::empty_cluster: return "EmptyCluster";
    case ErrorCode::io_error: return "IoError";
    case ErrorCode::startup_error: return "StartupError";
    case ErrorCode::not_found: return "NotFound";
    }
    return "Unknown";
}

int exit_code(ErrorCode code) {
    return 10 + static_cast<int>(code);
}

} // namespace paraspace
