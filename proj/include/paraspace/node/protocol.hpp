#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace paraspace::node {

// Newline-delimited JSON, one object per line, UTF-8. The client sends
// hello/run/feature/show with client-assigned integer ids; the node answers
// with capabilities/result/image/error carrying the same id.

inline constexpr int kProtocolVersion = 1;

enum class Capability { compute_solution, display_plot, file_io, compute_feature };

std::string_view to_string(Capability cap);
std::optional<Capability> capability_from_string(std::string_view text);

enum class Arity { scalar, vector };

struct ParameterSpec {
    std::string name;
    std::string description;
    double default_value = 0.0;

    friend bool operator==(const ParameterSpec&, const ParameterSpec&) = default;
};

struct OutputSpec {
    std::string name;
    Arity arity = Arity::scalar;

    friend bool operator==(const OutputSpec&, const OutputSpec&) = default;
};

struct ComputeNodeDescriptor {
    std::string name;
    std::vector<ParameterSpec> parameters;
    std::set<Capability> capabilities;
    std::vector<std::string> plots;
    std::vector<OutputSpec> features;
    /// Values a run returns; every one is present on success.
    std::vector<OutputSpec> responses;

    bool has(Capability cap) const { return capabilities.contains(cap); }
    const OutputSpec* feature(std::string_view name) const;
    bool has_plot(std::string_view name) const;

    friend bool operator==(const ComputeNodeDescriptor&, const ComputeNodeDescriptor&) = default;
};

using Value = std::variant<double, std::vector<double>>;
using Params = std::map<std::string, double>;

/// Throws ProtocolError when the capabilities message violates the
/// descriptor invariants.
ComputeNodeDescriptor parse_descriptor(const nlohmann::json& message);
nlohmann::ordered_json descriptor_message(const ComputeNodeDescriptor& d, std::int64_t id);

std::string encode_hello(std::int64_t id);
std::string encode_run(std::int64_t id, const Params& params);
std::string encode_feature(std::int64_t id, std::string_view feature, const Params& params,
                           const std::optional<std::string>& artifact);
std::string encode_show(std::int64_t id, std::string_view plot, const Params& params);

enum class ReplyType { capabilities, result, image, error };

struct Reply {
    ReplyType type;
    std::int64_t id;
    nlohmann::json body;
};

/// Parses one node line. Throws ProtocolError on malformed JSON, unknown
/// types, or a missing/ill-typed id.
Reply parse_reply(std::string_view line);

/// Decodes the "values" object of a result message.
std::map<std::string, Value> parse_values(const nlohmann::json& body);

/// Canonical cache key of a parameter tuple: node name plus sorted
/// name=value pairs with shortest round-trip decimals, hashed to 16 hex digits.
std::string canonical_params(std::string_view node_name, const Params& params);
std::string cache_key(std::string_view node_name, const Params& params);

std::string base64_encode(std::string_view bytes);
/// Throws ProtocolError on invalid input.
std::string base64_decode(std::string_view text);

} // namespace paraspace::node
