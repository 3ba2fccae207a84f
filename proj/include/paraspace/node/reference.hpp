#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "paraspace/node/png.hpp"
#include "paraspace/node/protocol.hpp"

namespace paraspace::node {

/// Built-in simulators that speak the node protocol: "sine" and "oscillator".
class ReferenceNode {
public:
    virtual ~ReferenceNode() = default;

    virtual const ComputeNodeDescriptor& descriptor() const = 0;
    /// Result message body fields ("values", optionally "artifact").
    /// Throws Error for a simulation failure.
    virtual nlohmann::ordered_json run(const Params& params) = 0;
    virtual Value feature(std::string_view name, const Params& params,
                          const std::optional<std::string>& artifact) = 0;
    virtual GrayImage plot(std::string_view name, const Params& params) = 0;
};

struct NodeOptions {
    /// Where file_io nodes store solutions; artifacts are named relative to
    /// its parent directory.
    std::filesystem::path artifact_dir = "runs";
    /// Exit without replying on run number die_after + 1.
    std::optional<int> die_after;
    int delay_ms = 0;
};

/// Throws InvalidArgument for an unknown kind.
std::unique_ptr<ReferenceNode> make_reference_node(std::string_view kind, const NodeOptions& options);

/// Serves one connection until end of input.
void serve(ReferenceNode& node, int in_fd, int out_fd, const NodeOptions& options);

} // namespace paraspace::node
