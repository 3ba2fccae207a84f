#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "paraspace/core/table.hpp"
#include "paraspace/error.hpp"
#include "paraspace/node/cache.hpp"
#include "paraspace/node/channel.hpp"
#include "paraspace/node/protocol.hpp"

namespace paraspace::node {

inline constexpr std::chrono::milliseconds kHandshakeTimeout{10'000};

struct RunResult {
    core::RowId row{};
    std::map<std::string, core::Cell> responses;
    std::optional<std::string> artifact_ref;
    double wall_time = 0.0;
    core::Status status = core::Status::pending;
    std::string message;
    bool from_cache = false;
};

struct FeatureOutcome {
    std::optional<Value> value;
    /// Node-reported failure text when value is empty.
    std::string message;
};

/// One connection to a compute node, one request in flight. Not thread-safe;
/// a pool gives each connection its own thread.
class NodeClient {
public:
    explicit NodeClient(std::unique_ptr<Channel> channel, std::shared_ptr<ResultCache> cache = nullptr);
    ~NodeClient();

    NodeClient(const NodeClient&) = delete;
    NodeClient& operator=(const NodeClient&) = delete;

    /// Throws ProtocolError (and closes) on a malformed reply, NodeUnavailable
    /// on timeout or disconnect.
    const ComputeNodeDescriptor& handshake(std::chrono::milliseconds timeout = kHandshakeTimeout);

    bool connected() const;
    bool ready() const noexcept { return descriptor_.has_value(); }
    const ComputeNodeDescriptor& descriptor() const;

    /// Declared parameters only, with defaults filling gaps.
    Params fill_defaults(const core::FactorPoint& point) const;

    /// A node-reported failure yields status failed. Transport trouble throws
    /// NodeUnavailable; a garbled reply throws ProtocolError. Both close.
    RunResult run(core::RowId row, const core::FactorPoint& point);

    /// Throws UnknownFeature for an undeclared feature.
    FeatureOutcome compute_feature(std::string_view feature, const core::FactorPoint& point,
                                   const std::optional<std::string>& artifact = std::nullopt);

    /// PNG bytes. Throws UnsupportedCapability without display_plot or for an
    /// undeclared plot.
    std::string render_detail(const core::FactorPoint& point, std::string_view plot);

    /// Unblocks a pending request from another thread.
    void cancel();
    void close();

    /// Requests sent to the node so far (cache hits send nothing).
    std::uint64_t messages_sent() const noexcept { return sent_; }
    const std::shared_ptr<ResultCache>& cache() const noexcept { return cache_; }

private:
    Reply exchange(const std::string& line, std::int64_t id, std::optional<std::chrono::milliseconds> timeout);
    void require_ready() const;
    std::int64_t next_id() { return next_id_++; }

    std::unique_ptr<Channel> channel_;
    std::shared_ptr<ResultCache> cache_;
    std::optional<ComputeNodeDescriptor> descriptor_;
    std::int64_t next_id_ = 1;
    std::uint64_t sent_ = 0;
};

/// Adds node parameters as factors (or updates the defaults of existing
/// factors) and declared responses as response columns.
void register_node(core::DataTable& table, const ComputeNodeDescriptor& descriptor);

/// Factor values of a row, skipping missing cells.
core::FactorPoint factor_point(const core::DataTable& table, core::RowId row);

/// Fills the derived column named after the feature for each row, creating
/// the column on first use. Failed rows get the derived_error flag. Returns
/// the number of rows that received a value.
std::size_t compute_features(NodeClient& client, core::DataTable& table, std::string_view feature,
                             std::span<const core::RowId> rows);

class WorkerPool {
public:
    /// Handshakes any client that has not done so yet.
    explicit WorkerPool(std::vector<std::unique_ptr<NodeClient>> clients);

    /// Spawns `count` processes running argv.
    static WorkerPool spawn(const std::vector<std::string>& argv, std::size_t count,
                            std::shared_ptr<ResultCache> cache = nullptr);

    std::size_t size() const noexcept { return clients_.size(); }
    std::size_t live() const;
    NodeClient& client(std::size_t i) { return *clients_.at(i); }
    const ComputeNodeDescriptor& descriptor() const;

private:
    std::vector<std::unique_ptr<NodeClient>> clients_;
};

struct BatchOptions {
    /// Extra attempts after a lost connection.
    int retry_budget = 1;
};

using ProgressCallback = std::function<void(const RunResult& result, std::size_t done, std::size_t total)>;

/// Thrown when every connection is gone with rows still outstanding.
class BatchAborted : public Error {
public:
    BatchAborted(std::string message, std::vector<core::RowId> residual)
        : Error(ErrorCode::batch_aborted, std::move(message)), residual_(std::move(residual)) {}
    const std::vector<core::RowId>& residual() const noexcept { return residual_; }

private:
    std::vector<core::RowId> residual_;
};

/// Runs the pending rows among `rows` over the pool. Results are applied to
/// the table on the calling thread, one per row, in completion order.
std::vector<RunResult> batch_execute(WorkerPool& pool, core::DataTable& table,
                                     std::span<const core::RowId> rows,
                                     const ProgressCallback& progress = {},
                                     BatchOptions options = {});

} // namespace paraspace::node
