#include "paraspace/node/client.hpp"

#include <condition_variable>
#include <deque>
#include <mutex>
#include <set>
#include <thread>

#include "paraspace/node/png.hpp"

namespace paraspace::node {
namespace {

using Clock = std::chrono::steady_clock;

core::Cell to_cell(const Value& v) {
    return std::visit([](const auto& x) -> core::Cell { return x; }, v);
}

bool arity_matches(const Value& v, Arity arity) {
    return std::holds_alternative<std::vector<double>>(v) == (arity == Arity::vector);
}

std::string error_text(const Reply& reply) {
    const auto it = reply.body.find("message");
    if (it != reply.body.end() && it->is_string()) {
        return it->get<std::string>();
    }
    return "node reported an error";
}

} // namespace

NodeClient::NodeClient(std::unique_ptr<Channel> channel, std::shared_ptr<ResultCache> cache)
    : channel_(std::move(channel)), cache_(std::move(cache)) {}

NodeClient::~NodeClient() {
    close();
}

bool NodeClient::connected() const {
    return channel_ && channel_->is_open();
}

const ComputeNodeDescriptor& NodeClient::descriptor() const {
    require_ready();
    return *descriptor_;
}

void NodeClient::require_ready() const {
    if (!descriptor_) {
        throw Error(ErrorCode::node_unavailable, "node handshake has not completed");
    }
}

void NodeClient::cancel() {
    if (channel_) {
        channel_->cancel();
    }
}

void NodeClient::close() {
    if (channel_) {
        channel_->close();
    }
}

Reply NodeClient::exchange(const std::string& line, std::int64_t id,
                           std::optional<std::chrono::milliseconds> timeout) {
    if (!connected()) {
        throw Error(ErrorCode::node_unavailable, "node connection is closed");
    }
    try {
        channel_->send_line(line);
        ++sent_;
        const auto received = channel_->receive_line(timeout);
        if (!received) {
            throw Error(ErrorCode::node_unavailable, "node closed the connection");
        }
        Reply reply = parse_reply(*received);
        if (reply.id != id) {
            throw Error(ErrorCode::protocol_error,
                        "reply id " + std::to_string(reply.id) + " does not match request " + std::to_string(id));
        }
        return reply;
    } catch (const Error&) {
        close();
        throw;
    }
}

const ComputeNodeDescriptor& NodeClient::handshake(std::chrono::milliseconds timeout) {
    const auto id = next_id();
    Reply reply = exchange(encode_hello(id), id, timeout);
    if (reply.type == ReplyType::error) {
        close();
        throw Error(ErrorCode::protocol_error, "node rejected hello: " + error_text(reply));
    }
    if (reply.type != ReplyType::capabilities) {
        close();
        throw Error(ErrorCode::protocol_error, "expected a capabilities message");
    }
    try {
        descriptor_ = parse_descriptor(reply.body);
    } catch (const Error&) {
        close();
        throw;
    }
    return *descriptor_;
}

Params NodeClient::fill_defaults(const core::FactorPoint& point) const {
    require_ready();
    Params params;
    for (const auto& p : descriptor_->parameters) {
        const auto it = point.find(p.name);
        params[p.name] = it != point.end() ? it->second : p.default_value;
    }
    return params;
}

RunResult NodeClient::run(core::RowId row, const core::FactorPoint& point) {
    require_ready();
    if (!descriptor_->has(Capability::compute_solution)) {
        throw Error(ErrorCode::unsupported_capability, "node cannot compute solutions");
    }
    const auto start = Clock::now();
    const Params params = fill_defaults(point);
    const bool cached = cache_ && descriptor_->has(Capability::file_io);
    const std::string key = cached ? cache_key(descriptor_->name, params) : std::string();

    RunResult result;
    result.row = row;
    if (cached) {
        if (auto hit = cache_->find_run(key)) {
            for (const auto& [name, value] : hit->values) {
                result.responses.emplace(name, to_cell(value));
            }
            result.artifact_ref = hit->artifact;
            result.status = core::Status::computed;
            result.from_cache = true;
            return result;
        }
    }

    const auto id = next_id();
    Reply reply = exchange(encode_run(id, params), id, std::nullopt);
    result.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
    if (reply.type == ReplyType::error) {
        result.status = core::Status::failed;
        result.message = error_text(reply);
        return result;
    }
    if (reply.type != ReplyType::result) {
        close();
        throw Error(ErrorCode::protocol_error, "expected a result message");
    }
    std::map<std::string, Value> values;
    CachedRun entry;
    try {
        values = parse_values(reply.body);
        if (const auto it = reply.body.find("artifact"); it != reply.body.end()) {
            if (!it->is_string()) {
                throw Error(ErrorCode::protocol_error, "'artifact' must be a string");
            }
            entry.artifact = it->get<std::string>();
        }
    } catch (const Error&) {
        close();
        throw;
    }
    for (const auto& [name, value] : values) {
        result.responses.emplace(name, to_cell(value));
    }
    result.artifact_ref = entry.artifact;
    result.status = core::Status::computed;
    for (const auto& r : descriptor_->responses) {
        const auto it = values.find(r.name);
        if (it == values.end()) {
            result.status = core::Status::failed;
            result.message = "node omitted response '" + r.name + "'";
            return result;
        }
        if (!arity_matches(it->second, r.arity)) {
            result.status = core::Status::failed;
            result.message = "response '" + r.name + "' has the wrong arity";
            return result;
        }
    }
    if (cached) {
        entry.values = std::move(values);
        cache_->store_run(key, canonical_params(descriptor_->name, params), entry);
    }
    return result;
}

FeatureOutcome NodeClient::compute_feature(std::string_view feature, const core::FactorPoint& point,
                                           const std::optional<std::string>& artifact) {
    require_ready();
    const OutputSpec* spec = descriptor_->feature(feature);
    if (spec == nullptr) {
        throw Error(ErrorCode::unknown_feature, "node declares no feature '" + std::string(feature) + "'");
    }
    if (!descriptor_->has(Capability::compute_feature)) {
        throw Error(ErrorCode::unsupported_capability, "node cannot compute features");
    }
    const auto id = next_id();
    Reply reply = exchange(encode_feature(id, feature, fill_defaults(point), artifact), id, std::nullopt);
    if (reply.type == ReplyType::error) {
        return {std::nullopt, error_text(reply)};
    }
    try {
        if (reply.type != ReplyType::result) {
            throw Error(ErrorCode::protocol_error, "expected a result message");
        }
        auto values = parse_values(reply.body);
        const auto it = values.find(std::string(feature));
        if (it == values.end()) {
            throw Error(ErrorCode::protocol_error, "result lacks feature '" + std::string(feature) + "'");
        }
        if (!arity_matches(it->second, spec->arity)) {
            throw Error(ErrorCode::protocol_error, "feature '" + std::string(feature) + "' has the wrong arity");
        }
        return {std::move(it->second), {}};
    } catch (const Error&) {
        close();
        throw;
    }
}

std::string NodeClient::render_detail(const core::FactorPoint& point, std::string_view plot) {
    require_ready();
    if (!descriptor_->has(Capability::display_plot)) {
        throw Error(ErrorCode::unsupported_capability, "node cannot display plots");
    }
    if (!descriptor_->has_plot(plot)) {
        throw Error(ErrorCode::unsupported_capability, "node declares no plot '" + std::string(plot) + "'");
    }
    const Params params = fill_defaults(point);
    const std::string key = cache_key(descriptor_->name, params);
    if (cache_) {
        if (auto hit = cache_->find_image(key, std::string(plot))) {
            return *hit;
        }
    }
    const auto id = next_id();
    Reply reply = exchange(encode_show(id, plot, params), id, std::nullopt);
    if (reply.type == ReplyType::error) {
        throw Error(ErrorCode::unsupported_capability, "node could not render '" + std::string(plot) +
                                                           "': " + error_text(reply));
    }
    std::string png;
    try {
        if (reply.type != ReplyType::image) {
            throw Error(ErrorCode::protocol_error, "expected an image message");
        }
        const auto it = reply.body.find("data");
        if (it == reply.body.end() || !it->is_string()) {
            throw Error(ErrorCode::protocol_error, "image message lacks 'data'");
        }
        png = base64_decode(it->get<std::string>());
        if (!png_info(png)) {
            throw Error(ErrorCode::protocol_error, "image payload is not a PNG");
        }
    } catch (const Error&) {
        close();
        throw;
    }
    if (cache_) {
        cache_->store_image(key, std::string(plot), png);
    }
    return png;
}

void register_node(core::DataTable& table, const ComputeNodeDescriptor& descriptor) {
    for (const auto& p : descriptor.parameters) {
        if (table.has_variable(p.name)) {
            table.set_default(p.name, p.default_value);
        } else {
            core::Variable v;
            v.name = p.name;
            v.role = core::Role::factor;
            v.default_value = p.default_value;
            if (!p.description.empty()) {
                v.description = p.description;
            }
            table.add_variable(std::move(v));
        }
    }
    for (const auto& r : descriptor.responses) {
        if (!table.has_variable(r.name)) {
            core::Variable v;
            v.name = r.name;
            v.role = core::Role::response;
            v.vector_valued = r.arity == Arity::vector;
            table.add_variable(std::move(v));
        }
    }
}

core::FactorPoint factor_point(const core::DataTable& table, core::RowId row) {
    core::FactorPoint point;
    for (const auto& name : table.names_with_role(core::Role::factor)) {
        if (const auto v = table.numeric(row, name)) {
            point.emplace(name, *v);
        }
    }
    return point;
}

std::size_t compute_features(NodeClient& client, core::DataTable& table, std::string_view feature,
                             std::span<const core::RowId> rows) {
    const OutputSpec* spec = client.descriptor().feature(feature);
    if (spec == nullptr) {
        throw Error(ErrorCode::unknown_feature, "node declares no feature '" + std::string(feature) + "'");
    }
    for (const auto id : rows) {
        table.row(id);  // UnknownRow before any node traffic
    }
    const std::string column(feature);
    if (!table.has_variable(column)) {
        table.add_derived_variable(column, core::NodeFeature{column, spec->arity == Arity::vector});
    }
    std::size_t stored = 0;
    for (const auto id : rows) {
        const auto outcome = client.compute_feature(feature, factor_point(table, id), table.row(id).artifact_ref);
        const auto flags = table.row(id).flags;
        if (!outcome.value) {
            table.set_cell(id, column, core::Missing{});
            table.set_flags(id, flags | core::row_flag::derived_error);
            continue;
        }
        table.set_cell(id, column, to_cell(*outcome.value));
        table.set_flags(id, flags & ~core::row_flag::derived_error);
        ++stored;
    }
    return stored;
}

WorkerPool::WorkerPool(std::vector<std::unique_ptr<NodeClient>> clients) : clients_(std::move(clients)) {
    if (clients_.empty()) {
        throw Error(ErrorCode::node_unavailable, "worker pool needs at least one connection");
    }
    for (auto& c : clients_) {
        if (!c->ready()) {
            c->handshake();
        }
    }
}

WorkerPool WorkerPool::spawn(const std::vector<std::string>& argv, std::size_t count,
                             std::shared_ptr<ResultCache> cache) {
    std::vector<std::unique_ptr<NodeClient>> clients;
    for (std::size_t i = 0; i < count; ++i) {
        clients.push_back(std::make_unique<NodeClient>(std::make_unique<ProcessChannel>(argv), cache));
    }
    return WorkerPool(std::move(clients));
}

std::size_t WorkerPool::live() const {
    std::size_t n = 0;
    for (const auto& c : clients_) {
        n += c->connected() ? 1 : 0;
    }
    return n;
}

const ComputeNodeDescriptor& WorkerPool::descriptor() const {
    return clients_.front()->descriptor();
}

namespace {

struct Job {
    core::RowId row;
    core::FactorPoint point;
    int attempts = 0;
};

struct Event {
    bool lost = false;
    Job job;
    RunResult result;
    std::string reason;
};

class BatchState {
public:
    void push_job(Job job) {
        {
            std::lock_guard lock(mutex_);
            jobs_.push_back(std::move(job));
        }
        jobs_ready_.notify_one();
    }

    std::optional<Job> pop_job() {
        std::unique_lock lock(mutex_);
        jobs_ready_.wait(lock, [&] { return stop_ || !jobs_.empty(); });
        if (stop_) {
            return std::nullopt;
        }
        Job job = std::move(jobs_.front());
        jobs_.pop_front();
        return job;
    }

    void post(Event event) {
        {
            std::lock_guard lock(mutex_);
            events_.push_back(std::move(event));
        }
        events_ready_.notify_one();
    }

    Event next_event() {
        std::unique_lock lock(mutex_);
        events_ready_.wait(lock, [&] { return !events_.empty(); });
        Event e = std::move(events_.front());
        events_.pop_front();
        return e;
    }

    std::vector<core::RowId> stop() {
        std::vector<core::RowId> residual;
        {
            std::lock_guard lock(mutex_);
            stop_ = true;
            for (const auto& j : jobs_) {
                residual.push_back(j.row);
            }
            jobs_.clear();
        }
        jobs_ready_.notify_all();
        return residual;
    }

private:
    std::mutex mutex_;
    std::condition_variable jobs_ready_;
    std::condition_variable events_ready_;
    std::deque<Job> jobs_;
    std::deque<Event> events_;
    bool stop_ = false;
};

} // namespace

std::vector<RunResult> batch_execute(WorkerPool& pool, core::DataTable& table,
                                     std::span<const core::RowId> rows, const ProgressCallback& progress,
                                     BatchOptions options) {
    std::vector<Job> jobs;
    std::set<std::uint64_t> seen;
    for (const auto id : rows) {
        if (table.row(id).status == core::Status::pending && seen.insert(core::to_int(id)).second) {
            jobs.push_back(Job{id, factor_point(table, id), 0});
        }
    }
    std::vector<RunResult> results;
    const std::size_t total = jobs.size();
    if (total == 0) {
        return results;
    }

    std::vector<NodeClient*> workers;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool.client(i).connected()) {
            workers.push_back(&pool.client(i));
        }
    }
    if (workers.empty()) {
        std::vector<core::RowId> residual;
        for (const auto& j : jobs) {
            residual.push_back(j.row);
        }
        throw BatchAborted("no live node connections", std::move(residual));
    }

    BatchState state;
    for (auto& j : jobs) {
        state.push_job(std::move(j));
    }

    std::vector<std::jthread> threads;
    for (NodeClient* client : workers) {
        threads.emplace_back([&state, client] {
            while (auto job = state.pop_job()) {
                try {
                    RunResult r = client->run(job->row, job->point);
                    state.post(Event{false, std::move(*job), std::move(r), {}});
                } catch (const std::exception& e) {
                    // The connection is unusable; hand the row back and retire.
                    client->close();
                    state.post(Event{true, std::move(*job), {}, e.what()});
                    return;
                }
            }
        });
    }

    std::size_t live = workers.size();
    std::size_t done = 0;
    auto apply = [&](RunResult r) {
        table.apply_result(r.row, r.status, r.responses, r.artifact_ref, r.message);
        const core::RowId one[] = {r.row};
        table.recompute_derived(std::span<const core::RowId>(one));
        ++done;
        results.push_back(std::move(r));
        if (progress) {
            progress(results.back(), done, total);
        }
    };

    while (done < total) {
        Event e = state.next_event();
        if (!e.lost) {
            apply(std::move(e.result));
            continue;
        }
        --live;
        ++e.job.attempts;
        if (e.job.attempts > options.retry_budget) {
            RunResult failed;
            failed.row = e.job.row;
            failed.status = core::Status::failed;
            failed.message = "node connection lost: " + e.reason;
            apply(std::move(failed));
        } else if (live > 0) {
            state.push_job(std::move(e.job));
            continue;
        }
        if (live == 0 && done < total) {
            auto residual = state.stop();
            if (e.job.attempts <= options.retry_budget) {
                residual.push_back(e.job.row);
            }
            throw BatchAborted("all node connections lost", std::move(residual));
        }
    }
    state.stop();
    return results;
}

} // namespace paraspace::node
