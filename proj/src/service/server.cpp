#include "paraspace/service/server.hpp"

#include <condition_variable>
#include <deque>
#include <functional>

#include "paraspace/core/csv.hpp"
#include "paraspace/region/region_json.hpp"
#include "paraspace/service/operations.hpp"

#include <httplib.h>

namespace paraspace::service {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

int http_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::not_found:
    case ErrorCode::unknown_row:
        return 404;
    case ErrorCode::node_unavailable:
    case ErrorCode::batch_aborted:
        return 503;
    case ErrorCode::io_error:
    case ErrorCode::startup_error:
        return 500;
    default:
        return 400;
    }
}

json error_body(ErrorCode code, const std::string& message) {
    return {{"error", {{"code", std::string(to_string(code))}, {"message", message}}}};
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) {
        return json::object();
    }
    try {
        json j = json::parse(req.body);
        if (!j.is_object()) {
            throw Error(ErrorCode::parse_error, "request body must be a JSON object");
        }
        return j;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse_error, std::string("request body is not valid JSON: ") + e.what());
    }
}

std::vector<core::RowId> row_list(const json& body, const char* key) {
    std::vector<core::RowId> rows;
    if (const auto it = body.find(key); it != body.end()) {
        if (!it->is_array()) {
            throw Error(ErrorCode::invalid_argument, std::string("'") + key + "' must be an array of row ids");
        }
        for (const auto& id : *it) {
            if (!id.is_number_unsigned()) {
                throw Error(ErrorCode::invalid_argument, "row ids must be non-negative integers");
            }
            rows.push_back(core::RowId{id.get<std::uint64_t>()});
        }
    }
    return rows;
}

/// Serial executor: the per-project command queue.
class Executor {
public:
    Executor()
        : thread_([this](std::stop_token st) { loop(st); }) {}

    ~Executor() {
        thread_.request_stop();
        cv_.notify_all();
    }

    void post(std::function<void()> task) {
        {
            std::lock_guard lock(mutex_);
            tasks_.push_back(std::move(task));
        }
        cv_.notify_one();
    }

private:
    void loop(std::stop_token st) {
        for (;;) {
            std::function<void()> task;
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [&] { return st.stop_requested() || !tasks_.empty(); });
                if (tasks_.empty()) {
                    return;
                }
                task = std::move(tasks_.front());
                tasks_.pop_front();
            }
            task();
        }
    }

    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::function<void()>> tasks_;
    std::jthread thread_;
};

struct ProjectEntry {
    fs::path dir;
    std::mutex mutex;
    Project project;
    Executor executor;
};

} // namespace

std::string_view to_string(JobKind kind) {
    switch (kind) {
    case JobKind::sample: return "sample";
    case JobKind::batch_run: return "batch_run";
    case JobKind::embed: return "embed";
    }
    return "sample";
}

std::string_view to_string(JobState state) {
    switch (state) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
    }
    return "queued";
}

json job_to_json(const Job& job) {
    json j{{"id", job.id},
           {"kind", std::string(to_string(job.kind))},
           {"project", job.project},
           {"state", std::string(to_string(job.state))},
           {"progress", {{"done", job.done}, {"total", job.total}}},
           {"result", job.result}};
    if (job.error_code) {
        j["error"] = error_body(*job.error_code, job.error)["error"];
    }
    return j;
}

std::string JobStore::create(JobKind kind, const std::string& project, std::size_t total) {
    std::lock_guard lock(mutex_);
    Job job;
    job.id = "job-" + std::to_string(next_++);
    job.kind = kind;
    job.project = project;
    job.total = total;
    jobs_.emplace(job.id, job);
    return job.id;
}

std::optional<Job> JobStore::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void JobStore::start(const std::string& id) {
    std::lock_guard lock(mutex_);
    auto& job = jobs_.at(id);
    if (job.state == JobState::queued) {
        job.state = JobState::running;
    }
}

void JobStore::progress(const std::string& id, std::size_t done, std::size_t total) {
    std::lock_guard lock(mutex_);
    auto& job = jobs_.at(id);
    job.total = std::max(job.total, total);
    job.done = std::min(std::max(job.done, done), job.total);
}

void JobStore::finish(const std::string& id, json result) {
    std::lock_guard lock(mutex_);
    auto& job = jobs_.at(id);
    if (job.state == JobState::done || job.state == JobState::failed) {
        return;
    }
    job.state = JobState::done;
    job.done = job.total;
    job.result = std::move(result);
}

void JobStore::fail(const std::string& id, ErrorCode code, const std::string& message, json result) {
    std::lock_guard lock(mutex_);
    auto& job = jobs_.at(id);
    if (job.state == JobState::done || job.state == JobState::failed) {
        return;
    }
    job.state = JobState::failed;
    job.error_code = code;
    job.error = message;
    job.result = std::move(result);
}

struct Server::Impl {
    ServerConfig config;
    httplib::Server http;
    JobStore jobs;
    std::mutex registry_mutex;
    std::map<std::string, std::shared_ptr<ProjectEntry>> projects;

    explicit Impl(ServerConfig c) : config(std::move(c)) {}

    std::shared_ptr<ProjectEntry> find(const std::string& id) {
        if (!valid_name(id)) {
            throw Error(ErrorCode::not_found, "no project '" + id + "'");
        }
        std::lock_guard lock(registry_mutex);
        if (const auto it = projects.find(id); it != projects.end()) {
            return it->second;
        }
        const fs::path dir = config.root / id;
        if (!fs::exists(dir / "project.json")) {
            throw Error(ErrorCode::not_found, "no project '" + id + "'");
        }
        auto entry = std::make_shared<ProjectEntry>();
        entry->dir = dir;
        entry->project = load_project(dir);
        projects.emplace(id, entry);
        return entry;
    }

    /// Runs `body` as a queued job on the project's executor.
    std::string submit(const std::shared_ptr<ProjectEntry>& entry, JobKind kind, std::size_t total,
                       std::function<json(const std::string& job_id)> body) {
        const std::string id = jobs.create(kind, entry->project.id, total);
        entry->executor.post([this, id, body = std::move(body)] {
            jobs.start(id);
            try {
                jobs.finish(id, body(id));
            } catch (const node::BatchAborted& e) {
                json residual = json::array();
                for (auto r : e.residual()) residual.push_back(core::to_int(r));
                jobs.fail(id, e.code(), e.what(), {{"residual", residual}});
            } catch (const Error& e) {
                jobs.fail(id, e.code(), e.what());
            } catch (const std::exception& e) {
                jobs.fail(id, ErrorCode::io_error, e.what());
            }
        });
        return id;
    }

    void routes();
};

void Server::Impl::routes() {
    const auto guard = [](auto handler) {
        return [handler](const httplib::Request& req, httplib::Response& res) {
            try {
                handler(req, res);
            } catch (const Error& e) {
                send_json(res, http_status(e.code()), error_body(e.code(), e.what()));
            } catch (const std::exception& e) {
                send_json(res, 500, error_body(ErrorCode::io_error, e.what()));
            }
        };
    };

    http.Post("/v1/projects", guard([this](const httplib::Request& req, httplib::Response& res) {
        const json body = parse_body(req);
        std::string id = body.value("id", std::string());
        std::lock_guard lock(registry_mutex);
        if (id.empty()) {
            for (std::uint64_t n = 1;; ++n) {
                id = "project-" + std::to_string(n);
                if (!projects.contains(id) && !fs::exists(config.root / id)) break;
            }
        }
        if (!valid_name(id)) {
            throw Error(ErrorCode::invalid_argument, "invalid project id '" + id + "'");
        }
        if (projects.contains(id) || fs::exists(config.root / id)) {
            send_json(res, 409, error_body(ErrorCode::invalid_argument, "project '" + id + "' exists"));
            return;
        }
        auto entry = std::make_shared<ProjectEntry>();
        entry->dir = config.root / id;
        Project& p = entry->project;
        p.id = id;
        for (const auto& v : body.value("variables", json::array())) {
            p.table.add_variable(variable_from_json(v));
        }
        for (const auto& g : body.value("groups", json::array())) {
            p.table.add_group({g.at("name").get<std::string>(), g.at("members").get<std::vector<std::string>>()});
        }
        p.properties = body.value("properties", std::map<std::string, std::string>{});
        fs::create_directories(entry->dir / "runs");
        try {
            if (body.contains("node") && !body["node"].is_null()) {
                configure_node(p, node_config_from_json(body["node"]), entry->dir);
            }
            save_project(p, entry->dir);
        } catch (...) {
            std::error_code ec;
            fs::remove_all(entry->dir, ec);
            throw;
        }
        projects.emplace(id, entry);
        send_json(res, 201, project_summary(p));
    }));

    http.Get(R"(/v1/projects/([^/]+))", guard([this](const httplib::Request& req, httplib::Response& res) {
        auto entry = find(req.matches[1]);
        std::lock_guard lock(entry->mutex);
        send_json(res, 200, project_summary(entry->project));
    }));

    http.Post(R"(/v1/projects/([^/]+)/sample)", guard([this](const httplib::Request& req, httplib::Response& res) {
        auto entry = find(req.matches[1]);
        const json body = parse_body(req);
        sampling::SampleRequest request{region::Region::all(), 1, sampling::Method::uniform, {}, 0};
        {
            std::lock_guard lock(entry->mutex);
            if (!body.contains("region")) {
                throw Error(ErrorCode::invalid_argument, "sample needs a 'region'");
            }
            request.region = resolve_region(entry->project, body["region"]);
            check_sample_region(entry->project.table, request.region);
        }
        try {
            request.count = body.value("count", std::size_t{1});
            request.seed = body.value("seed", std::uint64_t{0});
            request.method = sampling::method_from_string(body.value("method", std::string("uniform")));
            request.levels = body.value("levels", std::map<std::string, std::size_t>{});
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::invalid_argument, e.what());
        }
        const auto job = submit(entry, JobKind::sample, request.count, [this, entry, request](const std::string& id) {
            std::lock_guard lock(entry->mutex);
            const auto rows = sample_into(entry->project, request);
            save_project(entry->project, entry->dir);
            jobs.progress(id, rows.size(), rows.size());
            json ids = json::array();
            for (auto r : rows) ids.push_back(core::to_int(r));
            return json{{"rows", ids}};
        });
        send_json(res, 202, job_to_json(*jobs.get(job)));
    }));

    http.Post(R"(/v1/projects/([^/]+)/runs)", guard([this](const httplib::Request& req, httplib::Response& res) {
        auto entry = find(req.matches[1]);
        auto rows = row_list(parse_body(req), "rows");
        {
            std::lock_guard lock(entry->mutex);
            if (!entry->project.node) {
                throw Error(ErrorCode::node_unavailable, "project has no compute node configured");
            }
            for (auto r : rows) entry->project.table.row(r);
        }
        const auto job = submit(entry, JobKind::batch_run, rows.size(), [this, entry, rows](const std::string& id) {
            Project snapshot;
            {
                std::lock_guard lock(entry->mutex);
                snapshot = entry->project;
            }
            std::size_t computed = 0, failed = 0;
            run_rows(snapshot, entry->dir, rows,
                     [&](const node::RunResult& r, std::size_t done, std::size_t total) {
                         std::lock_guard lock(entry->mutex);
                         auto& t = entry->project.table;
                         t.apply_result(r.row, r.status, r.responses, r.artifact_ref, r.message);
                         const core::RowId one[] = {r.row};
                         t.recompute_derived(std::span<const core::RowId>(one));
                         (r.status == core::Status::computed ? computed : failed) += 1;
                         jobs.progress(id, done, total);
                     });
            std::lock_guard lock(entry->mutex);
            save_project(entry->project, entry->dir);
            return json{{"computed", computed}, {"failed", failed}};
        });
        send_json(res, 202, job_to_json(*jobs.get(job)));
    }));

    http.Get(R"(/v1/projects/([^/]+)/rows)", guard([this](const httplib::Request& req, httplib::Response& res) {
        auto entry = find(req.matches[1]);
        std::lock_guard lock(entry->mutex);
        const auto& p = entry->project;
        std::vector<core::RowId> rows = p.table.row_ids();
        json excluded = json::array();
        if (req.has_param("region")) {
            const auto result = p.table.filter(parse_region_argument(p, req.get_param_value("region"), false));
            rows = result.rows;
            for (auto r : result.excluded_missing) excluded.push_back(core::to_int(r));
        }
        if (req.has_param("label")) {
            std::string column = req.has_param("column") ? req.get_param_value("column") : std::string("label");
            const auto labeled = rows_with_label(p.table, column, req.get_param_value("label"));
            std::erase_if(rows, [&](core::RowId id) {
                return std::find(labeled.begin(), labeled.end(), id) == labeled.end();
            });
        }
        json out{{"rows", json::array()}, {"excluded_missing", excluded}};
        for (auto id : rows) out["rows"].push_back(row_to_json(p.table, p.table.row(id)));
        send_json(res, 200, out);
    }));

    http.Post(R"(/v1/projects/([^/]+)/embeddings)", guard([this](const httplib::Request& req, httplib::Response& res) {
        auto entry = find(req.matches[1]);
        const json body = parse_body(req);
        const auto spec = spec_from_json(body);
        spec.validate();
        const auto rows = row_list(body, "rows");
        const std::string name = body.value("name", std::string("default"));
        const auto job = submit(entry, JobKind::embed, 1, [entry, spec, rows, name](const std::string&) {
            std::lock_guard lock(entry->mutex);
            const auto& rec = embed_rows(entry->project, rows, spec, name);
            save_project(entry->project, entry->dir);
            return embedding_to_json(rec);
        });
        send_json(res, 202, job_to_json(*jobs.get(job)));
    }));

    http.Post(R"(/v1/projects/([^/]+)/labels)", guard([this](const httplib::Request& req, httplib::Response& res) {
        auto entry = find(req.matches[1]);
        const json body = parse_body(req);
        if (!body.contains("label") || !body["label"].is_string()) {
            throw Error(ErrorCode::invalid_argument, "labels need a 'label' string");
        }
        const std::string column = body.value("column", std::string("label"));
        std::lock_guard lock(entry->mutex);
        auto& p = entry->project;
        auto rows = row_list(body, "rows");
        if (body.contains("region")) {
            const auto hit = p.table.filter(resolve_region(p, body["region"])).rows;
            rows.insert(rows.end(), hit.begin(), hit.end());
        }
        if (p.table.has_variable(column) && p.table.variable(column).role != core::Role::label) {
            throw Error(ErrorCode::type_mismatch, "'" + column + "' is not a label column");
        }
        const auto n = p.label_rows(rows, column, body["label"].get<std::string>());
        save_project(p, entry->dir);
        send_json(res, 200, {{"labeled", n}, {"column", column}});
    }));

    http.Post(R"(/v1/projects/([^/]+)/regions)", guard([this](const httplib::Request& req, httplib::Response& res) {
        auto entry = find(req.matches[1]);
        const json body = parse_body(req);
        const std::string name = body.value("name", std::string());
        if (!valid_name(name)) {
            throw Error(ErrorCode::invalid_argument, "invalid region name '" + name + "'");
        }
        if (!body.contains("region")) {
            throw Error(ErrorCode::invalid_argument, "missing 'region'");
        }
        const auto r = region::from_json(body["region"]);
        std::lock_guard lock(entry->mutex);
        entry->project.regions.insert_or_assign(name, r);
        save_project(entry->project, entry->dir);
        send_json(res, 201, {{"name", name}, {"region", region::to_json(r)}});
    }));

    http.Get(R"(/v1/projects/([^/]+)/detail/(\d+)/([^/]+))",
             guard([this](const httplib::Request& req, httplib::Response& res) {
                 auto entry = find(req.matches[1]);
                 const core::RowId row{std::stoull(req.matches[2])};
                 const std::string plot = req.matches[3];
                 Project snapshot;
                 core::FactorPoint point;
                 {
                     std::lock_guard lock(entry->mutex);
                     point = node::factor_point(entry->project.table, row);
                     snapshot.node = entry->project.node;
                 }
                 auto clients = connect_node(snapshot, entry->dir, 1);
                 res.status = 200;
                 res.set_content(clients.front()->render_detail(point, plot), "image/png");
             }));

    http.Get(R"(/v1/jobs/([^/]+))", guard([this](const httplib::Request& req, httplib::Response& res) {
        const auto job = jobs.get(req.matches[1]);
        if (!job) {
            send_json(res, 404, error_body(ErrorCode::not_found, "no job '" + std::string(req.matches[1]) + "'"));
            return;
        }
        send_json(res, 200, job_to_json(*job));
    }));
}

Server::Server(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
    impl_->http.set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    impl_->routes();
}

Server::~Server() {
    stop();
}

void Server::start() {
    std::error_code ec;
    fs::create_directories(impl_->config.root, ec);
    if (ec) {
        throw Error(ErrorCode::startup_error, "cannot create project root " + impl_->config.root.string());
    }
    if (impl_->config.port == 0) {
        port_ = impl_->http.bind_to_any_port(impl_->config.host);
    } else {
        port_ = impl_->http.bind_to_port(impl_->config.host, impl_->config.port) ? impl_->config.port : -1;
    }
    if (port_ <= 0) {
        throw Error(ErrorCode::startup_error, "cannot bind " + impl_->config.host + ":" +
                                                  std::to_string(impl_->config.port));
    }
    thread_ = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
}

void Server::stop() {
    if (impl_) {
        impl_->http.stop();
    }
    if (thread_.joinable()) {
        thread_.join();
    }
}

void Server::wait() {
    if (thread_.joinable()) {
        thread_.join();
    }
}

} // namespace paraspace::service
