#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "paraspace/error.hpp"

namespace paraspace::service {

enum class JobKind { sample, batch_run, embed };
enum class JobState { queued, running, done, failed };

std::string_view to_string(JobKind kind);
std::string_view to_string(JobState state);

struct Job {
    std::string id;
    JobKind kind = JobKind::sample;
    std::string project;
    JobState state = JobState::queued;
    std::size_t done = 0;
    std::size_t total = 0;
    nlohmann::json result;
    std::optional<ErrorCode> error_code;
    std::string error;
};

nlohmann::json job_to_json(const Job& job);

/// In-memory job registry. States only move forward and progress never
/// decreases.
class JobStore {
public:
    std::string create(JobKind kind, const std::string& project, std::size_t total);
    std::optional<Job> get(const std::string& id) const;
    void start(const std::string& id);
    void progress(const std::string& id, std::size_t done, std::size_t total);
    void finish(const std::string& id, nlohmann::json result);
    void fail(const std::string& id, ErrorCode code, const std::string& message, nlohmann::json result = {});

private:
    mutable std::mutex mutex_;
    std::map<std::string, Job> jobs_;
    std::uint64_t next_ = 1;
};

struct ServerConfig {
    std::filesystem::path root;
    std::string host = "127.0.0.1";
    /// 0 picks a free port.
    int port = 8080;
};

/// REST service over the projects stored under config.root.
class Server {
public:
    explicit Server(ServerConfig config);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and starts serving on a background thread. Throws StartupError
    /// when the address cannot be bound.
    void start();
    int port() const noexcept { return port_; }
    void stop();
    /// Blocks until stop() is called from elsewhere.
    void wait();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
    std::thread thread_;
};

} // namespace paraspace::service
