#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "paraspace/node/protocol.hpp"

namespace paraspace::node {

struct CachedRun {
    std::map<std::string, Value> values;
    std::optional<std::string> artifact;
};

/// Run results and detail images keyed by canonical parameter tuples. With a
/// directory, entries persist as <key>.json and <key>.<plot>.png files.
/// Safe for concurrent use.
class ResultCache {
public:
    ResultCache() = default;
    explicit ResultCache(std::filesystem::path directory);

    std::optional<CachedRun> find_run(const std::string& key) const;
    void store_run(const std::string& key, const std::string& canonical, const CachedRun& run);

    std::optional<std::string> find_image(const std::string& key, const std::string& plot) const;
    void store_image(const std::string& key, const std::string& plot, const std::string& png);

    const std::filesystem::path& directory() const noexcept { return directory_; }

private:
    std::filesystem::path run_path(const std::string& key) const;
    std::filesystem::path image_path(const std::string& key, const std::string& plot) const;

    std::filesystem::path directory_;
    mutable std::mutex mutex_;
    mutable std::map<std::string, CachedRun> runs_;
    mutable std::map<std::string, std::string> images_;
};

} // namespace paraspace::node
