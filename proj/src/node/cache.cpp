#include "paraspace/node/cache.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "paraspace/error.hpp"

namespace paraspace::node {
namespace {

bool safe_component(const std::string& s) {
    return !s.empty() && s.find_first_of("/\\") == std::string::npos && s != "." && s != "..";
}

} // namespace

ResultCache::ResultCache(std::filesystem::path directory) : directory_(std::move(directory)) {
    std::error_code ec;
    std::filesystem::create_directories(directory_, ec);
    if (ec) {
        throw Error(ErrorCode::io_error, "cannot create cache directory " + directory_.string());
    }
}

std::filesystem::path ResultCache::run_path(const std::string& key) const {
    return directory_ / (key + ".json");
}

std::filesystem::path ResultCache::image_path(const std::string& key, const std::string& plot) const {
    return directory_ / (key + "." + plot + ".png");
}

std::optional<CachedRun> ResultCache::find_run(const std::string& key) const {
    std::lock_guard lock(mutex_);
    if (const auto it = runs_.find(key); it != runs_.end()) {
        return it->second;
    }
    if (directory_.empty()) {
        return std::nullopt;
    }
    std::ifstream in(run_path(key));
    if (!in) {
        return std::nullopt;
    }
    try {
        const auto doc = nlohmann::json::parse(in);
        CachedRun run;
        run.values = parse_values(doc);
        if (doc.contains("artifact") && doc["artifact"].is_string()) {
            run.artifact = doc["artifact"].get<std::string>();
        }
        runs_.emplace(key, run);
        return run;
    } catch (const std::exception&) {
        // A corrupt entry is a miss; the next store overwrites it.
        return std::nullopt;
    }
}

void ResultCache::store_run(const std::string& key, const std::string& canonical, const CachedRun& run) {
    std::lock_guard lock(mutex_);
    runs_[key] = run;
    if (directory_.empty()) {
        return;
    }
    nlohmann::ordered_json doc;
    doc["params"] = canonical;
    doc["values"] = nlohmann::ordered_json::object();
    for (const auto& [name, value] : run.values) {
        std::visit([&](const auto& v) { doc["values"][name] = v; }, value);
    }
    if (run.artifact) {
        doc["artifact"] = *run.artifact;
    }
    std::ofstream out(run_path(key));
    out << doc.dump() << '\n';
}

std::optional<std::string> ResultCache::find_image(const std::string& key, const std::string& plot) const {
    if (!safe_component(plot)) {
        return std::nullopt;
    }
    std::lock_guard lock(mutex_);
    const std::string id = key + "." + plot;
    if (const auto it = images_.find(id); it != images_.end()) {
        return it->second;
    }
    if (directory_.empty()) {
        return std::nullopt;
    }
    std::ifstream in(image_path(key, plot), std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    images_.emplace(id, bytes);
    return bytes;
}

void ResultCache::store_image(const std::string& key, const std::string& plot, const std::string& png) {
    if (!safe_component(plot)) {
        return;
    }
    std::lock_guard lock(mutex_);
    images_[key + "." + plot] = png;
    if (directory_.empty()) {
        return;
    }
    std::ofstream out(image_path(key, plot), std::ios::binary);
    out.write(png.data(), static_cast<std::streamsize>(png.size()));
}

} // namespace paraspace::node
