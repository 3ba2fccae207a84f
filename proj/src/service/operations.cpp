#include "paraspace/service/operations.hpp"

#include <algorithm>
#include <fstream>

#include "paraspace/error.hpp"
#include "paraspace/region/region_json.hpp"

namespace paraspace::service {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> expand_command(const std::vector<std::string>& command, const fs::path& dir) {
    std::vector<std::string> argv;
    const std::string runs = (dir / "runs").string();
    for (auto arg : command) {
        for (auto pos = arg.find("{runs}"); pos != std::string::npos; pos = arg.find("{runs}", pos + runs.size())) {
            arg.replace(pos, 6, runs);
        }
        argv.push_back(std::move(arg));
    }
    return argv;
}

json cell_to_json(const core::Cell& cell) {
    return std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, core::Missing>) {
                return nullptr;
            } else {
                return v;
            }
        },
        cell);
}

} // namespace

void check_sample_region(const core::DataTable& table, const region::Region& region) {
    for (const auto& name : region.variables()) {
        if (!table.has_variable(name)) {
            throw Error(ErrorCode::unknown_variable, "region references unknown variable '" + name + "'");
        }
        if (table.variable(name).role != core::Role::factor) {
            throw Error(ErrorCode::type_mismatch, "sampling region variable '" + name + "' is not a factor");
        }
    }
}

std::vector<core::RowId> sample_into(Project& project, const sampling::SampleRequest& request) {
    check_sample_region(project.table, request.region);
    const auto points = sampling::sample(request).to_factor_points();
    return project.table.append_rows(points);
}

std::vector<std::unique_ptr<node::NodeClient>> connect_node(const Project& project, const fs::path& dir,
                                                            std::size_t count) {
    if (!project.node) {
        throw Error(ErrorCode::node_unavailable, "project has no compute node configured");
    }
    const auto& cfg = *project.node;
    auto cache = std::make_shared<node::ResultCache>(dir / "runs");
    std::vector<std::unique_ptr<node::NodeClient>> clients;
    for (std::size_t i = 0; i < std::max<std::size_t>(count, 1); ++i) {
        std::unique_ptr<node::Channel> channel;
        if (cfg.host) {
            channel = node::connect_tcp(*cfg.host, cfg.port);
        } else {
            channel = std::make_unique<node::ProcessChannel>(expand_command(cfg.command, dir));
        }
        auto client = std::make_unique<node::NodeClient>(std::move(channel), cache);
        client->handshake();
        clients.push_back(std::move(client));
    }
    return clients;
}

void configure_node(Project& project, NodeConfig config, const fs::path& dir) {
    config.descriptor.reset();
    Project probe;
    probe.node = config;
    auto clients = connect_node(probe, dir, 1);
    config.descriptor = clients.front()->descriptor();
    node::register_node(project.table, *config.descriptor);
    project.node = std::move(config);
}

std::vector<node::RunResult> run_rows(Project& project, const fs::path& dir, std::vector<core::RowId> rows,
                                      const node::ProgressCallback& progress) {
    if (!project.node) {
        throw Error(ErrorCode::node_unavailable, "project has no compute node configured");
    }
    if (rows.empty()) {
        for (const auto& r : project.table.rows()) {
            if (r.status == core::Status::pending) {
                rows.push_back(r.id);
            }
        }
    }
    for (const auto id : rows) {
        project.table.row(id);
    }
    if (rows.empty()) {
        return {};
    }
    node::WorkerPool pool(connect_node(project, dir, project.node->workers));
    return node::batch_execute(pool, project.table, rows, progress);
}

std::size_t feature_rows(Project& project, const fs::path& dir, const std::string& feature,
                         std::vector<core::RowId> rows) {
    if (rows.empty()) {
        rows = project.table.row_ids();
    }
    auto clients = connect_node(project, dir, 1);
    return node::compute_features(*clients.front(), project.table, feature, rows);
}

const EmbeddingRecord& embed_rows(Project& project, std::vector<core::RowId> rows, const analysis::AffinitySpec& spec,
                                  const std::string& name) {
    if (rows.empty()) {
        rows = project.table.row_ids();
    }
    const auto result = analysis::embed(project.table, rows, spec);
    analysis::apply_embedding(project.table, result);
    EmbeddingRecord rec;
    rec.name = name;
    rec.spec = spec;
    rec.rows = result.rows;
    rec.eigenvalues.assign(result.eigenvalues.data(), result.eigenvalues.data() + result.eigenvalues.size());
    rec.sigma = result.sigma;
    rec.degenerate_axes = result.degenerate_axes;
    // Only one embedding occupies the coordinate columns at a time.
    std::erase_if(project.embeddings, [&](const EmbeddingRecord& e) { return e.name == name; });
    project.embeddings.push_back(std::move(rec));
    return project.embeddings.back();
}

region::Region resolve_region(const Project& project, const json& ref) {
    if (ref.is_string()) {
        const auto name = ref.get<std::string>();
        const auto it = project.regions.find(name);
        if (it == project.regions.end()) {
            throw Error(ErrorCode::not_found, "no saved region '" + name + "'");
        }
        return it->second;
    }
    return region::from_json(ref);
}

region::Region parse_region_argument(const Project& project, const std::string& text, bool allow_files) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json doc;
        try {
            doc = json::parse(text);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::parse_error, std::string("region is not valid JSON: ") + e.what());
        }
        return region::from_json(doc);
    }
    if (project.regions.contains(text)) {
        return project.regions.at(text);
    }
    if (allow_files && fs::exists(text)) {
        return region::read_region_file(text);
    }
    throw Error(ErrorCode::not_found, "no saved region or region file '" + text + "'");
}

std::vector<core::RowId> rows_with_label(const core::DataTable& table, const std::string& column,
                                         const std::string& label) {
    if (table.variable(column).role != core::Role::label) {
        throw Error(ErrorCode::type_mismatch, "'" + column + "' is not a label column");
    }
    std::vector<core::RowId> out;
    for (const auto& r : table.rows()) {
        const auto* s = std::get_if<std::string>(&table.cell(r.id, column));
        if (s && *s == label) {
            out.push_back(r.id);
        }
    }
    return out;
}

json row_to_json(const core::DataTable& table, const core::Configuration& row) {
    json j;
    j["id"] = core::to_int(row.id);
    j["status"] = std::string(core::to_string(row.status));
    j["values"] = json::object();
    for (std::size_t i = 0; i < table.variables().size(); ++i) {
        j["values"][table.variables()[i].name] = cell_to_json(row.values[i]);
    }
    if (row.artifact_ref) j["artifact"] = *row.artifact_ref;
    j["flags"] = row.flags;
    if (!row.message.empty()) j["message"] = row.message;
    return j;
}

json embedding_to_json(const EmbeddingRecord& e) {
    json j{{"name", e.name}, {"spec", spec_to_json(e.spec)}, {"eigenvalues", e.eigenvalues},
           {"degenerate_axes", e.degenerate_axes}, {"row_count", e.rows.size()}};
    if (e.sigma) j["sigma"] = *e.sigma;
    return j;
}

json project_summary(const Project& p) {
    json j;
    j["id"] = p.id;
    j["variables"] = json::array();
    for (const auto& v : p.table.variables()) j["variables"].push_back(variable_to_json(v));
    j["row_count"] = p.table.row_count();
    json counts{{"pending", 0}, {"computed", 0}, {"failed", 0}};
    for (const auto& r : p.table.rows()) {
        counts[std::string(core::to_string(r.status))] = counts[std::string(core::to_string(r.status))].get<int>() + 1;
    }
    j["status_counts"] = counts;
    j["groups"] = json::array();
    for (const auto& g : p.table.groups()) j["groups"].push_back({{"name", g.name}, {"members", g.members}});
    j["regions"] = json::object();
    for (const auto& [name, r] : p.regions) j["regions"][name] = region::to_json(r);
    j["node"] = p.node ? node_config_to_json(*p.node) : json(nullptr);
    j["labelings"] = json::array();
    for (const auto& l : p.labelings) j["labelings"].push_back({{"column", l.column}, {"labels", l.labels}});
    j["embeddings"] = json::array();
    for (const auto& e : p.embeddings) j["embeddings"].push_back(embedding_to_json(e));
    j["properties"] = p.properties;
    return j;
}

} // namespace paraspace::service
