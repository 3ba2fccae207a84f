#include "paraspace/service/project.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "paraspace/core/csv.hpp"
#include "paraspace/error.hpp"
#include "paraspace/region/region_json.hpp"

namespace paraspace::service {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::string_view kFormat = "paraspace-project";
constexpr std::string_view kRegionSuffix = ".region.json";

[[noreturn]] void parse_fail(const std::string& message) {
    throw Error(ErrorCode::parse_error, message);
}

json descriptor_json(const node::ComputeNodeDescriptor& d) {
    json j = json::parse(node::descriptor_message(d, 0).dump());
    j.erase("type");
    j.erase("id");
    return j;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot read " + path.string());
    }
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << text;
        if (!out) {
            throw Error(ErrorCode::io_error, "cannot write " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        throw Error(ErrorCode::io_error, "cannot replace " + path.string() + ": " + ec.message());
    }
}

} // namespace

bool valid_name(std::string_view name) {
    if (name.empty() || name.size() > 128 || name.front() == '.') {
        return false;
    }
    return std::all_of(name.begin(), name.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    });
}

std::size_t Project::label_rows(std::span<const core::RowId> rows, const std::string& column,
                                const std::string& label) {
    if (!table.has_variable(column)) {
        for (const auto id : rows) {
            table.row(id);
        }
        core::Variable v;
        v.name = column;
        v.role = core::Role::label;
        table.add_variable(std::move(v));
    }
    const auto n = table.set_labels(rows, column, label);
    auto it = std::find_if(labelings.begin(), labelings.end(), [&](const Labeling& l) { return l.column == column; });
    if (it == labelings.end()) {
        labelings.push_back({column, {}});
        it = std::prev(labelings.end());
    }
    if (std::find(it->labels.begin(), it->labels.end(), label) == it->labels.end()) {
        it->labels.push_back(label);
    }
    return n;
}

json variable_to_json(const core::Variable& v) {
    json j;
    j["name"] = v.name;
    j["role"] = std::string(core::to_string(v.role));
    if (v.units) j["units"] = *v.units;
    if (v.description) j["description"] = *v.description;
    if (v.default_value) j["default"] = *v.default_value;
    if (v.source) {
        if (const auto* f = std::get_if<core::NodeFeature>(&*v.source)) {
            j["source"] = {{"feature", f->feature}, {"vector", f->vector}};
        } else {
            j["source"] = {{"expression", std::get<core::Expression>(*v.source).text}};
        }
    }
    if (v.vector_length) j["vector_length"] = *v.vector_length;
    j["vector"] = v.vector_valued;
    return j;
}

core::Variable variable_from_json(const json& j) {
    try {
        core::Variable v;
        v.name = j.at("name").get<std::string>();
        v.role = core::role_from_string(j.value("role", std::string("response")));
        if (j.contains("units")) v.units = j.at("units").get<std::string>();
        if (j.contains("description")) v.description = j.at("description").get<std::string>();
        if (j.contains("default")) v.default_value = j.at("default").get<double>();
        if (j.contains("source")) {
            const auto& s = j.at("source");
            if (s.contains("expression")) {
                v.source = core::Expression{s.at("expression").get<std::string>()};
            } else {
                v.source = core::NodeFeature{s.at("feature").get<std::string>(), s.value("vector", false)};
            }
        }
        if (j.contains("vector_length")) v.vector_length = j.at("vector_length").get<std::size_t>();
        v.vector_valued = j.value("vector", false);
        return v;
    } catch (const json::exception& e) {
        parse_fail(std::string("bad variable entry: ") + e.what());
    }
}

json spec_to_json(const analysis::AffinitySpec& spec) {
    json j;
    j["columns"] = spec.columns;
    j["weights"] = spec.weights;
    j["kernel"] = std::string(analysis::to_string(spec.kernel));
    if (spec.sigma) j["sigma"] = *spec.sigma;
    j["normalization"] = json::array();
    for (auto n : spec.normalization) {
        j["normalization"].push_back(std::string(analysis::to_string(n)));
    }
    return j;
}

analysis::AffinitySpec spec_from_json(const json& j) {
    analysis::AffinitySpec spec;
    try {
        spec.columns = j.at("columns").get<std::vector<std::string>>();
        spec.weights = j.value("weights", std::vector<double>{});
        spec.kernel = analysis::kernel_from_string(j.value("kernel", std::string("dot_product")));
        if (j.contains("sigma") && !j.at("sigma").is_null()) spec.sigma = j.at("sigma").get<double>();
        for (const auto& n : j.value("normalization", std::vector<std::string>{})) {
            spec.normalization.insert(analysis::normalization_from_string(n));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, std::string("bad affinity spec: ") + e.what());
    }
    return spec;
}

json node_config_to_json(const NodeConfig& c) {
    json j;
    j["command"] = c.command;
    if (c.host) {
        j["host"] = *c.host;
        j["port"] = c.port;
    }
    j["workers"] = c.workers;
    if (c.descriptor) j["descriptor"] = descriptor_json(*c.descriptor);
    return j;
}

NodeConfig node_config_from_json(const json& j) {
    NodeConfig c;
    try {
        c.command = j.value("command", std::vector<std::string>{});
        if (j.contains("host")) {
            c.host = j.at("host").get<std::string>();
            c.port = j.at("port").get<int>();
        }
        c.workers = j.value("workers", std::size_t{1});
        if (j.contains("descriptor")) c.descriptor = node::parse_descriptor(j.at("descriptor"));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, std::string("bad node config: ") + e.what());
    }
    if (c.command.empty() && !c.host) {
        throw Error(ErrorCode::invalid_argument, "node config needs a command or a host");
    }
    if (c.workers == 0) {
        throw Error(ErrorCode::invalid_argument, "node config needs at least one worker");
    }
    return c;
}

void save_project(const Project& project, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir / "regions", ec);
    fs::create_directories(dir / "runs", ec);
    if (ec) {
        throw Error(ErrorCode::io_error, "cannot create project folder " + dir.string());
    }
    const auto& t = project.table;
    json doc;
    doc["format"] = kFormat;
    doc["version"] = kProjectVersion;
    doc["id"] = project.id;
    doc["variables"] = json::array();
    for (const auto& v : t.variables()) doc["variables"].push_back(variable_to_json(v));
    doc["rows"] = json::array();
    for (const auto& r : t.rows()) {
        json row{{"id", core::to_int(r.id)}, {"status", std::string(core::to_string(r.status))}};
        if (r.artifact_ref) row["artifact"] = *r.artifact_ref;
        if (r.flags) row["flags"] = r.flags;
        if (!r.message.empty()) row["message"] = r.message;
        doc["rows"].push_back(std::move(row));
    }
    doc["next_row_id"] = t.next_row_id();
    doc["groups"] = json::array();
    for (const auto& g : t.groups()) doc["groups"].push_back({{"name", g.name}, {"members", g.members}});
    doc["regions"] = json::array();
    for (const auto& [name, r] : project.regions) doc["regions"].push_back(name);
    if (project.node) doc["node"] = node_config_to_json(*project.node);
    doc["labelings"] = json::array();
    for (const auto& l : project.labelings) doc["labelings"].push_back({{"column", l.column}, {"labels", l.labels}});
    doc["embeddings"] = json::array();
    for (const auto& e : project.embeddings) {
        json ej{{"name", e.name}, {"spec", spec_to_json(e.spec)}, {"eigenvalues", e.eigenvalues},
                {"degenerate_axes", e.degenerate_axes}};
        ej["rows"] = json::array();
        for (auto id : e.rows) ej["rows"].push_back(core::to_int(id));
        if (e.sigma) ej["sigma"] = *e.sigma;
        doc["embeddings"].push_back(std::move(ej));
    }
    doc["properties"] = project.properties;

    for (const auto& [name, r] : project.regions) {
        if (!valid_name(name)) {
            throw Error(ErrorCode::invalid_argument, "invalid region name '" + name + "'");
        }
        region::write_region_file(dir / "regions" / (name + std::string(kRegionSuffix)), r);
    }
    // Drop region files that are no longer part of the project.
    for (const auto& entry : fs::directory_iterator(dir / "regions")) {
        const auto file = entry.path().filename().string();
        if (file.ends_with(kRegionSuffix) &&
            !project.regions.contains(file.substr(0, file.size() - kRegionSuffix.size()))) {
            fs::remove(entry.path(), ec);
        }
    }
    std::ostringstream csv;
    core::write_csv(csv, t);
    write_file(dir / "table.csv", csv.str());
    write_file(dir / "project.json", doc.dump(2) + "\n");
}

Project load_project(const fs::path& dir) {
    if (!fs::exists(dir / "project.json")) {
        throw Error(ErrorCode::not_found, "no project at " + dir.string());
    }
    json doc;
    try {
        doc = json::parse(read_file(dir / "project.json"));
    } catch (const json::exception& e) {
        parse_fail("project.json is not valid JSON: " + std::string(e.what()));
    }
    if (!doc.is_object() || doc.value("format", std::string()) != kFormat) {
        parse_fail("project.json is not a paraspace project");
    }
    if (!doc.contains("version") || doc["version"] != kProjectVersion) {
        parse_fail("unsupported project version " + (doc.contains("version") ? doc["version"].dump() : "none") +
                   "; expected " + std::to_string(kProjectVersion));
    }
    Project p;
    try {
        p.id = doc.at("id").get<std::string>();
        std::vector<core::Variable> vars;
        for (const auto& v : doc.at("variables")) vars.push_back(variable_from_json(v));

        core::DataTable imported;
        if (!vars.empty()) {
            std::istringstream csv(read_file(dir / "table.csv"));
            imported = core::read_csv(csv, vars);
        }
        const auto& meta = doc.at("rows");
        if (meta.size() != imported.row_count()) {
            parse_fail("table.csv has " + std::to_string(imported.row_count()) + " rows, project.json lists " +
                       std::to_string(meta.size()));
        }
        p.table = core::DataTable::create(vars);
        for (std::size_t i = 0; i < meta.size(); ++i) {
            const auto& m = meta[i];
            core::Configuration row;
            row.id = core::RowId{m.at("id").get<std::uint64_t>()};
            row.status = core::status_from_string(m.at("status").get<std::string>());
            if (m.contains("artifact")) row.artifact_ref = m.at("artifact").get<std::string>();
            row.flags = m.value("flags", 0U);
            row.message = m.value("message", std::string());
            const auto& src = imported.rows()[i];
            // read_csv orders cells by schema, which matches the variable order here.
            row.values = src.values;
            if (row.artifact_ref) {
                if (fs::exists(dir / *row.artifact_ref)) {
                    row.flags &= ~core::row_flag::artifact_missing;
                } else {
                    row.flags |= core::row_flag::artifact_missing;
                }
            }
            p.table.restore_row(std::move(row));
        }
        p.table.set_next_row_id(doc.at("next_row_id").get<std::uint64_t>());
        for (const auto& g : doc.value("groups", json::array())) {
            p.table.add_group({g.at("name").get<std::string>(), g.at("members").get<std::vector<std::string>>()});
        }
        for (const auto& name : doc.value("regions", json::array())) {
            const auto n = name.get<std::string>();
            if (!valid_name(n)) {
                parse_fail("invalid region name '" + n + "'");
            }
            p.regions.emplace(n, region::read_region_file(dir / "regions" / (n + std::string(kRegionSuffix))));
        }
        if (doc.contains("node")) p.node = node_config_from_json(doc.at("node"));
        for (const auto& l : doc.value("labelings", json::array())) {
            p.labelings.push_back({l.at("column").get<std::string>(), l.at("labels").get<std::vector<std::string>>()});
        }
        for (const auto& e : doc.value("embeddings", json::array())) {
            EmbeddingRecord r;
            r.name = e.at("name").get<std::string>();
            r.spec = spec_from_json(e.at("spec"));
            for (const auto& id : e.at("rows")) r.rows.push_back(core::RowId{id.get<std::uint64_t>()});
            r.eigenvalues = e.at("eigenvalues").get<std::vector<double>>();
            if (e.contains("sigma")) r.sigma = e.at("sigma").get<double>();
            r.degenerate_axes = e.value("degenerate_axes", false);
            p.embeddings.push_back(std::move(r));
        }
        p.properties = doc.value("properties", std::map<std::string, std::string>{});
    } catch (const json::exception& e) {
        parse_fail("malformed project.json: " + std::string(e.what()));
    }
    return p;
}

fs::path project_root() {
    if (const char* home = std::getenv("PARASPACE_HOME"); home != nullptr && *home != '\0') {
        return fs::path(home);
    }
    return fs::current_path();
}

fs::path resolve_project(const fs::path& name) {
    return name.is_absolute() ? name : project_root() / name;
}

} // namespace paraspace::service
