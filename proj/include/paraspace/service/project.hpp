#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paraspace/analysis/analysis.hpp"
#include "paraspace/core/table.hpp"
#include "paraspace/node/protocol.hpp"
#include "paraspace/region/region.hpp"

namespace paraspace::service {

inline constexpr int kProjectVersion = 1;

/// How to reach the compute node. A spawned command may use the placeholder
/// {runs}, replaced by the project's runs/ directory.
struct NodeConfig {
    std::vector<std::string> command;
    std::optional<std::string> host;
    int port = 0;
    std::size_t workers = 1;
    std::optional<node::ComputeNodeDescriptor> descriptor;

    friend bool operator==(const NodeConfig&, const NodeConfig&) = default;
};

/// A label column and the labels assigned in it, in order of first use.
struct Labeling {
    std::string column;
    std::vector<std::string> labels;

    friend bool operator==(const Labeling&, const Labeling&) = default;
};

/// Coordinates live in the embed_x/embed_y table columns.
struct EmbeddingRecord {
    std::string name;
    analysis::AffinitySpec spec;
    std::vector<core::RowId> rows;
    std::vector<double> eigenvalues;
    std::optional<double> sigma;
    bool degenerate_axes = false;

    friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

struct Project {
    std::string id;
    core::DataTable table;
    std::map<std::string, region::Region> regions;
    std::optional<NodeConfig> node;
    std::vector<Labeling> labelings;
    std::vector<EmbeddingRecord> embeddings;
    std::map<std::string, std::string> properties;

    /// Records a label assignment in `labelings`, creating the label column
    /// when needed. Returns the number of rows touched.
    std::size_t label_rows(std::span<const core::RowId> rows, const std::string& column, const std::string& label);

    friend bool operator==(const Project&, const Project&) = default;
};

/// Project ids and region names: letters, digits, '_', '-', '.', not
/// starting with '.'.
bool valid_name(std::string_view name);

/// Writes project.json, table.csv and regions/*.region.json; creates runs/.
void save_project(const Project& project, const std::filesystem::path& dir);

/// Throws ParseError (with the found version) on format mismatch, IoError
/// when the folder is unreadable. Rows whose artifact file is gone get the
/// artifact_missing flag.
Project load_project(const std::filesystem::path& dir);

/// PARASPACE_HOME when set, else the current directory.
std::filesystem::path project_root();
/// Relative names resolve against project_root().
std::filesystem::path resolve_project(const std::filesystem::path& name);

nlohmann::json variable_to_json(const core::Variable& v);
core::Variable variable_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const analysis::AffinitySpec& spec);
analysis::AffinitySpec spec_from_json(const nlohmann::json& j);
nlohmann::json node_config_to_json(const NodeConfig& c);
NodeConfig node_config_from_json(const nlohmann::json& j);

} // namespace paraspace::service
