#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paraspace/node/client.hpp"
#include "paraspace/sampling/sampling.hpp"
#include "paraspace/service/project.hpp"

namespace paraspace::service {

/// Throws UnknownVariable or TypeMismatch unless every region variable is a
/// factor of the table.
void check_sample_region(const core::DataTable& table, const region::Region& region);

/// Samples and appends the points as pending rows. Region variables must be
/// factors of the table.
std::vector<core::RowId> sample_into(Project& project, const sampling::SampleRequest& request);

/// Connects one client per configured worker. Throws NodeUnavailable when
/// no node is configured or reachable.
std::vector<std::unique_ptr<node::NodeClient>> connect_node(const Project& project, const std::filesystem::path& dir,
                                                            std::size_t count);

/// Handshakes, registers parameters and responses, stores the descriptor.
void configure_node(Project& project, NodeConfig config, const std::filesystem::path& dir);

/// Runs pending rows (all pending when `rows` is empty). Progress lines go
/// to the callback.
std::vector<node::RunResult> run_rows(Project& project, const std::filesystem::path& dir,
                                      std::vector<core::RowId> rows, const node::ProgressCallback& progress = {});

std::size_t feature_rows(Project& project, const std::filesystem::path& dir, const std::string& feature,
                         std::vector<core::RowId> rows);

/// Computes an embedding, writes embed_x/embed_y and records it under
/// `name` (replacing an earlier record of that name).
const EmbeddingRecord& embed_rows(Project& project, std::vector<core::RowId> rows, const analysis::AffinitySpec& spec,
                                  const std::string& name = "default");

/// A JSON region document, or the name of a saved region.
region::Region resolve_region(const Project& project, const nlohmann::json& ref);

/// Region text from the command line or a query string: inline JSON, a
/// saved region name, or (when allowed) a .region.json file path.
region::Region parse_region_argument(const Project& project, const std::string& text, bool allow_files);

std::vector<core::RowId> rows_with_label(const core::DataTable& table, const std::string& column,
                                         const std::string& label);

nlohmann::json row_to_json(const core::DataTable& table, const core::Configuration& row);
nlohmann::json embedding_to_json(const EmbeddingRecord& e);
nlohmann::json project_summary(const Project& project);

} // namespace paraspace::service
