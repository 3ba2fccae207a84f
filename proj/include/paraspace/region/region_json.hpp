#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paraspace/region/region.hpp"

namespace paraspace::region {

/// JSON document for a region, e.g. {"type":"interval","var":"x","lo":0,"hi":1}.
/// An infinite ball order is written as the string "inf".
nlohmann::json to_json(const Region& region);

/// Throws ParseError on schema violations.
Region from_json(const nlohmann::json& doc);

/// A region loaded against a set of known variable names. Names the
/// document references but the target does not declare are kept in
/// `unresolved`; binding is deferred until the region is evaluated.
struct RegionDocument {
    Region region;
    std::vector<std::string> unresolved;
};

RegionDocument load_region(const nlohmann::json& doc,
                           const std::vector<std::string>& known_variables);

void write_region_file(const std::filesystem::path& path, const Region& region);
Region read_region_file(const std::filesystem::path& path);

} // namespace paraspace::region
