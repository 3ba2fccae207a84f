#include "paraspace/region/region_json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "paraspace/error.hpp"

namespace paraspace::region {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& message) {
    throw Error(ErrorCode::parse_error, "region document: " + message);
}

const json& field(const json& doc, const char* name) {
    const auto it = doc.find(name);
    if (it == doc.end()) {
        fail(std::string("missing field '") + name + "'");
    }
    return *it;
}

double number(const json& doc, const char* name) {
    const json& v = field(doc, name);
    if (!v.is_number()) {
        fail(std::string("field '") + name + "' must be a number");
    }
    return v.get<double>();
}

std::vector<Region> children_of(const json& doc) {
    const json& list = field(doc, "children");
    if (!list.is_array()) {
        fail("'children' must be an array");
    }
    std::vector<Region> out;
    out.reserve(list.size());
    for (const auto& c : list) {
        out.push_back(from_json(c));
    }
    return out;
}

Region parse(const json& doc) {
    if (!doc.is_object()) {
        fail("expected an object");
    }
    const json& type = field(doc, "type");
    if (!type.is_string()) {
        fail("'type' must be a string");
    }
    const auto kind = type.get<std::string>();
    if (kind == "all") {
        return Region::all();
    }
    if (kind == "interval") {
        const json& var = field(doc, "var");
        if (!var.is_string()) {
            fail("'var' must be a string");
        }
        return Region::interval(var.get<std::string>(), number(doc, "lo"), number(doc, "hi"));
    }
    if (kind == "ball") {
        const json& vars = field(doc, "vars");
        const json& center = field(doc, "center");
        if (!vars.is_array() || !center.is_array()) {
            fail("'vars' and 'center' must be arrays");
        }
        std::vector<std::string> names;
        std::vector<double> c;
        for (const auto& v : vars) {
            if (!v.is_string()) {
                fail("'vars' entries must be strings");
            }
            names.push_back(v.get<std::string>());
        }
        for (const auto& v : center) {
            if (!v.is_number()) {
                fail("'center' entries must be numbers");
            }
            c.push_back(v.get<double>());
        }
        double p = 2.0;
        if (const auto it = doc.find("p"); it != doc.end()) {
            if (it->is_string() && it->get<std::string>() == "inf") {
                p = kInfinity;
            } else if (it->is_number()) {
                p = it->get<double>();
            } else {
                fail("'p' must be a number or \"inf\"");
            }
        }
        return Region::ball(std::move(names), std::move(c), number(doc, "radius"), p);
    }
    if (kind == "and") {
        return Region::conjunction(children_of(doc));
    }
    if (kind == "or") {
        return Region::disjunction(children_of(doc));
    }
    if (kind == "not") {
        return Region::negation(from_json(field(doc, "child")));
    }
    fail("unknown type '" + kind + "'");
}

} // namespace

json to_json(const Region& region) {
    switch (region.kind()) {
    case Kind::all:
        return {{"type", "all"}};
    case Kind::interval: {
        const auto& n = region.as_interval();
        return {{"type", "interval"}, {"var", n.var}, {"lo", n.lo}, {"hi", n.hi}};
    }
    case Kind::ball: {
        const auto& n = region.as_ball();
        json doc = {{"type", "ball"}, {"vars", n.vars}, {"center", n.center}, {"radius", n.radius}};
        if (n.p == kInfinity) {
            doc["p"] = "inf";
        } else {
            doc["p"] = n.p;
        }
        return doc;
    }
    case Kind::conjunction:
    case Kind::disjunction: {
        json list = json::array();
        for (const auto& c : region.children()) {
            list.push_back(to_json(c));
        }
        return {{"type", region.kind() == Kind::conjunction ? "and" : "or"},
                {"children", std::move(list)}};
    }
    case Kind::negation:
        return {{"type", "not"}, {"child", to_json(region.child())}};
    }
    return {};
}

Region from_json(const json& doc) {
    try {
        return parse(doc);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::parse_error) {
            throw;
        }
        // Invariant violations in an otherwise well-formed document.
        throw Error(ErrorCode::parse_error, std::string("region document: ") + e.what());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse_error, std::string("region document: ") + e.what());
    }
}

RegionDocument load_region(const json& doc, const std::vector<std::string>& known_variables) {
    RegionDocument out{from_json(doc), {}};
    for (const auto& name : out.region.variables()) {
        if (std::find(known_variables.begin(), known_variables.end(), name) ==
            known_variables.end()) {
            out.unresolved.push_back(name);
        }
    }
    return out;
}

void write_region_file(const std::filesystem::path& path, const Region& region) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::io_error, "cannot write " + path.string());
    }
    out << to_json(region).dump(2) << '\n';
}

Region read_region_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot read " + path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse_error, path.string() + ": " + e.what());
    }
    return from_json(doc);
}

} // namespace paraspace::region
