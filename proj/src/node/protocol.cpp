#include "paraspace/node/protocol.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "paraspace/core/csv.hpp"
#include "paraspace/error.hpp"

namespace paraspace::node {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& message) {
    throw Error(ErrorCode::protocol_error, message);
}

const json& require(const json& obj, const char* key) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        fail(std::string("message lacks '") + key + "'");
    }
    return *it;
}

std::string require_string(const json& obj, const char* key) {
    const json& v = require(obj, key);
    if (!v.is_string()) {
        fail(std::string("'") + key + "' must be a string");
    }
    return v.get<std::string>();
}

std::vector<OutputSpec> parse_outputs(const json& msg, const char* key) {
    std::vector<OutputSpec> out;
    const auto it = msg.find(key);
    if (it == msg.end()) {
        return out;
    }
    if (!it->is_array()) {
        fail(std::string("'") + key + "' must be an array");
    }
    for (const auto& f : *it) {
        if (!f.is_object()) {
            fail(std::string("'") + key + "' entries must be objects");
        }
        OutputSpec spec;
        spec.name = require_string(f, "name");
        const auto arity = f.contains("arity") ? require_string(f, "arity") : std::string("scalar");
        if (arity == "scalar") {
            spec.arity = Arity::scalar;
        } else if (arity == "vector") {
            spec.arity = Arity::vector;
        } else {
            fail("unknown arity '" + arity + "'");
        }
        out.push_back(std::move(spec));
    }
    return out;
}

ordered_json params_json(const Params& params) {
    ordered_json p = ordered_json::object();
    for (const auto& [name, value] : params) {
        p[name] = value;
    }
    return p;
}

constexpr std::string_view kB64 =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

} // namespace

std::string_view to_string(Capability cap) {
    switch (cap) {
    case Capability::compute_solution: return "compute_solution";
    case Capability::display_plot: return "display_plot";
    case Capability::file_io: return "file_io";
    case Capability::compute_feature: return "compute_feature";
    }
    return "compute_solution";
}

std::optional<Capability> capability_from_string(std::string_view text) {
    for (auto cap : {Capability::compute_solution, Capability::display_plot, Capability::file_io,
                     Capability::compute_feature}) {
        if (to_string(cap) == text) {
            return cap;
        }
    }
    return std::nullopt;
}

const OutputSpec* ComputeNodeDescriptor::feature(std::string_view feature_name) const {
    const auto it = std::find_if(features.begin(), features.end(),
                                 [&](const OutputSpec& f) { return f.name == feature_name; });
    return it == features.end() ? nullptr : &*it;
}

bool ComputeNodeDescriptor::has_plot(std::string_view plot) const {
    return std::find(plots.begin(), plots.end(), plot) != plots.end();
}

ComputeNodeDescriptor parse_descriptor(const json& msg) {
    if (!msg.is_object()) {
        fail("capabilities message must be an object");
    }
    ComputeNodeDescriptor d;
    d.name = require_string(msg, "name");
    if (d.name.empty()) {
        fail("node name must not be empty");
    }

    const json& params = require(msg, "parameters");
    if (!params.is_array()) {
        fail("'parameters' must be an array");
    }
    std::set<std::string> seen;
    for (const auto& p : params) {
        if (!p.is_object()) {
            fail("parameter entries must be objects");
        }
        ParameterSpec spec;
        spec.name = require_string(p, "name");
        if (p.contains("description")) {
            spec.description = require_string(p, "description");
        }
        if (p.contains("default")) {
            const json& def = p.at("default");
            if (!def.is_number() || !std::isfinite(def.get<double>())) {
                fail("default of '" + spec.name + "' must be a finite number");
            }
            spec.default_value = def.get<double>();
        }
        if (!seen.insert(spec.name).second) {
            fail("duplicate parameter '" + spec.name + "'");
        }
        d.parameters.push_back(std::move(spec));
    }

    const json& caps = require(msg, "capabilities");
    if (!caps.is_array()) {
        fail("'capabilities' must be an array");
    }
    for (const auto& c : caps) {
        if (!c.is_string()) {
            fail("capabilities must be strings");
        }
        const auto cap = capability_from_string(c.get<std::string>());
        if (!cap) {
            fail("unknown capability '" + c.get<std::string>() + "'");
        }
        d.capabilities.insert(*cap);
    }
    if (d.capabilities.empty()) {
        fail("node declares no capabilities");
    }

    if (const auto it = msg.find("plots"); it != msg.end()) {
        if (!it->is_array()) {
            fail("'plots' must be an array");
        }
        for (const auto& p : *it) {
            if (!p.is_string()) {
                fail("plot names must be strings");
            }
            d.plots.push_back(p.get<std::string>());
        }
    }
    d.features = parse_outputs(msg, "features");
    d.responses = parse_outputs(msg, "responses");

    std::set<std::string> outputs;
    for (const auto& p : d.plots) {
        if (!outputs.insert("plot:" + p).second) {
            fail("duplicate plot '" + p + "'");
        }
    }
    for (const auto& f : d.features) {
        if (!outputs.insert("feature:" + f.name).second) {
            fail("duplicate feature '" + f.name + "'");
        }
    }
    for (const auto& r : d.responses) {
        if (!outputs.insert("response:" + r.name).second) {
            fail("duplicate response '" + r.name + "'");
        }
    }
    return d;
}

ordered_json descriptor_message(const ComputeNodeDescriptor& d, std::int64_t id) {
    ordered_json msg;
    msg["type"] = "capabilities";
    msg["id"] = id;
    msg["name"] = d.name;
    msg["parameters"] = ordered_json::array();
    for (const auto& p : d.parameters) {
        msg["parameters"].push_back(
            {{"name", p.name}, {"description", p.description}, {"default", p.default_value}});
    }
    msg["capabilities"] = ordered_json::array();
    for (auto cap : d.capabilities) {
        msg["capabilities"].push_back(std::string(to_string(cap)));
    }
    msg["plots"] = d.plots;
    auto outputs = [](const std::vector<OutputSpec>& list) {
        ordered_json arr = ordered_json::array();
        for (const auto& o : list) {
            arr.push_back({{"name", o.name}, {"arity", o.arity == Arity::scalar ? "scalar" : "vector"}});
        }
        return arr;
    };
    msg["features"] = outputs(d.features);
    msg["responses"] = outputs(d.responses);
    return msg;
}

std::string encode_hello(std::int64_t id) {
    ordered_json msg;
    msg["type"] = "hello";
    msg["id"] = id;
    msg["version"] = kProtocolVersion;
    return msg.dump();
}

std::string encode_run(std::int64_t id, const Params& params) {
    ordered_json msg;
    msg["type"] = "run";
    msg["id"] = id;
    msg["params"] = params_json(params);
    return msg.dump();
}

std::string encode_feature(std::int64_t id, std::string_view feature, const Params& params,
                           const std::optional<std::string>& artifact) {
    ordered_json msg;
    msg["type"] = "feature";
    msg["id"] = id;
    msg["name"] = feature;
    msg["params"] = params_json(params);
    if (artifact) {
        msg["artifact"] = *artifact;
    }
    return msg.dump();
}

std::string encode_show(std::int64_t id, std::string_view plot, const Params& params) {
    ordered_json msg;
    msg["type"] = "show";
    msg["id"] = id;
    msg["plot"] = plot;
    msg["params"] = params_json(params);
    return msg.dump();
}

Reply parse_reply(std::string_view line) {
    json msg;
    try {
        msg = json::parse(line.begin(), line.end());
    } catch (const json::exception& e) {
        fail(std::string("malformed message: ") + e.what());
    }
    if (!msg.is_object()) {
        fail("message must be a JSON object");
    }
    const std::string type = require_string(msg, "type");
    const json& id = require(msg, "id");
    if (!id.is_number_integer()) {
        fail("'id' must be an integer");
    }
    Reply reply{ReplyType::result, id.get<std::int64_t>(), std::move(msg)};
    if (type == "capabilities") {
        reply.type = ReplyType::capabilities;
    } else if (type == "result") {
        reply.type = ReplyType::result;
    } else if (type == "image") {
        reply.type = ReplyType::image;
    } else if (type == "error") {
        reply.type = ReplyType::error;
    } else {
        fail("unexpected message type '" + type + "'");
    }
    return reply;
}

std::map<std::string, Value> parse_values(const json& body) {
    const json& values = require(body, "values");
    if (!values.is_object()) {
        fail("'values' must be an object");
    }
    std::map<std::string, Value> out;
    for (const auto& [name, v] : values.items()) {
        if (v.is_number()) {
            out.emplace(name, v.get<double>());
        } else if (v.is_array()) {
            std::vector<double> vec;
            vec.reserve(v.size());
            for (const auto& e : v) {
                if (!e.is_number()) {
                    fail("vector value '" + name + "' has a non-numeric entry");
                }
                vec.push_back(e.get<double>());
            }
            out.emplace(name, std::move(vec));
        } else {
            fail("value '" + name + "' must be a number or an array of numbers");
        }
    }
    return out;
}

std::string canonical_params(std::string_view node_name, const Params& params) {
    std::string text(node_name);
    for (const auto& [name, value] : params) {
        text += ';';
        text += name;
        text += '=';
        // -0 becomes 0.
        text += core::format_double(value == 0.0 ? 0.0 : value);
    }
    return text;
}

std::string cache_key(std::string_view node_name, const Params& params) {
    // FNV-1a, 64 bit.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_params(node_name, params)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
        h >>= 4;
    }
    return out;
}

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                                (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                                static_cast<unsigned char>(bytes[i + 2]);
        out += kB64[(n >> 18) & 63];
        out += kB64[(n >> 12) & 63];
        out += kB64[(n >> 6) & 63];
        out += kB64[n & 63];
    }
    if (i < bytes.size()) {
        std::uint32_t n = static_cast<unsigned char>(bytes[i]) << 16;
        if (i + 1 < bytes.size()) {
            n |= static_cast<unsigned char>(bytes[i + 1]) << 8;
        }
        out += kB64[(n >> 18) & 63];
        out += kB64[(n >> 12) & 63];
        out += i + 1 < bytes.size() ? kB64[(n >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    std::array<int, 256> table{};
    table.fill(-1);
    for (std::size_t i = 0; i < kB64.size(); ++i) {
        table[static_cast<unsigned char>(kB64[i])] = static_cast<int>(i);
    }
    if (text.size() % 4 != 0) {
        fail("base64 length is not a multiple of 4");
    }
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int vals[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + static_cast<std::size_t>(k)];
            if (c == '=' && i + 4 == text.size() && k >= 2) {
                vals[k] = 0;
                ++pad;
                continue;
            }
            if (pad > 0) {
                fail("invalid base64 padding");
            }
            vals[k] = table[static_cast<unsigned char>(c)];
            if (vals[k] < 0) {
                fail("invalid base64 character");
            }
        }
        const std::uint32_t n = (static_cast<std::uint32_t>(vals[0]) << 18) |
                                (static_cast<std::uint32_t>(vals[1]) << 12) |
                                (static_cast<std::uint32_t>(vals[2]) << 6) |
                                static_cast<std::uint32_t>(vals[3]);
        out += static_cast<char>((n >> 16) & 0xFF);
        if (pad < 2) {
            out += static_cast<char>((n >> 8) & 0xFF);
        }
        if (pad < 1) {
            out += static_cast<char>(n & 0xFF);
        }
    }
    return out;
}

} // namespace paraspace::node
