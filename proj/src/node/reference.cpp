#include "paraspace/node/reference.hpp"

#include <cerrno>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

#include <unistd.h>

#include "paraspace/error.hpp"

namespace paraspace::node {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double param(const Params& p, const char* name) {
    return p.at(name);
}

/// Plots y(x) samples into a w×h frame with fixed y limits and a zero axis.
GrayImage line_plot(const std::vector<double>& ys, double y_min, double y_max) {
    GrayImage img(320, 200);
    const auto to_row = [&](double y) {
        const double f = (y_max - y) / (y_max - y_min);
        return static_cast<long>(std::lround(f * (img.height - 1)));
    };
    img.line(0, to_row(0.0), img.width - 1, to_row(0.0), 160);
    img.line(0, 0, 0, img.height - 1, 160);
    for (std::size_t i = 1; i < ys.size(); ++i) {
        const auto x0 = static_cast<long>((i - 1) * (img.width - 1) / (ys.size() - 1));
        const auto x1 = static_cast<long>(i * (img.width - 1) / (ys.size() - 1));
        img.line(x0, to_row(ys[i - 1]), x1, to_row(ys[i]), 0);
    }
    return img;
}

class SineNode final : public ReferenceNode {
public:
    SineNode() {
        d_.name = "sine";
        d_.parameters = {{"phi", "phase shift", 0.0}, {"f", "frequency", 1.0}, {"a", "amplitude", 1.0}};
        d_.capabilities = {Capability::compute_solution, Capability::display_plot, Capability::compute_feature};
        d_.plots = {"wave"};
        d_.features = {{"v0", Arity::scalar}, {"v_half", Arity::scalar}};
        d_.responses = {{"v", Arity::vector}};
    }

    const ComputeNodeDescriptor& descriptor() const override { return d_; }

    static std::vector<double> wave(const Params& p) {
        const double a = param(p, "a");
        const double f = param(p, "f");
        const double phi = param(p, "phi");
        std::vector<double> v(101);
        for (int k = 0; k <= 100; ++k) {
            v[static_cast<std::size_t>(k)] = a * std::sin(kTwoPi * f * (k / 100.0) + phi);
        }
        return v;
    }

    ordered_json run(const Params& p) override {
        if (param(p, "f") < 0.0) {
            throw Error(ErrorCode::invalid_value, "frequency must be non-negative");
        }
        ordered_json body;
        body["values"]["v"] = wave(p);
        return body;
    }

    Value feature(std::string_view name, const Params& p, const std::optional<std::string>&) override {
        const double a = param(p, "a");
        const double phi = param(p, "phi");
        if (name == "v0") {
            return a * std::sin(phi);
        }
        if (name == "v_half") {
            return a * std::sin(std::numbers::pi * param(p, "f") + phi);
        }
        throw Error(ErrorCode::unknown_feature, "unknown feature");
    }

    GrayImage plot(std::string_view name, const Params& p) override {
        if (name != "wave") {
            throw Error(ErrorCode::unsupported_capability, "unknown plot");
        }
        return line_plot(wave(p), -5.0, 5.0);
    }

private:
    ComputeNodeDescriptor d_;
};

/// x'' + c x' + k x = 0, x(0) = 1, x'(0) = 0.
double oscillator(double k, double c, double t) {
    const double disc = c * c - 4.0 * k;
    const double decay = std::exp(-0.5 * c * t);
    if (std::abs(disc) < 1e-12) {
        return decay * (1.0 + 0.5 * c * t);
    }
    if (disc < 0.0) {
        const double w = 0.5 * std::sqrt(-disc);
        return decay * (std::cos(w * t) + c / (2.0 * w) * std::sin(w * t));
    }
    const double b = 0.5 * std::sqrt(disc);
    return 0.5 * ((1.0 + c / (2.0 * b)) * std::exp((b - 0.5 * c) * t) +
                  (1.0 - c / (2.0 * b)) * std::exp((-b - 0.5 * c) * t));
}

double sign(double x) {
    return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
}

class OscillatorNode final : public ReferenceNode {
public:
    explicit OscillatorNode(NodeOptions options) : options_(std::move(options)) {
        d_.name = "oscillator";
        d_.parameters = {{"k", "stiffness", 1.0}, {"c", "damping", 1.0}};
        d_.capabilities = {Capability::compute_solution, Capability::display_plot, Capability::file_io,
                           Capability::compute_feature};
        d_.plots = {"trajectory"};
        d_.features = {{"regime", Arity::scalar}, {"sign_trace", Arity::vector}, {"trajectory", Arity::vector}};
        d_.responses = {{"x", Arity::vector}, {"min_x", Arity::scalar}};
    }

    const ComputeNodeDescriptor& descriptor() const override { return d_; }

    static constexpr int kSamples = 200;
    static constexpr double kStep = 0.5;

    static std::vector<double> solution(const Params& p) {
        std::vector<double> x(kSamples);
        for (int i = 0; i < kSamples; ++i) {
            x[static_cast<std::size_t>(i)] = oscillator(param(p, "k"), param(p, "c"), i * kStep);
        }
        return x;
    }

    ordered_json run(const Params& p) override {
        if (param(p, "k") < 0.0 || param(p, "c") < 0.0) {
            throw Error(ErrorCode::invalid_value, "k and c must be non-negative");
        }
        const auto x = solution(p);
        const std::string key = cache_key(d_.name, p);
        std::filesystem::create_directories(options_.artifact_dir);
        const auto file = options_.artifact_dir / (key + ".bin");
        std::ofstream out(file, std::ios::binary);
        out.write(reinterpret_cast<const char*>(x.data()), static_cast<std::streamsize>(x.size() * sizeof(double)));
        if (!out) {
            throw Error(ErrorCode::io_error, "cannot write " + file.string());
        }
        ordered_json body;
        body["values"]["x"] = x;
        body["values"]["min_x"] = *std::min_element(x.begin(), x.end());
        body["artifact"] = (options_.artifact_dir.filename() / (key + ".bin")).generic_string();
        return body;
    }

    std::optional<std::vector<double>> load(const std::optional<std::string>& artifact) const {
        if (!artifact) {
            return std::nullopt;
        }
        std::ifstream in(options_.artifact_dir.parent_path() / *artifact, std::ios::binary);
        if (!in) {
            return std::nullopt;
        }
        std::vector<double> x(kSamples);
        in.read(reinterpret_cast<char*>(x.data()), static_cast<std::streamsize>(x.size() * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(x.size() * sizeof(double))) {
            return std::nullopt;
        }
        return x;
    }

    Value feature(std::string_view name, const Params& p, const std::optional<std::string>& artifact) override {
        if (name == "regime") {
            const double c = param(p, "c");
            return sign(c * c - 4.0 * param(p, "k"));
        }
        if (name == "sign_trace") {
            auto x = load(artifact);
            if (!x) {
                x = solution(p);
            }
            for (auto& v : *x) {
                v = sign(v);
            }
            return *x;
        }
        if (name == "trajectory") {
            std::vector<double> x(64);
            for (std::size_t i = 0; i < x.size(); ++i) {
                x[i] = oscillator(param(p, "k"), param(p, "c"), 10.0 * static_cast<double>(i) / 63.0);
            }
            return x;
        }
        throw Error(ErrorCode::unknown_feature, "unknown feature");
    }

    GrayImage plot(std::string_view name, const Params& p) override {
        if (name != "trajectory") {
            throw Error(ErrorCode::unsupported_capability, "unknown plot");
        }
        std::vector<double> x(161);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = oscillator(param(p, "k"), param(p, "c"), 20.0 * static_cast<double>(i) / 160.0);
        }
        return line_plot(x, -1.2, 1.2);
    }

private:
    NodeOptions options_;
    ComputeNodeDescriptor d_;
};

std::string error_line(std::int64_t id, const std::string& message) {
    ordered_json msg;
    msg["type"] = "error";
    msg["id"] = id;
    msg["message"] = message;
    return msg.dump();
}

Params read_params(const ComputeNodeDescriptor& d, const json& msg) {
    Params params;
    for (const auto& p : d.parameters) {
        params[p.name] = p.default_value;
    }
    const auto it = msg.find("params");
    if (it == msg.end()) {
        return params;
    }
    if (!it->is_object()) {
        throw Error(ErrorCode::protocol_error, "'params' must be an object");
    }
    for (const auto& [name, value] : it->items()) {
        if (!params.contains(name)) {
            throw Error(ErrorCode::unknown_variable, "unknown parameter '" + name + "'");
        }
        if (!value.is_number()) {
            throw Error(ErrorCode::invalid_value, "parameter '" + name + "' must be a number");
        }
        params[name] = value.get<double>();
    }
    return params;
}

std::string string_field(const json& msg, const char* key) {
    const auto it = msg.find(key);
    if (it == msg.end() || !it->is_string()) {
        throw Error(ErrorCode::protocol_error, std::string("'") + key + "' must be a string");
    }
    return it->get<std::string>();
}

void write_all(int fd, const std::string& line) {
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return;
        }
        off += static_cast<std::size_t>(n);
    }
}

} // namespace

std::unique_ptr<ReferenceNode> make_reference_node(std::string_view kind, const NodeOptions& options) {
    if (kind == "sine") {
        return std::make_unique<SineNode>();
    }
    if (kind == "oscillator") {
        return std::make_unique<OscillatorNode>(options);
    }
    throw Error(ErrorCode::invalid_argument, "unknown node kind '" + std::string(kind) + "'");
}

void serve(ReferenceNode& node, int in_fd, int out_fd, const NodeOptions& options) {
    std::string buffer;
    int runs = 0;
    char chunk[65536];
    for (;;) {
        std::size_t nl;
        while ((nl = buffer.find('\n')) == std::string::npos) {
            const ssize_t n = ::read(in_fd, chunk, sizeof(chunk));
            if (n < 0 && errno == EINTR) {
                continue;
            }
            if (n <= 0) {
                return;
            }
            buffer.append(chunk, static_cast<std::size_t>(n));
        }
        const std::string line = buffer.substr(0, nl);
        buffer.erase(0, nl + 1);
        if (line.empty()) {
            continue;
        }

        std::int64_t id = 0;
        std::string reply;
        try {
            json msg;
            try {
                msg = json::parse(line);
            } catch (const json::exception&) {
                throw Error(ErrorCode::protocol_error, "malformed JSON");
            }
            if (!msg.is_object()) {
                throw Error(ErrorCode::protocol_error, "message must be an object");
            }
            if (const auto it = msg.find("id"); it != msg.end() && it->is_number_integer()) {
                id = it->get<std::int64_t>();
            }
            const std::string type = string_field(msg, "type");
            const auto& d = node.descriptor();
            if (type == "hello") {
                if (const auto it = msg.find("version"); it != msg.end() && *it != kProtocolVersion) {
                    throw Error(ErrorCode::protocol_error, "unsupported protocol version");
                }
                reply = descriptor_message(d, id).dump();
            } else if (type == "run") {
                const Params params = read_params(d, msg);
                if (options.die_after && runs >= *options.die_after) {
                    ::_exit(3);
                }
                ++runs;
                if (options.delay_ms > 0) {
                    std::this_thread::sleep_for(std::chrono::milliseconds(options.delay_ms));
                }
                ordered_json out;
                out["type"] = "result";
                out["id"] = id;
                const ordered_json body = node.run(params);
                for (const auto& [k, v] : body.items()) {
                    out[k] = v;
                }
                reply = out.dump();
            } else if (type == "feature") {
                const std::string name = string_field(msg, "name");
                std::optional<std::string> artifact;
                if (msg.contains("artifact")) {
                    artifact = string_field(msg, "artifact");
                }
                const Value v = node.feature(name, read_params(d, msg), artifact);
                ordered_json out;
                out["type"] = "result";
                out["id"] = id;
                std::visit([&](const auto& x) { out["values"][name] = x; }, v);
                reply = out.dump();
            } else if (type == "show") {
                const std::string plot = string_field(msg, "plot");
                const std::string png = encode_png(node.plot(plot, read_params(d, msg)));
                ordered_json out;
                out["type"] = "image";
                out["id"] = id;
                out["format"] = "png";
                out["data"] = base64_encode(png);
                reply = out.dump();
            } else {
                throw Error(ErrorCode::protocol_error, "unknown message type '" + type + "'");
            }
        } catch (const std::exception& e) {
            reply = error_line(id, e.what());
        }
        write_all(out_fd, reply);
    }
}

} // namespace paraspace::node
