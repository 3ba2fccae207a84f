#include "paraspace/service/cli.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "paraspace/core/csv.hpp"
#include "paraspace/region/region_json.hpp"
#include "paraspace/service/operations.hpp"
#include "paraspace/service/server.hpp"

#include <CLI11.hpp>

namespace paraspace::service {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::string part;
    std::istringstream in(text);
    while (std::getline(in, part, sep)) {
        if (!part.empty()) parts.push_back(part);
    }
    return parts;
}

double parse_number(const std::string& text) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || end != text.data() + text.size()) {
        throw Error(ErrorCode::invalid_argument, "not a number: '" + text + "'");
    }
    return v;
}

std::vector<core::RowId> parse_rows(const std::string& text) {
    std::vector<core::RowId> rows;
    for (const auto& part : split(text, ',')) {
        std::uint64_t v = 0;
        const auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc{} || end != part.data() + part.size()) {
            throw Error(ErrorCode::invalid_argument, "not a row id: '" + part + "'");
        }
        rows.push_back(core::RowId{v});
    }
    return rows;
}

std::pair<std::string, std::string> key_value(const std::string& text, char sep = '=') {
    const auto at = text.find(sep);
    if (at == std::string::npos || at == 0) {
        throw Error(ErrorCode::invalid_argument, "expected name" + std::string(1, sep) + "value, got '" + text + "'");
    }
    return {text.substr(0, at), text.substr(at + 1)};
}

/// "x=0:1,y=2:3" in data units.
region::Region parse_rect(const std::string& text) {
    region::Box box;
    for (const auto& part : split(text, ',')) {
        const auto [name, range] = key_value(part);
        const auto [lo, hi] = key_value(range, ':');
        box[name] = {parse_number(lo), parse_number(hi)};
    }
    if (box.empty()) {
        throw Error(ErrorCode::invalid_argument, "empty rectangle");
    }
    return region::Region::box(box);
}

std::map<std::string, std::size_t> parse_levels(const std::string& text) {
    std::map<std::string, std::size_t> levels;
    for (const auto& part : split(text, ',')) {
        const auto [name, k] = key_value(part);
        const double v = parse_number(k);
        if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
            throw Error(ErrorCode::invalid_argument, "levels must be non-negative integers");
        }
        levels[name] = static_cast<std::size_t>(v);
    }
    return levels;
}

struct Loaded {
    fs::path dir;
    Project project;
};

Loaded open_project(const std::string& name) {
    const fs::path dir = resolve_project(name);
    return {dir, load_project(dir)};
}

region::Region region_argument(const Project* project, const std::string& text) {
    if (project) {
        return parse_region_argument(*project, text, true);
    }
    if (fs::exists(text)) {
        return region::read_region_file(text);
    }
    try {
        return region::from_json(json::parse(text));
    } catch (const json::exception&) {
        throw Error(ErrorCode::not_found, "no region file '" + text + "'");
    }
}

void write_points_csv(std::ostream& out, const sampling::PointSet& pts) {
    for (std::size_t k = 0; k < pts.variables.size(); ++k) {
        out << (k ? "," : "") << pts.variables[k];
    }
    out << '\n';
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto p = pts.point(i);
        for (std::size_t k = 0; k < p.size(); ++k) {
            out << (k ? "," : "") << core::format_double(p[k]);
        }
        out << '\n';
    }
}

json cluster_to_json(const analysis::ClusterSummary& s) {
    json factors = json::array();
    for (const auto& f : s.factors) {
        json j{{"name", f.name}, {"min", f.min}, {"max", f.max}, {"modality", std::string(to_string(f.modality))}};
        j["spread"] = f.spread ? json(*f.spread) : json(nullptr);
        factors.push_back(j);
    }
    return {{"label", s.label}, {"rows", s.rows}, {"factors", factors}};
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Parameter-space exploration pipeline"};
    app.require_subcommand(1);

    std::string project_name;
    std::string region_text, rect_text, rows_text, levels_text, method = "uniform";
    std::size_t count = 1;
    std::uint64_t seed = 0;

    auto* init = app.add_subcommand("init", "Create a project folder");
    std::vector<std::string> factors, groups;
    std::string node_command, connect;
    std::size_t workers = 1;
    init->add_option("project", project_name, "Project folder")->required();
    init->add_option("--factor", factors, "Factor column, NAME or NAME=DEFAULT");
    init->add_option("--group", groups, "Dimension group, NAME=a,b,c");
    init->add_option("--node", node_command, "Compute node command line; {runs} expands to the runs folder");
    init->add_option("--connect", connect, "Compute node at HOST:PORT");
    init->add_option("--workers", workers, "Parallel node connections")->check(CLI::PositiveNumber);

    auto* sample = app.add_subcommand("sample", "Sample a region; append to a project or print CSV");
    sample->add_option("project", project_name, "Project folder (omit to print points)");
    sample->add_option("--region", region_text, "Region file, saved region name or inline JSON")->required();
    sample->add_option("--count", count, "Number of points")->check(CLI::PositiveNumber);
    sample->add_option("--seed", seed, "Random seed");
    sample->add_option("--method", method, "uniform, grid or halton");
    sample->add_option("--levels", levels_text, "Grid levels, v=k,...");

    auto* run = app.add_subcommand("run", "Execute pending rows on the compute node");
    run->add_option("project", project_name)->required();
    run->add_option("--rows", rows_text, "Row ids, comma separated (default: all pending)");

    auto* feature = app.add_subcommand("feature", "Add a derived column");
    std::string feature_name, expr;
    feature->add_option("project", project_name)->required();
    feature->add_option("name", feature_name, "Node feature, or column name with --expr")->required();
    feature->add_option("--expr", expr, "Arithmetic over existing columns");
    feature->add_option("--rows", rows_text);

    auto* embed = app.add_subcommand("embed", "Spectral embedding into embed_x/embed_y");
    std::string columns_text, weights_text, kernel = "dot_product", normalize_text, spectrum_path, embed_name = "default";
    std::optional<double> sigma;
    embed->add_option("project", project_name)->required();
    embed->add_option("--columns", columns_text, "Feature columns")->required();
    embed->add_option("--weights", weights_text, "Per-column weights");
    embed->add_option("--kernel", kernel, "dot_product or gaussian");
    embed->add_option("--sigma", sigma, "Gaussian width");
    embed->add_option("--normalize", normalize_text, "center, sphere, l1_row (comma separated)");
    embed->add_option("--rows", rows_text);
    embed->add_option("--name", embed_name);
    embed->add_option("--spectrum", spectrum_path, "Write the eigenvalue spectrum CSV here");

    auto* label = app.add_subcommand("label", "Label rows selected by id, rectangle or region");
    std::string label_text, column = "label", save_region;
    label->add_option("project", project_name)->required();
    label->add_option("--label", label_text)->required();
    label->add_option("--column", column);
    label->add_option("--rows", rows_text);
    label->add_option("--rect", rect_text, "x=lo:hi,y=lo:hi");
    label->add_option("--region", region_text);
    label->add_option("--save-region", save_region, "Also store the selection region under this name");

    auto* summarize = app.add_subcommand("summarize", "Project overview, or factor ranges of one labeled cluster");
    summarize->add_option("project", project_name)->required();
    summarize->add_option("--label", label_text);
    summarize->add_option("--column", column);
    summarize->add_option("--factors", columns_text);

    auto* exporter = app.add_subcommand("export", "Write the table as CSV");
    std::string output;
    exporter->add_option("project", project_name)->required();
    exporter->add_option("-o,--output", output, "Output file (default stdout)");
    exporter->add_option("--region", region_text);
    exporter->add_option("--label", label_text);
    exporter->add_option("--column", column);

    auto* serve = app.add_subcommand("serve", "Serve the REST API over the project root");
    std::string host = "127.0.0.1";
    int port = 8080;
    serve->add_option("--host", host);
    serve->add_option("--port", port);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*init) {
            const fs::path dir = resolve_project(project_name);
            if (fs::exists(dir / "project.json")) {
                throw Error(ErrorCode::invalid_argument, "project already exists at " + dir.string());
            }
            Project p;
            p.id = dir.filename().string();
            for (const auto& f : factors) {
                core::Variable v;
                v.role = core::Role::factor;
                if (const auto at = f.find('='); at != std::string::npos) {
                    v.name = f.substr(0, at);
                    v.default_value = parse_number(f.substr(at + 1));
                } else {
                    v.name = f;
                }
                p.table.add_variable(v);
            }
            fs::create_directories(dir / "runs");
            if (!node_command.empty() || !connect.empty()) {
                NodeConfig config;
                config.workers = workers;
                if (!connect.empty()) {
                    const auto [h, port_text] = key_value(connect, ':');
                    config.host = h;
                    config.port = static_cast<int>(parse_number(port_text));
                } else {
                    config.command = split(node_command, ' ');
                }
                configure_node(p, config, dir);
            }
            for (const auto& g : groups) {
                const auto [name, members] = key_value(g);
                p.table.add_group({name, split(members, ',')});
            }
            save_project(p, dir);
            out << "created " << dir.string() << " with " << p.table.variables().size() << " variables\n";
        } else if (*sample) {
            sampling::SampleRequest request{region::Region::all(), count, sampling::method_from_string(method),
                                            parse_levels(levels_text), seed};
            if (project_name.empty()) {
                request.region = region_argument(nullptr, region_text);
                write_points_csv(out, sampling::sample(request));
            } else {
                auto [dir, p] = open_project(project_name);
                request.region = region_argument(&p, region_text);
                const auto rows = sample_into(p, request);
                save_project(p, dir);
                out << "appended " << rows.size() << " rows";
                if (!rows.empty()) {
                    out << " (" << core::to_int(rows.front()) << ".." << core::to_int(rows.back()) << ")";
                }
                out << '\n';
            }
        } else if (*run) {
            auto [dir, p] = open_project(project_name);
            std::size_t computed = 0, failed = 0;
            run_rows(p, dir, parse_rows(rows_text), [&](const node::RunResult& r, std::size_t done, std::size_t total) {
                (r.status == core::Status::computed ? computed : failed) += 1;
                err << "row " << core::to_int(r.row) << ' ' << to_string(r.status) << " (" << done << '/' << total
                    << ")" << (r.message.empty() ? "" : ": " + r.message) << '\n';
            });
            save_project(p, dir);
            out << "computed " << computed << ", failed " << failed << '\n';
        } else if (*feature) {
            auto [dir, p] = open_project(project_name);
            if (!expr.empty()) {
                p.table.add_derived_variable(feature_name, core::Expression{expr});
                out << "added " << feature_name << " = " << expr << '\n';
            } else {
                const auto n = feature_rows(p, dir, feature_name, parse_rows(rows_text));
                out << "stored " << feature_name << " for " << n << " rows\n";
            }
            save_project(p, dir);
        } else if (*embed) {
            auto [dir, p] = open_project(project_name);
            analysis::AffinitySpec spec;
            spec.columns = split(columns_text, ',');
            for (const auto& w : split(weights_text, ',')) spec.weights.push_back(parse_number(w));
            spec.kernel = analysis::kernel_from_string(kernel);
            spec.sigma = sigma;
            for (const auto& n : split(normalize_text, ',')) spec.normalization.insert(analysis::normalization_from_string(n));
            spec.validate();
            const auto& rec = embed_rows(p, parse_rows(rows_text), spec, embed_name);
            save_project(p, dir);
            if (!spectrum_path.empty()) {
                std::ofstream f(spectrum_path);
                Eigen::VectorXd ev = Eigen::Map<const Eigen::VectorXd>(rec.eigenvalues.data(),
                                                                       static_cast<Eigen::Index>(rec.eigenvalues.size()));
                analysis::write_spectrum_csv(f, ev);
                if (!f) throw Error(ErrorCode::io_error, "cannot write " + spectrum_path);
            }
            out << embedding_to_json(rec).dump(2) << '\n';
        } else if (*label) {
            auto [dir, p] = open_project(project_name);
            const int selectors = int(!rows_text.empty()) + int(!rect_text.empty()) + int(!region_text.empty());
            if (selectors != 1) {
                err << "usage error: label needs exactly one of --rows, --rect, --region\n";
                return 2;
            }
            std::vector<core::RowId> rows;
            std::optional<region::Region> selection;
            if (!rows_text.empty()) {
                rows = parse_rows(rows_text);
            } else {
                selection = rect_text.empty() ? region_argument(&p, region_text) : parse_rect(rect_text);
                rows = p.table.filter(*selection).rows;
            }
            if (!save_region.empty()) {
                if (!selection) throw Error(ErrorCode::invalid_argument, "--save-region needs --rect or --region");
                if (!valid_name(save_region)) throw Error(ErrorCode::invalid_argument, "invalid region name");
                p.regions.insert_or_assign(save_region, *selection);
            }
            const auto n = p.label_rows(rows, column, label_text);
            save_project(p, dir);
            out << "labeled " << n << " rows '" << label_text << "' in " << column << '\n';
        } else if (*summarize) {
            auto [dir, p] = open_project(project_name);
            if (label_text.empty()) {
                out << project_summary(p).dump(2) << '\n';
            } else {
                auto names = split(columns_text, ',');
                if (names.empty()) names = p.table.names_with_role(core::Role::factor);
                out << cluster_to_json(analysis::summarize_cluster(p.table, column, label_text, names)).dump(2) << '\n';
            }
        } else if (*exporter) {
            auto [dir, p] = open_project(project_name);
            std::vector<core::RowId> rows = p.table.row_ids();
            if (!region_text.empty()) rows = p.table.filter(region_argument(&p, region_text)).rows;
            if (!label_text.empty()) {
                const auto hit = rows_with_label(p.table, column, label_text);
                std::erase_if(rows, [&](core::RowId id) { return std::find(hit.begin(), hit.end(), id) == hit.end(); });
            }
            if (output.empty()) {
                core::write_csv(out, p.table, rows);
            } else {
                std::ofstream f(output);
                core::write_csv(f, p.table, rows);
                if (!f) throw Error(ErrorCode::io_error, "cannot write " + output);
            }
        } else if (*serve) {
            Server server({project_root(), host, port});
            server.start();
            out << "listening on " << host << ':' << server.port() << std::endl;
            server.wait();
        }
    } catch (const Error& e) {
        err << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

} // namespace paraspace::service
