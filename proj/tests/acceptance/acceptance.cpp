// Acceptance gate: one PASS/FAIL line per primary criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "jacobi.hpp"
#include "paraspace/analysis/analysis.hpp"
#include "paraspace/node/client.hpp"
#include "paraspace/region/region_json.hpp"
#include "paraspace/sampling/sampling.hpp"
#include "paraspace/service/operations.hpp"
#include "scripted_channel.hpp"

using namespace paraspace;
using region::Region;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) detail << "failed: ";
            else detail << "; ";
            detail << what;
            pass = false;
        }
    }
};

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("paraspace_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::string> node_argv(const std::string& kind, std::vector<std::string> extra = {}) {
    std::vector<std::string> argv{PARASPACE_NODE_BIN, kind};
    argv.insert(argv.end(), extra.begin(), extra.end());
    return argv;
}

service::NodeConfig node_config(const std::string& kind, std::size_t workers) {
    service::NodeConfig c;
    c.command = {PARASPACE_NODE_BIN, kind, "--artifact-dir", "{runs}"};
    c.workers = workers;
    return c;
}

double ks_uniform(std::vector<double> xs, double lo, double hi) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = (xs[i] - lo) / (hi - lo);
        d = std::max({d, (static_cast<double>(i) + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

// Criterion: sine node end to end.
void sine_node(Outcome& out) {
    node::NodeClient client(std::make_unique<node::ProcessChannel>(node_argv("sine")));
    client.handshake();
    const auto& d = client.descriptor();
    std::map<std::string, double> defaults;
    for (const auto& p : d.parameters) defaults[p.name] = p.default_value;
    out.require(defaults == std::map<std::string, double>{{"phi", 0.0}, {"f", 1.0}, {"a", 1.0}},
                "defaults are not (phi,f,a)=(0,1,1)");

    core::DataTable table;
    node::register_node(table, d);
    const auto rows = table.append_rows(std::vector<core::FactorPoint>{{}});
    const auto run = client.run(rows[0], node::factor_point(table, rows[0]));
    out.require(run.status == core::Status::computed, "default run failed");
    const auto& v = std::get<std::vector<double>>(run.responses.at("v"));
    out.require(v.size() == 101, "expected 101 samples");
    double worst = 0.0;
    for (std::size_t k = 0; k < v.size() && k < 101; ++k) {
        worst = std::max(worst, std::fabs(v[k] - std::sin(2.0 * kPi * static_cast<double>(k) / 100.0)));
    }
    out.require(worst <= 1e-12, "wave deviates from sin(2 pi t)");

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> phi(0.0, 2 * kPi), f(0.1, 3.0), a(-2.0, 2.0);
    double feature_err = 0.0;
    bool v0_stable = true;
    for (int i = 0; i < 50; ++i) {
        core::FactorPoint p{{"phi", phi(rng)}, {"f", f(rng)}, {"a", a(rng)}};
        const double v0 = std::get<double>(*client.compute_feature("v0", p, std::nullopt).value);
        const double vh = std::get<double>(*client.compute_feature("v_half", p, std::nullopt).value);
        feature_err = std::max({feature_err, std::fabs(v0 - p["a"] * std::sin(p["phi"])),
                                std::fabs(vh - p["a"] * std::sin(p["f"] * kPi + p["phi"]))});
        p["f"] = f(rng);
        const double again = std::get<double>(*client.compute_feature("v0", p, std::nullopt).value);
        v0_stable = v0_stable && again == v0;
    }
    out.require(feature_err <= 1e-12, "feature error above 1e-12");
    out.require(v0_stable, "v0 changed with f");
    out.detail << "max wave err " << worst << ", max feature err " << feature_err;
}

// Criterion: rejection sampling statistics.
void sampling_statistics(Outcome& out) {
    sampling::SampleStats stats;
    const auto disk = Region::ball({"x", "y"}, {0.0, 0.0}, 1.0, 2.0);
    sampling::sample_uniform({disk, 1'000'000, sampling::Method::uniform, {}, 20240611}, &stats);
    const double rate = static_cast<double>(stats.accepted) / static_cast<double>(stats.proposals);
    out.require(std::fabs(rate - kPi / 4.0) <= 0.005, "acceptance rate outside pi/4 +- 0.005");

    const auto box = Region::box({{"u", {-2.0, 3.0}}, {"v", {10.0, 10.5}}, {"w", {0.0, 1.0}}});
    const auto pts = sampling::sample_uniform({box, 100'000, sampling::Method::uniform, {}, 99});
    const double critical = 1.628 / std::sqrt(100'000.0);
    double worst = 0.0;
    for (std::size_t k = 0; k < pts.variables.size(); ++k) {
        std::vector<double> xs;
        xs.reserve(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) xs.push_back(pts.point(i)[k]);
        const auto range = box.bounding_box().at(pts.variables[k]);
        worst = std::max(worst, ks_uniform(std::move(xs), range.lo, range.hi));
    }
    out.require(worst < critical, "KS statistic above the 99% critical value");
    out.detail << "rate " << rate << " (pi/4 " << kPi / 4 << "), KS max " << worst << " < " << critical;
}

// Closed forms without the gamma function.
double oracle_volume(std::size_t n, double r, double p) {
    if (p == 1.0) {
        double v = 1.0;
        for (std::size_t i = 1; i <= n; ++i) v *= 2.0 * r / static_cast<double>(i);
        return v;
    }
    if (p == 2.0) {
        double v = (n % 2 == 0) ? 1.0 : 2.0 * r;
        for (std::size_t i = (n % 2 == 0) ? 2 : 3; i <= n; i += 2) v *= 2.0 * kPi * r * r / static_cast<double>(i);
        return v;
    }
    double v = 1.0;
    for (std::size_t i = 0; i < n; ++i) v *= 2.0 * r;
    return v;
}

// Criterion: ball volumes.
void ball_volumes(Outcome& out) {
    const double r = 0.75;
    double worst_z = 0.0;
    for (std::size_t n = 1; n <= 5; ++n) {
        std::vector<std::string> vars;
        for (std::size_t i = 0; i < n; ++i) vars.push_back("x" + std::to_string(i));
        for (double p : {1.0, 2.0, region::kInfinity}) {
            const auto ball = Region::ball(vars, std::vector<double>(n, 0.5), r, p);
            const double analytic = region::volume_analytic(ball).value;
            const auto mc = region::volume_monte_carlo(ball, 1'000'000, 1000 + n);
            const double se = mc.stderr_value.value_or(0.0);
            const double diff = std::fabs(mc.value - analytic);
            const std::string tag = "n=" + std::to_string(n) + " p=" + (p == region::kInfinity ? "inf" : std::to_string(int(p)));
            out.require(std::fabs(analytic - oracle_volume(n, r, p)) <= 1e-12 * analytic, tag + " analytic formula");
            out.require(mc.samples == 1'000'000, tag + " wrong sample count");
            out.require(diff <= 3.0 * se, tag + " Monte-Carlo outside 3 SE");
            if (se > 0) worst_z = std::max(worst_z, diff / se);
            if (p == region::kInfinity) {
                out.require(analytic == oracle_volume(n, r, p) && region::ball_volume(n, r, p) == std::pow(2 * r, double(n)),
                            tag + " not exactly (2r)^n");
                out.require(mc.value == analytic, tag + " Monte-Carlo not exact for the cube");
            }
        }
    }
    out.detail << "15 cases of 10^6 samples, worst |MC - analytic| = " << worst_z << " SE";
}

Eigen::MatrixXd to_eigen(const testing::Dense& d) {
    Eigen::MatrixXd m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < d.size(); ++j) m(Eigen::Index(i), Eigen::Index(j)) = d[i][j];
    return m;
}

testing::Dense to_dense(const Eigen::MatrixXd& m) {
    testing::Dense d(std::size_t(m.rows()), std::vector<double>(std::size_t(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) d[std::size_t(i)][std::size_t(j)] = m(i, j);
    return d;
}

// Criterion: embedding math.
void embedding_math(Outcome& out) {
    std::mt19937_64 rng(5150);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double diag_err = 0.0, trace_err = 0.0, residual = 0.0, duality = 0.0, oracle = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::MatrixXd X(20, 6);
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = gauss(rng) * (1.0 + static_cast<double>(j));
        Eigen::MatrixXd Xc = X;
        analysis::center_columns(Xc);
        const Eigen::MatrixXd C = analysis::sphere(analysis::dot_affinity(Xc));
        for (Eigen::Index i = 0; i < C.rows(); ++i) diag_err = std::max(diag_err, std::fabs(C(i, i) - 1.0));

        const auto s = analysis::spectral_embed(C);
        trace_err = std::max(trace_err, std::fabs(s.eigenvalues.sum() - 20.0));
        for (Eigen::Index k = 0; k < s.eigenvalues.size(); ++k) {
            const Eigen::VectorXd v = s.eigenvectors.col(k);
            residual = std::max(residual, (C * v - s.eigenvalues(k) * v).norm());
        }
        const auto jac = testing::jacobi_eigen(to_dense(C));
        for (std::size_t k = 0; k < jac.values.size(); ++k) {
            oracle = std::max(oracle, std::fabs(jac.values[k] - s.eigenvalues(Eigen::Index(k))));
        }

        const auto gram = analysis::spectral_embed(Xc * Xc.transpose());
        const auto pc = analysis::pca(X);
        const auto cov = testing::jacobi_eigen(to_dense(Xc.transpose() * Xc));
        for (std::size_t k = 0; k < 6; ++k) {
            const double big = gram.eigenvalues(Eigen::Index(k));
            duality = std::max({duality, std::fabs(big - cov.values[k]),
                                std::fabs(big - 20.0 * pc.variances(Eigen::Index(k)))});
        }
    }
    out.require(diag_err <= 1e-12, "sphered diagonal not unit");
    out.require(trace_err <= 1e-9, "eigenvalue sum differs from m");
    out.require(residual < 1e-9, "eigen residual too large");
    out.require(duality <= 1e-9, "XX^T and X^TX spectra disagree");
    out.require(oracle <= 1e-9, "eigenvalues disagree with the Jacobi oracle");
    out.detail << "diag " << diag_err << ", trace " << trace_err << ", residual " << residual << ", duality "
               << duality << ", jacobi " << oracle;
}

// Criterion: synthetic partitioning.
void partitioning(Outcome& out) {
    const auto dir = scratch("partition");
    service::Project p;
    p.id = "oscillator";
    service::configure_node(p, node_config("oscillator", 2), dir);
    const auto box = Region::box({{"k", {0.0, 4.0}}, {"c", {0.0, 4.0}}});
    service::sample_into(p, {box, 500, sampling::Method::uniform, {}, 31337});
    service::run_rows(p, dir, {});
    service::feature_rows(p, dir, "sign_trace", {});
    analysis::AffinitySpec spec;
    spec.columns = {"sign_trace"};
    spec.kernel = analysis::Kernel::gaussian;
    service::embed_rows(p, {}, spec);

    // The analyst brushes the tightest clump of the embedding view.
    auto& t = p.table;
    std::vector<std::pair<double, double>> xy;
    for (const auto& row : t.rows()) xy.emplace_back(*t.numeric(row.id, analysis::kEmbedX), *t.numeric(row.id, analysis::kEmbedY));
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (auto [x, y] : xy) {
        xmin = std::min(xmin, x), xmax = std::max(xmax, x), ymin = std::min(ymin, y), ymax = std::max(ymax, y);
    }
    const double width = 800.0, height = 800.0;
    region::ViewMapping view{std::string(analysis::kEmbedX), std::string(analysis::kEmbedY), {(xmax - xmin) / width, xmin},
                             {-(ymax - ymin) / height, ymax}};
    const auto to_px = [&](double x, double y) {
        return std::pair{(x - xmin) / view.x.scale, (y - ymax) / view.y.scale};
    };
    std::size_t best = 0, best_count = 0;
    for (std::size_t i = 0; i < xy.size(); ++i) {
        const auto [pi, qi] = to_px(xy[i].first, xy[i].second);
        std::size_t n = 0;
        for (auto [x, y] : xy) {
            const auto [pj, qj] = to_px(x, y);
            n += std::fabs(pi - pj) <= 3.0 && std::fabs(qi - qj) <= 3.0;
        }
        if (n > best_count) best = i, best_count = n;
    }
    const auto [cx, cy] = to_px(xy[best].first, xy[best].second);
    const auto brush = region::from_rectangle(view, {cx - 3.0, cy - 3.0, cx + 3.0, cy + 3.0});

    const auto all = t.row_ids();
    p.label_rows(all, "regime", "wavy");
    const auto picked = t.filter(brush).rows;
    p.label_rows(picked, "regime", "flat");

    std::size_t agree = 0;
    for (const auto& row : t.rows()) {
        const double k = *t.numeric(row.id, "k"), c = *t.numeric(row.id, "c");
        const bool overdamped = c * c - 4.0 * k > 0.0;
        const bool flat = std::get<std::string>(t.cell(row.id, "regime")) == "flat";
        agree += overdamped == flat;
    }
    const double accuracy = std::max(agree, t.row_count() - agree) / static_cast<double>(t.row_count());
    out.require(accuracy >= 0.95, "label accuracy below 95%");

    const std::vector<std::string> factors{"k", "c"};
    bool sound = true;
    for (const std::string label : {"flat", "wavy"}) {
        const auto s = analysis::summarize_cluster(t, "regime", label, factors);
        for (const auto id : service::rows_with_label(t, "regime", label)) {
            for (const auto& f : s.factors) {
                const double v = *t.numeric(id, f.name);
                sound = sound && v >= f.min && v <= f.max;
            }
        }
        out.detail << label << " " << s.rows << " rows; ";
    }
    out.require(sound, "a labeled row lies outside its cluster box");
    out.detail << "accuracy " << accuracy;
}

// Criterion: batch scheduling with a lost worker.
void batch_scheduling(Outcome& out) {
    std::vector<std::unique_ptr<node::NodeClient>> clients;
    clients.push_back(std::make_unique<node::NodeClient>(std::make_unique<node::ProcessChannel>(node_argv("sine"))));
    clients.push_back(std::make_unique<node::NodeClient>(
        std::make_unique<node::ProcessChannel>(node_argv("sine", {"--die-after", "40"}))));
    node::WorkerPool pool(std::move(clients));
    core::DataTable table;
    node::register_node(table, pool.descriptor());
    std::vector<core::FactorPoint> pts;
    for (int i = 0; i < 204; ++i) pts.push_back({{"phi", 0.03 * i}, {"f", 1.0 + 0.01 * i}});
    const auto ids = table.append_rows(pts);
    std::map<std::uint64_t, int> applied;
    node::batch_execute(pool, table, ids,
                        [&](const node::RunResult& r, std::size_t, std::size_t) { ++applied[core::to_int(r.row)]; });
    std::size_t terminal = 0;
    bool once = applied.size() == ids.size();
    for (auto id : ids) {
        once = once && applied[core::to_int(id)] == 1;
        terminal += table.row(id).status != core::Status::pending;
    }
    out.require(pool.live() == 1, "the killed worker was not detected");
    out.require(terminal == 204, "rows left without a terminal status");
    out.require(once, "a result was applied more than once or not at all");
    std::size_t computed = 0;
    for (auto id : ids) computed += table.row(id).status == core::Status::computed;
    out.detail << terminal << "/204 terminal (" << computed << " computed), live workers " << pool.live();
}

// Criterion: persistence and region transfer.
void persistence(Outcome& out) {
    const auto dir = scratch("persist");
    service::Project p;
    p.id = "persist";
    service::configure_node(p, node_config("sine", 2), dir);
    service::sample_into(p, {Region::box({{"phi", {0.0, 6.0}}, {"f", {0.5, 2.0}}, {"a", {0.0, 2.0}}}), 204,
                             sampling::Method::uniform, {}, 8});
    service::run_rows(p, dir, {});
    service::feature_rows(p, dir, "v_half", {});
    p.regions.emplace("upper", Region::interval("a", 1.0, 2.0));
    p.regions.emplace("ring", Region::conjunction({Region::ball({"phi", "f"}, {3.0, 1.2}, 1.0),
                                                   Region::negation(Region::ball({"phi", "f"}, {3.0, 1.2}, 0.4))}));
    p.label_rows(p.table.filter(p.regions.at("upper")).rows, "label", "upper");
    service::save_project(p, dir);
    const auto loaded = service::load_project(dir);
    out.require(loaded == p, "loaded project differs");

    const auto file = dir / "transfer.region.json";
    region::write_region_file(file, loaded.regions.at("ring"));
    const auto doc = region::load_region(nlohmann::json::parse(std::ifstream(file)), loaded.table.names_with_role(core::Role::factor));
    out.require(doc.unresolved.empty(), "re-imported region has unresolved variables");
    const auto before = p.table.filter(p.regions.at("ring")).rows;
    const auto after = loaded.table.filter(doc.region).rows;
    out.require(before == after && !before.empty(), "re-filtered rows differ");
    out.detail << loaded.table.row_count() << " rows, " << loaded.regions.size() << " regions, "
               << loaded.labelings.size() << " labeling; ring selects " << after.size() << " rows";
}

// Criterion: protocol fuzzing.
void fuzzing(Outcome& out) {
    const std::string caps = R"({"type":"capabilities","id":1,"name":"toy","parameters":[{"name":"x","default":2}],)"
                             R"("capabilities":["compute_solution"],"responses":[{"name":"y"}]})";
    const std::string valid = R"({"type":"result","id":2,"values":{"y":1.5}})";
    const std::vector<std::string> shapes = {R"({"type":"result","id":2,"values":{"y":"z"}})",
                                             R"({"type":"result","id":2})",
                                             R"({"type":"image","id":2})",
                                             R"({"type":"result","id":"2","values":{}})",
                                             R"({"type":"result","id":3,"values":{"y":1}})",
                                             R"({"type":"bogus","id":2})",
                                             R"({"id":2,"values":{"y":1}})",
                                             R"([1,2])", "null", "42", R"("text")"};
    std::mt19937_64 rng(404);
    std::size_t errors = 0;
    for (int trial = 0; trial < 10'000; ++trial) {
        std::string line;
        switch (trial % 3) {
        case 0: {
            const auto len = 1 + rng() % 120;
            for (std::size_t i = 0; i < len; ++i) {
                char ch = static_cast<char>(rng() & 0xFF);
                line += ch == '\n' ? ' ' : ch;
            }
            if (line.front() == '{') line.front() = '#';
            break;
        }
        case 1:
            line = valid.substr(0, rng() % valid.size());
            break;
        default:
            line = shapes[rng() % shapes.size()];
        }
        node::NodeClient client(std::make_unique<testing::ScriptedChannel>(std::deque<std::string>{caps, line}));
        client.handshake();
        try {
            client.run(core::RowId{1}, {});
        } catch (const Error& e) {
            errors += e.code() == ErrorCode::protocol_error && !client.connected();
        } catch (...) {
        }
    }
    out.require(errors == 10'000, "some malformed lines did not yield ProtocolError");
    out.detail << errors << "/10000 ProtocolError";
}

} // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<void(Outcome&)> body;
        double budget_s;
    };
    const std::vector<Criterion> criteria = {
        {"sine-node end-to-end", sine_node, 5.0},
        {"sampling statistics", sampling_statistics, 30.0},
        {"ball volumes", ball_volumes, 0.0},
        {"embedding math", embedding_math, 5.0},
        {"synthetic partitioning", partitioning, 120.0},
        {"batch scheduling", batch_scheduling, 0.0},
        {"persistence", persistence, 0.0},
        {"protocol robustness", fuzzing, 0.0},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome out;
        const auto start = std::chrono::steady_clock::now();
        try {
            criteria[i].body(out);
        } catch (const std::exception& e) {
            out.require(false, std::string("threw: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (criteria[i].budget_s > 0 && secs >= criteria[i].budget_s) {
            out.require(false, "runtime over " + std::to_string(criteria[i].budget_s) + " s");
        }
        failures += !out.pass;
        std::printf("%s [%zu] %s (%.2f s): %s\n", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, secs,
                    out.detail.str().c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
