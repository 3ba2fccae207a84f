#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>

#include "paraspace/node/client.hpp"
#include "paraspace/node/png.hpp"
#include "scripted_channel.hpp"
#include "test_util.hpp"

using namespace paraspace;
using namespace paraspace::node;
using testing::code_of;
using testing::ScriptedChannel;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<std::string> node_argv(const std::string& kind, std::vector<std::string> extra = {}) {
    std::vector<std::string> argv{PARASPACE_NODE_BIN, kind};
    argv.insert(argv.end(), extra.begin(), extra.end());
    return argv;
}

std::unique_ptr<NodeClient> spawn(const std::string& kind, std::shared_ptr<ResultCache> cache = nullptr,
                                  std::vector<std::string> extra = {}) {
    auto client = std::make_unique<NodeClient>(std::make_unique<ProcessChannel>(node_argv(kind, extra)), cache);
    client->handshake();
    return client;
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("paraspace_node_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

const std::string kSineCaps =
    R"({"type":"capabilities","id":1,"name":"toy","parameters":[{"name":"x","default":2}],)"
    R"("capabilities":["compute_solution"],"responses":[{"name":"y"}]})";

} // namespace

TEST_CASE("wire messages are bit exact") {
    CHECK(encode_run(7, {{"a", 1.0}, {"f", 1.0}, {"phi", 0.0}}) ==
          R"({"type":"run","id":7,"params":{"a":1.0,"f":1.0,"phi":0.0}})");
    CHECK(encode_hello(1) == R"({"type":"hello","id":1,"version":1})");
    CHECK(encode_show(3, "wave", {{"a", 0.5}}) == R"({"type":"show","id":3,"plot":"wave","params":{"a":0.5}})");
    CHECK(encode_feature(4, "v0", {}, std::string("runs/4.bin")) ==
          R"({"type":"feature","id":4,"name":"v0","params":{},"artifact":"runs/4.bin"})");
}

TEST_CASE("descriptor validation") {
    const auto parse = [](const std::string& s) { return parse_descriptor(nlohmann::json::parse(s)); };
    CHECK(parse(kSineCaps).parameters.at(0).default_value == 2.0);
    CHECK(code_of([&] { parse(R"({"name":"n","parameters":[]})"); }) == ErrorCode::protocol_error);
    CHECK(code_of([&] { parse(R"({"name":"n","parameters":[],"capabilities":[]})"); }) ==
          ErrorCode::protocol_error);
    CHECK(code_of([&] {
              parse(R"({"name":"n","parameters":[],"capabilities":["display_plot"],"plots":["p","p"]})");
          }) == ErrorCode::protocol_error);
    CHECK(code_of([&] {
              parse(R"({"name":"n","parameters":[],"capabilities":["compute_feature"],)"
                    R"("features":[{"name":"f"},{"name":"f","arity":"vector"}]})");
          }) == ErrorCode::protocol_error);
    CHECK(code_of([&] { parse(R"({"name":"n","parameters":[],"capabilities":["teleport"]})"); }) ==
          ErrorCode::protocol_error);
    CHECK(code_of([&] {
              parse(R"({"name":"n","parameters":[{"name":"a"},{"name":"a"}],"capabilities":["file_io"]})");
          }) == ErrorCode::protocol_error);

    const auto d = parse(kSineCaps);
    CHECK(parse_descriptor(nlohmann::json::parse(descriptor_message(d, 1).dump())) == d);
}

TEST_CASE("cache key is canonical") {
    CHECK(canonical_params("sine", {{"phi", 0.1}, {"a", 1.0}}) == "sine;a=1;phi=0.1");
    CHECK(cache_key("sine", {{"a", 0.0}}) == cache_key("sine", {{"a", -0.0}}));
    CHECK(cache_key("sine", {{"a", 1.0}}) != cache_key("other", {{"a", 1.0}}));
    CHECK(cache_key("sine", {{"a", 0.1}}) != cache_key("sine", {{"a", 0.1000000000000001}}));
    CHECK(cache_key("sine", {}).size() == 16);
    CHECK(cache_key("sine", {{"a", 1.0}, {"f", 1.0}, {"phi", -0.0}}) == "9ea0468bf5d85dbc");
}

TEST_CASE("base64 round trip") {
    std::mt19937_64 rng(5);
    for (int n = 0; n < 64; ++n) {
        std::string bytes(static_cast<std::size_t>(n), '\0');
        for (auto& b : bytes) b = static_cast<char>(rng() & 0xFF);
        CHECK(base64_decode(base64_encode(bytes)) == bytes);
    }
    CHECK(base64_encode("Man") == "TWFu");
    CHECK(base64_encode("Ma") == "TWE=");
    CHECK(code_of([] { base64_decode("TW=u"); }) == ErrorCode::protocol_error);
    CHECK(code_of([] { base64_decode("TWF"); }) == ErrorCode::protocol_error);
}

TEST_CASE("png encoder writes a decodable header") {
    GrayImage img(17, 9);
    img.line(0, 0, 16, 8, 0);
    const auto png = encode_png(img);
    const auto info = png_info(png);
    REQUIRE(info);
    CHECK(info->width == 17);
    CHECK(info->height == 9);
    std::string broken = png;
    broken[20] ^= 1;
    CHECK_FALSE(png_info(broken));
}

TEST_CASE("sine node handshake") {
    auto client = spawn("sine");
    const auto& d = client->descriptor();
    CHECK(d.name == "sine");
    REQUIRE(d.parameters.size() == 3);
    std::map<std::string, double> defaults;
    for (const auto& p : d.parameters) defaults[p.name] = p.default_value;
    CHECK(defaults == std::map<std::string, double>{{"phi", 0.0}, {"f", 1.0}, {"a", 1.0}});
    CHECK(d.capabilities == std::set<Capability>{Capability::compute_solution, Capability::display_plot,
                                                 Capability::compute_feature});
    REQUIRE(d.features.size() == 2);
    CHECK(d.feature("v0"));
    CHECK(d.feature("v_half"));

    core::DataTable table;
    register_node(table, d);
    CHECK(table.variable("f").role == core::Role::factor);
    CHECK(table.variable("f").default_value == 1.0);
    CHECK(table.variable("v").vector_valued);
    const core::FactorPoint empty;
    const auto ids = table.append_rows(std::span(&empty, 1));
    CHECK(table.numeric(ids[0], "a") == 1.0);
}

TEST_CASE("handshake failures") {
    SUBCASE("capabilities missing") {
        auto ch = std::make_unique<ScriptedChannel>(std::deque<std::string>{
            R"({"type":"capabilities","id":1,"name":"x","parameters":[]})"});
        NodeClient client(std::move(ch));
        CHECK(code_of([&] { client.handshake(); }) == ErrorCode::protocol_error);
        CHECK_FALSE(client.connected());
        CHECK(code_of([&] { client.run(core::RowId{1}, {}); }) == ErrorCode::node_unavailable);
    }
    SUBCASE("mismatched id") {
        NodeClient client(std::make_unique<ScriptedChannel>(std::deque<std::string>{
            R"({"type":"capabilities","id":9,"name":"x","parameters":[],"capabilities":["file_io"]})"}));
        CHECK(code_of([&] { client.handshake(); }) == ErrorCode::protocol_error);
    }
    SUBCASE("silent node times out") {
        NodeClient client(std::make_unique<ProcessChannel>(std::vector<std::string>{"sleep", "5"}));
        const auto start = std::chrono::steady_clock::now();
        CHECK(code_of([&] { client.handshake(std::chrono::milliseconds(200)); }) == ErrorCode::node_unavailable);
        CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(3));
    }
    SUBCASE("missing executable") {
        CHECK(code_of([] { ProcessChannel ch({"/nonexistent/paraspace-node"}); }) == ErrorCode::node_unavailable);
    }
}

TEST_CASE("sine run matches the analytic wave") {
    auto client = spawn("sine");
    const auto r = client->run(core::RowId{3}, {{"a", 1.0}, {"f", 1.0}, {"phi", 0.0}, {"unrelated", 9.0}});
    CHECK(r.status == core::Status::computed);
    CHECK(r.row == core::RowId{3});
    const auto& v = std::get<std::vector<double>>(r.responses.at("v"));
    REQUIRE(v.size() == 101);
    double worst = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        worst = std::max(worst, std::abs(v[k] - std::sin(2.0 * kPi * static_cast<double>(k) / 100.0)));
    }
    CHECK(worst < 1e-12);

    const auto zero = client->run(core::RowId{4}, {{"a", 0.0}, {"f", 3.7}, {"phi", 0.4}});
    for (double x : std::get<std::vector<double>>(zero.responses.at("v"))) CHECK(x == 0.0);

    const auto failed = client->run(core::RowId{5}, {{"f", -1.0}});
    CHECK(failed.status == core::Status::failed);
    CHECK(failed.message.find("frequency") != std::string::npos);
    CHECK(client->connected());
}

TEST_CASE("sine features") {
    auto client = spawn("sine");
    const auto v0 = client->compute_feature("v0", {{"a", 2.0}, {"phi", kPi / 2}});
    CHECK(std::get<double>(*v0.value) == doctest::Approx(2.0).epsilon(1e-15));
    const auto half = client->compute_feature("v_half", {});
    CHECK(std::abs(std::get<double>(*half.value)) < 1e-12);
    std::set<double> seen;
    for (double f : {0.5, 1.0, 2.0}) {
        seen.insert(std::get<double>(*client->compute_feature("v0", {{"a", 1.3}, {"phi", 0.7}, {"f", f}}).value));
    }
    CHECK(seen.size() == 1);
    CHECK(code_of([&] { client->compute_feature("v1", {}); }) == ErrorCode::unknown_feature);

    core::DataTable table;
    register_node(table, client->descriptor());
    std::vector<core::FactorPoint> pts{{{"a", 2.0}, {"phi", kPi / 2}}, {{"a", 1.0}, {"phi", 0.0}}};
    const auto ids = table.append_rows(pts);
    CHECK(compute_features(*client, table, "v0", ids) == 2);
    CHECK(table.variable("v0").role == core::Role::derived);
    CHECK(*table.numeric(ids[0], "v0") == doctest::Approx(2.0));
    CHECK(*table.numeric(ids[1], "v0") == 0.0);
    CHECK(code_of([&] { compute_features(*client, table, "nope", ids); }) == ErrorCode::unknown_feature);
}

TEST_CASE("detail images") {
    auto cache = std::make_shared<ResultCache>(scratch("images"));
    auto client = spawn("sine", cache);
    const auto png = client->render_detail({}, "wave");
    const auto info = png_info(png);
    REQUIRE(info);
    CHECK(info->width == 320);
    CHECK(info->height == 200);
    const auto sent = client->messages_sent();
    CHECK(client->render_detail({}, "wave") == png);
    CHECK(client->messages_sent() == sent);
    CHECK(code_of([&] { client->render_detail({}, "surface"); }) == ErrorCode::unsupported_capability);

    // A fresh connection without the cache still renders identical bytes.
    CHECK(spawn("sine")->render_detail({}, "wave") == png);

    NodeClient plain(std::make_unique<ScriptedChannel>(std::deque<std::string>{kSineCaps}));
    plain.handshake();
    CHECK(code_of([&] { plain.render_detail({}, "wave"); }) == ErrorCode::unsupported_capability);
}

TEST_CASE("file_io runs are cached") {
    const auto dir = scratch("cache");
    auto cache = std::make_shared<ResultCache>(dir / "runs");
    auto client = spawn("oscillator", cache, {"--artifact-dir", (dir / "runs").string()});
    CHECK(client->descriptor().has(Capability::file_io));

    const auto first = client->run(core::RowId{1}, {{"k", 2.0}, {"c", 0.5}});
    REQUIRE(first.status == core::Status::computed);
    CHECK_FALSE(first.from_cache);
    REQUIRE(first.artifact_ref);
    CHECK(std::filesystem::exists(dir / *first.artifact_ref));

    const auto sent = client->messages_sent();
    const auto second = client->run(core::RowId{2}, {{"k", 2.0}, {"c", 0.5}});
    CHECK(second.from_cache);
    CHECK(second.wall_time == 0.0);
    CHECK(client->messages_sent() == sent);
    CHECK(second.responses == first.responses);
    CHECK(second.artifact_ref == first.artifact_ref);

    // Persisted entries serve a new cache instance too.
    auto reopened = std::make_shared<ResultCache>(dir / "runs");
    auto other = spawn("oscillator", reopened, {"--artifact-dir", (dir / "runs").string()});
    CHECK(other->run(core::RowId{3}, {{"k", 2.0}, {"c", 0.5}}).from_cache);

    // The artifact feeds features.
    const auto trace = client->compute_feature("sign_trace", {{"k", 2.0}, {"c", 0.5}}, first.artifact_ref);
    const auto& signs = std::get<std::vector<double>>(*trace.value);
    CHECK(signs.size() == 200);
    CHECK(std::count(signs.begin(), signs.end(), -1.0) > 0);
}

TEST_CASE("oscillator regime") {
    auto client = spawn("oscillator", nullptr, {"--artifact-dir", scratch("regime").string()});
    CHECK(std::get<double>(*client->compute_feature("regime", {{"k", 1.0}, {"c", 3.0}}).value) == 1.0);
    CHECK(std::get<double>(*client->compute_feature("regime", {{"k", 1.0}, {"c", 1.0}}).value) == -1.0);
    const auto over = client->compute_feature("sign_trace", {{"k", 1.0}, {"c", 3.0}});
    for (double s : std::get<std::vector<double>>(*over.value)) CHECK(s == 1.0);
}

TEST_CASE("tcp transport") {
    ProcessChannel server(node_argv("sine", {"--tcp", "0"}));
    const auto port_line = server.receive_line(std::chrono::seconds(5));
    REQUIRE(port_line);
    NodeClient client(connect_tcp("127.0.0.1", std::stoi(*port_line)));
    CHECK(client.handshake().name == "sine");
    CHECK(client.run(core::RowId{1}, {}).status == core::Status::computed);
    server.kill();
    CHECK(code_of([] { connect_tcp("127.0.0.1", 1, std::chrono::milliseconds(200)); }) ==
          ErrorCode::node_unavailable);
}

TEST_CASE("protocol noise yields ProtocolError and closes") {
    std::mt19937_64 rng(11);
    const std::string valid = R"({"type":"result","id":2,"values":{"y":1.5}})";
    for (int trial = 0; trial < 500; ++trial) {
        std::string noise;
        if (trial % 2 == 0) {
            const auto len = rng() % 80;
            for (std::size_t i = 0; i < len; ++i) noise += static_cast<char>(rng() & 0xFF);
        } else {
            noise = valid.substr(0, rng() % valid.size());
        }
        NodeClient client(std::make_unique<ScriptedChannel>(std::deque<std::string>{kSineCaps, noise}));
        client.handshake();
        CHECK(code_of([&] { client.run(core::RowId{1}, {}); }) == ErrorCode::protocol_error);
        CHECK_FALSE(client.connected());
    }
    NodeClient ok(std::make_unique<ScriptedChannel>(std::deque<std::string>{kSineCaps, valid}));
    ok.handshake();
    CHECK(ok.run(core::RowId{1}, {}).status == core::Status::computed);

    // Valid JSON of the wrong shape.
    for (const std::string bad : {R"({"type":"result","id":2,"values":{"y":"z"}})",
                                  R"({"type":"result","id":2})", R"({"type":"image","id":2})",
                                  R"({"type":"result","id":"2","values":{}})", R"([1,2])"}) {
        NodeClient c(std::make_unique<ScriptedChannel>(std::deque<std::string>{kSineCaps, bad}));
        c.handshake();
        CHECK(code_of([&] { c.run(core::RowId{1}, {}); }) == ErrorCode::protocol_error);
    }
}

TEST_CASE("missing declared response fails the row") {
    NodeClient c(std::make_unique<ScriptedChannel>(std::deque<std::string>{
        kSineCaps, R"({"type":"result","id":2,"values":{"other":1}})"}));
    c.handshake();
    const auto r = c.run(core::RowId{1}, {});
    CHECK(r.status == core::Status::failed);
    CHECK(c.connected());
}

TEST_CASE("run sends defaults for declared parameters only") {
    auto channel = std::make_unique<ScriptedChannel>(std::deque<std::string>{
        kSineCaps, R"({"type":"result","id":2,"values":{"y":1}})"});
    const auto sent = channel->sent();
    NodeClient c(std::move(channel));
    c.handshake();
    c.run(core::RowId{1}, {{"z", 4.0}});
    CHECK(sent->back() == R"({"type":"run","id":2,"params":{"x":2.0}})");
}

namespace {

core::DataTable batch_table(WorkerPool& pool, std::size_t n) {
    core::DataTable table;
    register_node(table, pool.descriptor());
    std::vector<core::FactorPoint> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back({{"phi", 0.01 * static_cast<double>(i)}});
    table.append_rows(pts);
    return table;
}

} // namespace

TEST_CASE("batch over two workers partitions the rows") {
    auto pool = WorkerPool::spawn(node_argv("sine"), 2);
    auto table = batch_table(pool, 204);
    const auto ids = table.row_ids();
    std::vector<core::RowId> stream;
    std::size_t last_done = 0;
    const auto results = batch_execute(pool, table, ids, [&](const RunResult& r, std::size_t done, std::size_t total) {
        stream.push_back(r.row);
        CHECK(done == last_done + 1);
        CHECK(total == 204);
        last_done = done;
    });
    CHECK(results.size() == 204);
    std::set<std::uint64_t> unique;
    for (auto id : stream) unique.insert(core::to_int(id));
    CHECK(unique.size() == 204);
    CHECK(stream.size() == 204);
    for (auto id : ids) CHECK(table.row(id).status == core::Status::computed);

    // Terminal rows are skipped on a second pass.
    CHECK(batch_execute(pool, table, ids).empty());
    CHECK(batch_execute(pool, table, {}).empty());
}

TEST_CASE("a dying worker's row is requeued once") {
    std::vector<std::unique_ptr<NodeClient>> clients;
    clients.push_back(std::make_unique<NodeClient>(std::make_unique<ProcessChannel>(node_argv("sine"))));
    clients.push_back(
        std::make_unique<NodeClient>(std::make_unique<ProcessChannel>(node_argv("sine", {"--die-after", "3"}))));
    WorkerPool pool(std::move(clients));
    auto table = batch_table(pool, 40);
    std::map<std::uint64_t, int> applied;
    batch_execute(pool, table, table.row_ids(),
                  [&](const RunResult& r, std::size_t, std::size_t) { ++applied[core::to_int(r.row)]; });
    CHECK(applied.size() == 40);
    for (const auto& [id, n] : applied) CHECK(n == 1);
    for (const auto& row : table.rows()) CHECK(row.status == core::Status::computed);
    CHECK(pool.live() == 1);
}

TEST_CASE("retry budget exhausted fails the row") {
    std::vector<std::unique_ptr<NodeClient>> clients;
    for (int i = 0; i < 3; ++i) {
        clients.push_back(
            std::make_unique<NodeClient>(std::make_unique<ProcessChannel>(node_argv("sine", {"--die-after", "0"}))));
    }
    WorkerPool pool(std::move(clients));
    auto table = batch_table(pool, 1);
    const auto results = batch_execute(pool, table, table.row_ids());
    REQUIRE(results.size() == 1);
    CHECK(results[0].status == core::Status::failed);
    CHECK(table.rows()[0].status == core::Status::failed);
}

TEST_CASE("losing every connection aborts with the residual rows") {
    auto pool = WorkerPool::spawn(node_argv("sine", {"--die-after", "2"}), 1);
    auto table = batch_table(pool, 6);
    try {
        batch_execute(pool, table, table.row_ids());
        FAIL("expected BatchAborted");
    } catch (const BatchAborted& e) {
        CHECK(e.code() == ErrorCode::batch_aborted);
        CHECK(e.residual().size() == 4);
        for (auto id : e.residual()) CHECK(table.row(id).status == core::Status::pending);
    }
    CHECK(code_of([&] { batch_execute(pool, table, table.row_ids()); }) == ErrorCode::batch_aborted);
}
