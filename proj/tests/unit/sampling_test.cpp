#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "paraspace/error.hpp"
#include "paraspace/sampling/sampling.hpp"
#include "random_regions.hpp"

using namespace paraspace;
using namespace paraspace::sampling;
using region::Region;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::not_found;
}

bool all_inside(const PointSet& pts, const Region& r) {
    for (const auto& p : pts.to_factor_points()) {
        if (!r.contains(p)) return false;
    }
    return true;
}

/// Two-sided Kolmogorov-Smirnov statistic against U(lo, hi).
double ks_uniform(std::vector<double> xs, double lo, double hi) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = (xs[i] - lo) / (hi - lo);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    return d;
}

core::Variable factor(std::string name) {
    core::Variable v;
    v.name = std::move(name);
    v.role = core::Role::factor;
    return v;
}

} // namespace

TEST_CASE("uniform samples in a box stay inside") {
    const auto box = Region::box({{"current", {10.0, 400.0}}, {"temperature", {333.0, 343.0}}});
    SampleRequest req{box, 204, Method::uniform, {}, 3};
    const auto pts = sample_uniform(req);
    CHECK(pts.size() == 204);
    CHECK(all_inside(pts, box));
}

TEST_CASE("disk acceptance follows the area ratio") {
    const auto disk = Region::ball({"x", "y"}, {0, 0}, 1.0, 2.0);
    SampleStats stats;
    const auto pts = sample_uniform({disk, 100, Method::uniform, {}, 9}, &stats);
    CHECK(pts.size() == 100);
    CHECK(stats.accepted == 100);
    const double p = std::numbers::pi / 4.0;
    const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(stats.proposals));
    CHECK(std::fabs(stats.acceptance_rate() - p) < 4.0 * sigma);
}

TEST_CASE("degenerate interval yields the cursor point") {
    const auto r = Region::conjunction({Region::interval("x", 0.25, 0.25), Region::interval("y", 1.0, 1.0)});
    const auto pts = sample_uniform({r, 1, Method::uniform, {}, 1});
    REQUIRE(pts.size() == 1);
    CHECK(pts.point(0)[0] == 0.25);
    CHECK(pts.point(0)[1] == 1.0);
}

TEST_CASE("sampling errors") {
    CHECK(code_of([] { sample_uniform({Region::interval("x", 0, 1), 0, Method::uniform, {}, 1}); }) ==
          ErrorCode::invalid_argument);
    CHECK(code_of([] { sample_uniform({Region::all(), 5, Method::uniform, {}, 1}); }) ==
          ErrorCode::unbounded_region);
    CHECK(code_of([] {
              sample_uniform({Region::negation(Region::interval("x", 0, 1)), 5, Method::uniform, {}, 1});
          }) == ErrorCode::unbounded_region);
    const auto disjoint = Region::conjunction({Region::interval("x", 0, 1), Region::interval("x", 2, 3)});
    CHECK(code_of([&] { sample_uniform({disjoint, 5, Method::uniform, {}, 1}); }) == ErrorCode::empty_region);
    const auto sliver = Region::conjunction({Region::interval("x", 0, 1), Region::interval("y", 0, 1),
                                             Region::negation(Region::interval("x", 0.0, 1.0 - 1e-9))});
    CHECK(code_of([&] { sample_uniform({sliver, 5, Method::uniform, {}, 1}); }) == ErrorCode::region_too_thin);
}

TEST_CASE("ten-dimensional ball still samples under the rejection cap") {
    std::vector<std::string> vars;
    for (int i = 0; i < 10; ++i) vars.push_back("x" + std::to_string(i));
    const auto ball = Region::ball(vars, std::vector<double>(10, 0.0), 1.0, 2.0);
    SampleStats stats;
    const auto pts = sample_uniform({ball, 50, Method::uniform, {}, 4}, &stats);
    CHECK(pts.size() == 50);
    CHECK(all_inside(pts, ball));
}

TEST_CASE("grid sampling") {
    SUBCASE("two levels give the corners") {
        const auto cube = Region::box({{"a", {0, 1}}, {"b", {0, 1}}, {"c", {0, 1}}});
        const auto pts = sample_grid({cube, 1, Method::grid, {{"a", 2}, {"b", 2}, {"c", 2}}, 0});
        REQUIRE(pts.size() == 8);
        std::set<std::vector<double>> got;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto p = pts.point(i);
            got.insert({p.begin(), p.end()});
        }
        std::set<std::vector<double>> corners;
        for (int m = 0; m < 8; ++m) corners.insert({double(m >> 2 & 1), double(m >> 1 & 1), double(m & 1)});
        CHECK(got == corners);
    }
    SUBCASE("one level gives the midpoint") {
        const auto pts = sample_grid(
            {Region::box({{"a", {0, 1}}, {"b", {2, 6}}}), 1, Method::grid, {{"a", 1}, {"b", 1}}, 0});
        REQUIRE(pts.size() == 1);
        CHECK(pts.point(0)[0] == 0.5);
        CHECK(pts.point(0)[1] == 4.0);
    }
    SUBCASE("3x3 grid matches enumeration") {
        const auto pts =
            sample_grid({Region::box({{"x", {0, 1}}, {"y", {0, 1}}}), 1, Method::grid, {{"x", 3}, {"y", 3}}, 0});
        std::vector<std::vector<double>> expected;
        for (double x : {0.0, 0.5, 1.0})
            for (double y : {0.0, 0.5, 1.0}) expected.push_back({x, y});
        REQUIRE(pts.size() == expected.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            CHECK(std::vector<double>(pts.point(i).begin(), pts.point(i).end()) == expected[i]);
        }
    }
    SUBCASE("non-box regions and missing levels") {
        CHECK(code_of([] {
                  sample_grid({Region::ball({"x"}, {0}, 1), 1, Method::grid, {{"x", 3}}, 0});
              }) == ErrorCode::unsupported_region);
        CHECK(code_of([] { sample_grid({Region::interval("x", 0, 1), 1, Method::grid, {}, 0}); }) ==
              ErrorCode::invalid_argument);
        CHECK(code_of([] { sample_grid({Region::interval("x", 0, 1), 1, Method::grid, {{"x", 0}}, 0}); }) ==
              ErrorCode::invalid_argument);
    }
}

TEST_CASE("every sampled point lies in its region") {
    testing::RegionGenerator gen({"a", "b", "c"}, 31);
    int sampled = 0;
    for (int t = 0; t < 200 && sampled < 60; ++t) {
        const auto r = gen.tree(2);
        PointSet pts;
        try {
            pts = sample_uniform({r, 40, Method::uniform, {}, static_cast<std::uint64_t>(t)});
        } catch (const Error&) {
            continue;
        }
        ++sampled;
        REQUIRE(all_inside(pts, r));
    }
    CHECK(sampled >= 30);
}

TEST_CASE("same seed, same points; new seed, new points") {
    const auto disk = Region::ball({"x", "y"}, {1, 2}, 0.5);
    const auto a = sample_uniform({disk, 50, Method::uniform, {}, 77});
    const auto b = sample_uniform({disk, 50, Method::uniform, {}, 77});
    const auto c = sample_uniform({disk, 50, Method::uniform, {}, 78});
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);
    const auto h1 = sample_halton({disk, 20, Method::halton, {}, 5});
    const auto h2 = sample_halton({disk, 20, Method::halton, {}, 5});
    CHECK(h1.values == h2.values);
    CHECK(all_inside(h1, disk));
}

TEST_CASE("box marginals pass a 99% Kolmogorov-Smirnov test") {
    const auto box = Region::box({{"u", {-3.0, 5.0}}, {"v", {0.0, 1e-3}}});
    const auto pts = sample_uniform({box, 100'000, Method::uniform, {}, 2024});
    const double critical = 1.628 / std::sqrt(100'000.0);
    for (std::size_t k = 0; k < 2; ++k) {
        std::vector<double> xs;
        for (std::size_t i = 0; i < pts.size(); ++i) xs.push_back(pts.point(i)[k]);
        const auto range = box.bounding_box().at(pts.variables[k]);
        CHECK(ks_uniform(xs, range.lo, range.hi) < critical);
    }
}

TEST_CASE("acceptance rate times box volume estimates region volume") {
    for (double p : {1.0, 2.0, region::kInfinity}) {
        const auto ball = Region::ball({"x", "y", "z"}, {0, 0, 0}, 1.0, p);
        SampleStats stats;
        sample_uniform({ball, 20'000, Method::uniform, {}, 8}, &stats);
        const double rate = stats.acceptance_rate();
        const double estimate = rate * 8.0;
        const double se = 8.0 * std::sqrt(rate * (1 - rate) / static_cast<double>(stats.proposals));
        CHECK(std::fabs(estimate - region::ball_volume(3, 1.0, p)) <= 3.0 * se + 1e-12);
    }
}

TEST_CASE("coarse-to-fine refinement") {
    auto table = core::DataTable::create({factor("q_a"), factor("q_al")});
    const auto coarse_region = Region::box({{"q_a", {0, 1}}, {"q_al", {0, 1}}});
    const auto coarse = table.append_rows(
        sample_uniform({coarse_region, 50, Method::uniform, {}, 1}).to_factor_points());
    CHECK(table.filter(coarse_region).rows.size() == coarse.size());

    const auto corner = Region::box({{"q_a", {0.8, 1.0}}, {"q_al", {0.0, 0.2}}});
    const auto fine = refine(table, corner, 100, 2);
    CHECK(fine.size() == 100);
    for (auto id : fine) {
        CHECK(corner.contains({{"q_a", *table.numeric(id, "q_a")}, {"q_al", *table.numeric(id, "q_al")}}));
    }
    const auto in_corner = table.filter(corner).rows;
    std::set<core::RowId> hits(in_corner.begin(), in_corner.end());
    CHECK(std::all_of(fine.begin(), fine.end(), [&](core::RowId id) { return hits.contains(id); }));
    CHECK(table.row_count() == 150);

    CHECK(code_of([&] { refine(table, corner, 0, 3); }) == ErrorCode::invalid_argument);
}
