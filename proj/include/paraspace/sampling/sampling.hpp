#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "paraspace/core/table.hpp"
#include "paraspace/region/region.hpp"

namespace paraspace::sampling {

enum class Method { uniform, grid, halton };

std::string_view to_string(Method method);
Method method_from_string(std::string_view text);

struct SampleRequest {
    region::Region region;
    std::size_t count = 1;
    Method method = Method::uniform;
    /// Grid levels per variable; every bounding-box variable needs an entry.
    std::map<std::string, std::size_t> levels;
    std::uint64_t seed = 0;
};

/// Row-major block of points over a fixed variable order.
struct PointSet {
    std::vector<std::string> variables;
    std::vector<double> values;

    std::size_t size() const noexcept {
        return variables.empty() ? 0 : values.size() / variables.size();
    }
    std::span<const double> point(std::size_t i) const {
        return {values.data() + i * variables.size(), variables.size()};
    }
    std::vector<core::FactorPoint> to_factor_points() const;
};

struct SampleStats {
    std::size_t proposals = 0;
    std::size_t accepted = 0;

    double acceptance_rate() const noexcept {
        return proposals == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposals);
    }
};

/// Rejection sampling gives up once at least `min_proposals` were drawn and
/// the acceptance rate is still below `min_rate`.
struct RejectionLimits {
    std::size_t min_proposals = 1'000'000;
    double min_rate = 1e-4;
};

/// i.i.d. uniform points in the region by rejection from its bounding box.
/// Throws UnboundedRegion, EmptyRegion, RegionTooThin.
PointSet sample_uniform(const SampleRequest& request, SampleStats* stats = nullptr,
                        RejectionLimits limits = {});

/// Halton sequence over the bounding box, filtered by the region.
PointSet sample_halton(const SampleRequest& request, SampleStats* stats = nullptr,
                       RejectionLimits limits = {});

/// Cartesian product of equispaced levels, endpoints included; one level
/// gives the midpoint. Throws UnsupportedRegion for non-box regions.
PointSet sample_grid(const SampleRequest& request);

/// Dispatches on request.method.
PointSet sample(const SampleRequest& request, SampleStats* stats = nullptr);

/// Appends `count` uniform points of `subregion` to the table as pending rows.
std::vector<core::RowId> refine(core::DataTable& table, const region::Region& subregion,
                                std::size_t count, std::uint64_t seed);

} // namespace paraspace::sampling
