#include "paraspace/sampling/sampling.hpp"

#include <array>
#include <cmath>

#include "paraspace/error.hpp"
#include "paraspace/random.hpp"

namespace paraspace::sampling {
namespace {

using region::Box;
using region::Range;

struct Domain {
    std::vector<std::string> variables;
    std::vector<Range> ranges;
};

Domain bounded_domain(const region::Region& r) {
    const Box box = r.bounding_box();
    if (region::box_empty(box)) {
        throw Error(ErrorCode::empty_region, "region is empty");
    }
    Domain d;
    for (const auto& [var, range] : box) {
        d.variables.push_back(var);
        d.ranges.push_back(range);
    }
    return d;
}

void require_count(std::size_t count) {
    if (count < 1) {
        throw Error(ErrorCode::invalid_argument, "sample count must be >= 1");
    }
}

/// Shared rejection loop; `propose` fills a candidate in bounding-box order.
template <typename Propose>
PointSet rejection(const SampleRequest& request, const Domain& domain, Propose&& propose,
                   SampleStats* stats, RejectionLimits limits) {
    const region::CompiledRegion compiled(request.region, domain.variables);
    PointSet out;
    out.variables = domain.variables;
    out.values.reserve(request.count * domain.variables.size());
    std::vector<double> x(domain.variables.size());
    SampleStats local;
    while (local.accepted < request.count) {
        propose(x);
        ++local.proposals;
        if (compiled.contains(x)) {
            ++local.accepted;
            out.values.insert(out.values.end(), x.begin(), x.end());
        } else if (local.proposals >= limits.min_proposals &&
                   local.acceptance_rate() < limits.min_rate) {
            throw Error(ErrorCode::region_too_thin,
                        "acceptance rate " + std::to_string(local.acceptance_rate()) + " after " +
                            std::to_string(local.proposals) + " proposals");
        }
    }
    if (stats != nullptr) {
        *stats = local;
    }
    return out;
}

double radical_inverse(std::uint64_t index, std::uint64_t base) {
    double result = 0.0;
    double f = 1.0 / static_cast<double>(base);
    while (index > 0) {
        result += f * static_cast<double>(index % base);
        index /= base;
        f /= static_cast<double>(base);
    }
    return result;
}

constexpr std::array<std::uint64_t, 32> kPrimes = {
    2,  3,  5,  7,  11, 13, 17, 19, 23, 29,  31,  37,  41,  43,  47,  53,
    59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131};

} // namespace

std::string_view to_string(Method method) {
    switch (method) {
    case Method::uniform: return "uniform";
    case Method::grid: return "grid";
    case Method::halton: return "halton";
    }
    return "uniform";
}

Method method_from_string(std::string_view text) {
    if (text == "uniform") return Method::uniform;
    if (text == "grid") return Method::grid;
    if (text == "halton") return Method::halton;
    throw Error(ErrorCode::invalid_argument, "unknown sampling method '" + std::string(text) + "'");
}

std::vector<core::FactorPoint> PointSet::to_factor_points() const {
    std::vector<core::FactorPoint> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) {
        core::FactorPoint p;
        const auto x = point(i);
        for (std::size_t k = 0; k < variables.size(); ++k) {
            p.emplace(variables[k], x[k]);
        }
        out.push_back(std::move(p));
    }
    return out;
}

PointSet sample_uniform(const SampleRequest& request, SampleStats* stats,
                        RejectionLimits limits) {
    require_count(request.count);
    const Domain domain = bounded_domain(request.region);
    CounterRng rng(request.seed);
    return rejection(
        request, domain,
        [&](std::vector<double>& x) {
            for (std::size_t k = 0; k < x.size(); ++k) {
                x[k] = rng.uniform(domain.ranges[k].lo, domain.ranges[k].hi);
            }
        },
        stats, limits);
}

PointSet sample_halton(const SampleRequest& request, SampleStats* stats,
                       RejectionLimits limits) {
    require_count(request.count);
    const Domain domain = bounded_domain(request.region);
    if (domain.variables.size() > kPrimes.size()) {
        throw Error(ErrorCode::invalid_argument, "Halton sampling supports at most 32 variables");
    }
    // The seed selects the starting index so reruns with new seeds continue
    // the sequence instead of repeating it.
    std::uint64_t index = 1 + request.seed % (1ULL << 32);
    return rejection(
        request, domain,
        [&](std::vector<double>& x) {
            for (std::size_t k = 0; k < x.size(); ++k) {
                const double u = radical_inverse(index, kPrimes[k]);
                x[k] = domain.ranges[k].lo + u * (domain.ranges[k].hi - domain.ranges[k].lo);
            }
            ++index;
        },
        stats, limits);
}

PointSet sample_grid(const SampleRequest& request) {
    if (!request.region.is_box()) {
        throw Error(ErrorCode::unsupported_region,
                    "grid sampling needs an interval or a conjunction of intervals");
    }
    const Domain domain = bounded_domain(request.region);
    std::vector<std::vector<double>> axes;
    for (std::size_t k = 0; k < domain.variables.size(); ++k) {
        const auto it = request.levels.find(domain.variables[k]);
        if (it == request.levels.end()) {
            throw Error(ErrorCode::invalid_argument,
                        "no grid levels for '" + domain.variables[k] + "'");
        }
        const std::size_t levels = it->second;
        if (levels < 1) {
            throw Error(ErrorCode::invalid_argument, "grid levels must be >= 1");
        }
        const Range r = domain.ranges[k];
        std::vector<double> axis(levels);
        if (levels == 1) {
            axis[0] = 0.5 * (r.lo + r.hi);
        } else {
            const double step = (r.hi - r.lo) / static_cast<double>(levels - 1);
            for (std::size_t i = 0; i < levels; ++i) {
                axis[i] = r.lo + step * static_cast<double>(i);
            }
            axis.back() = r.hi;
        }
        axes.push_back(std::move(axis));
    }

    PointSet out;
    out.variables = domain.variables;
    std::size_t total = 1;
    for (const auto& a : axes) {
        total *= a.size();
    }
    out.values.reserve(total * axes.size());
    // Odometer over the axes, last variable fastest.
    std::vector<std::size_t> digit(axes.size(), 0);
    for (std::size_t n = 0; n < total; ++n) {
        for (std::size_t k = 0; k < axes.size(); ++k) {
            out.values.push_back(axes[k][digit[k]]);
        }
        for (std::size_t k = axes.size(); k-- > 0;) {
            if (++digit[k] < axes[k].size()) {
                break;
            }
            digit[k] = 0;
        }
    }
    return out;
}

PointSet sample(const SampleRequest& request, SampleStats* stats) {
    switch (request.method) {
    case Method::uniform: return sample_uniform(request, stats);
    case Method::halton: return sample_halton(request, stats);
    case Method::grid: return sample_grid(request);
    }
    return sample_uniform(request, stats);
}

std::vector<core::RowId> refine(core::DataTable& table, const region::Region& subregion,
                                std::size_t count, std::uint64_t seed) {
    for (const auto& name : subregion.variables()) {
        if (table.variable(name).role != core::Role::factor) {
            throw Error(ErrorCode::invalid_argument,
                        "refinement region must be over factors; '" + name + "' is not one");
        }
    }
    SampleRequest request;
    request.region = subregion;
    request.count = count;
    request.seed = seed;
    const auto points = sample_uniform(request).to_factor_points();
    return table.append_rows(points);
}

} // namespace paraspace::sampling
