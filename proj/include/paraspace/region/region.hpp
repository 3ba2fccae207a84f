#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace paraspace::region {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class Kind { interval, ball, conjunction, disjunction, negation, all };

struct Range {
    double lo = 0.0;
    double hi = 0.0;

    bool empty() const noexcept { return lo > hi; }
    double width() const noexcept { return empty() ? 0.0 : hi - lo; }
    friend bool operator==(const Range&, const Range&) = default;
};

/// Axis-aligned box keyed by variable name.
using Box = std::map<std::string, Range>;

double box_volume(const Box& box);
bool box_empty(const Box& box);

class Region;

struct IntervalNode {
    std::string var;
    double lo;
    double hi;
};

/// p-norm ball: { x : ||x - center||_p <= radius }, p in [1, inf].
struct BallNode {
    std::vector<std::string> vars;
    std::vector<double> center;
    double radius;
    double p;
};

struct CompositeNode {
    std::vector<Region> children;
};

/// A region of interest over named variables. Values are immutable and
/// cheap to copy; boundaries are inclusive.
class Region {
public:
    /// The universe.
    Region();

    static Region all();
    static Region interval(std::string var, double lo, double hi);
    static Region ball(std::vector<std::string> vars, std::vector<double> center,
                       double radius, double p = 2.0);
    /// Empty conjunction is the universe.
    static Region conjunction(std::vector<Region> children);
    /// Empty disjunction is the empty set.
    static Region disjunction(std::vector<Region> children);
    static Region negation(Region child);

    /// Conjunction of intervals, one per entry.
    static Region box(const Box& box);

    Kind kind() const noexcept { return kind_; }
    const IntervalNode& as_interval() const;
    const BallNode& as_ball() const;
    const std::vector<Region>& children() const;
    const Region& child() const;

    /// Sorted, de-duplicated variable names referenced by any leaf.
    std::vector<std::string> variables() const;

    /// Throws UnknownVariable when the point lacks a referenced variable.
    bool contains(const std::map<std::string, double>& point) const;

    /// Smallest box containing the region. Throws UnboundedRegion.
    Box bounding_box() const;

    /// True for an Interval or an And whose children are all Intervals.
    bool is_box() const;

    friend bool operator==(const Region& a, const Region& b);

private:
    Kind kind_ = Kind::all;
    std::shared_ptr<const IntervalNode> interval_;
    std::shared_ptr<const BallNode> ball_;
    std::shared_ptr<const CompositeNode> composite_;
};

/// Region evaluated against a fixed variable ordering, for hot loops over
/// flat value arrays.
class CompiledRegion {
public:
    /// Throws UnknownVariable if the region references a name not in `order`.
    CompiledRegion(const Region& region, std::span<const std::string> order);

    bool contains(std::span<const double> values) const;

private:
    struct Op {
        Kind kind;
        std::size_t first = 0;  // interval: var index; ball: offset into indices_
        std::size_t count = 0;  // ball: dimension; composite: child count
        double a = 0.0;         // interval lo / ball radius
        double b = 0.0;         // interval hi / ball p
        std::size_t skip = 0;   // ops in this subtree, including itself
    };

    std::size_t emit(const Region& region, std::span<const std::string> order);
    bool eval(std::size_t at, std::span<const double> values) const;

    std::vector<Op> ops_;
    std::vector<std::size_t> indices_;
    std::vector<double> centers_;
};

/// p-norm of a difference vector; p may be kInfinity.
double pnorm(std::span<const double> diff, double p);

struct VolumeEstimate {
    double value = 0.0;
    /// Present for Monte-Carlo estimates only.
    std::optional<double> stderr_value;
    std::size_t samples = 0;
    std::size_t accepted = 0;
};

/// Closed-form volume of a single Ball or an Interval-box conjunction.
/// Throws UnsupportedAnalytic for anything else.
VolumeEstimate volume_analytic(const Region& region);

/// Hit-or-miss estimate over the bounding box with binomial standard error.
VolumeEstimate volume_monte_carlo(const Region& region, std::size_t samples,
                                  std::uint64_t seed);

/// A region shrunk to a single point.
struct Cursor {
    std::map<std::string, double> coords;

    /// Conjunction of degenerate intervals. Throws InvalidValue on non-finite
    /// coordinates.
    Region to_region() const;
};

/// Affine screen-to-data map of one axis: data = offset + scale * screen.
struct AxisTransform {
    double scale = 1.0;
    double offset = 0.0;

    double to_data(double screen) const noexcept { return offset + scale * screen; }
};

/// A scatter-plot cell: two data columns and how screen pixels map onto them.
struct ViewMapping {
    std::string x_var;
    std::string y_var;
    AxisTransform x;
    AxisTransform y;
};

struct ScreenRect {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;
};

/// And of two Intervals in data units. Corner order does not matter; a
/// zero-area rectangle yields point intervals (a cursor).
Region from_rectangle(const ViewMapping& view, const ScreenRect& rect);

/// Volume of the p-norm ball of radius r in n dimensions.
double ball_volume(std::size_t n, double radius, double p);

} // namespace paraspace::region
