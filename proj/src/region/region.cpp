#include "paraspace/region/region.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "paraspace/error.hpp"
#include "paraspace/random.hpp"

namespace paraspace::region {
namespace {

Error invalid(const std::string& message) {
    return Error(ErrorCode::invalid_region, message);
}

bool valid_p(double p) {
    return p == kInfinity || (std::isfinite(p) && p >= 1.0);
}

/// Box over the variables the node actually constrains. Variables missing
/// from the result are unbounded by this node.
Box constrained_box(const Region& region) {
    switch (region.kind()) {
    case Kind::interval: {
        const auto& node = region.as_interval();
        return Box{{node.var, Range{node.lo, node.hi}}};
    }
    case Kind::ball: {
        const auto& node = region.as_ball();
        Box box;
        for (std::size_t i = 0; i < node.vars.size(); ++i) {
            box[node.vars[i]] = Range{node.center[i] - node.radius,
                                      node.center[i] + node.radius};
        }
        return box;
    }
    case Kind::conjunction: {
        Box box;
        for (const auto& child : region.children()) {
            for (const auto& [var, range] : constrained_box(child)) {
                auto [it, inserted] = box.emplace(var, range);
                if (!inserted) {
                    it->second.lo = std::max(it->second.lo, range.lo);
                    it->second.hi = std::min(it->second.hi, range.hi);
                }
            }
        }
        return box;
    }
    case Kind::disjunction: {
        const auto& children = region.children();
        if (children.empty()) {
            return {};
        }
        Box box = constrained_box(children.front());
        for (std::size_t i = 1; i < children.size(); ++i) {
            const Box other = constrained_box(children[i]);
            for (auto it = box.begin(); it != box.end();) {
                const auto found = other.find(it->first);
                if (found == other.end()) {
                    it = box.erase(it);
                    continue;
                }
                // Hull of the two ranges; an empty side contributes nothing.
                if (it->second.empty()) {
                    it->second = found->second;
                } else if (!found->second.empty()) {
                    it->second.lo = std::min(it->second.lo, found->second.lo);
                    it->second.hi = std::max(it->second.hi, found->second.hi);
                }
                ++it;
            }
        }
        return box;
    }
    case Kind::negation:
    case Kind::all:
        return {};
    }
    return {};
}

bool equal_doubles(const std::vector<double>& a, const std::vector<double>& b) {
    return a == b;
}

} // namespace

double box_volume(const Box& box) {
    double volume = 1.0;
    for (const auto& [var, range] : box) {
        volume *= range.width();
    }
    return volume;
}

bool box_empty(const Box& box) {
    return std::any_of(box.begin(), box.end(),
                       [](const auto& entry) { return entry.second.empty(); });
}

Region::Region() = default;

Region Region::all() { return Region(); }

Region Region::interval(std::string var, double lo, double hi) {
    if (var.empty()) {
        throw invalid("interval needs a variable name");
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        throw invalid("interval bounds on '" + var + "' must be finite");
    }
    if (lo > hi) {
        throw invalid("interval on '" + var + "' has lo > hi");
    }
    Region r;
    r.kind_ = Kind::interval;
    r.interval_ = std::make_shared<const IntervalNode>(IntervalNode{std::move(var), lo, hi});
    return r;
}

Region Region::ball(std::vector<std::string> vars, std::vector<double> center,
                    double radius, double p) {
    if (vars.empty()) {
        throw invalid("ball needs at least one variable");
    }
    if (vars.size() != center.size()) {
        throw invalid("ball center length differs from variable count");
    }
    if (std::set<std::string>(vars.begin(), vars.end()).size() != vars.size()) {
        throw invalid("ball variables must be distinct");
    }
    if (!std::isfinite(radius) || radius < 0.0) {
        throw invalid("ball radius must be finite and >= 0");
    }
    if (!valid_p(p)) {
        throw invalid("ball norm order p must be >= 1 or infinity");
    }
    if (!std::all_of(center.begin(), center.end(), [](double c) { return std::isfinite(c); })) {
        throw invalid("ball center must be finite");
    }
    Region r;
    r.kind_ = Kind::ball;
    r.ball_ = std::make_shared<const BallNode>(
        BallNode{std::move(vars), std::move(center), radius, p});
    return r;
}

Region Region::conjunction(std::vector<Region> children) {
    if (children.empty()) {
        return all();
    }
    Region r;
    r.kind_ = Kind::conjunction;
    r.composite_ = std::make_shared<const CompositeNode>(CompositeNode{std::move(children)});
    return r;
}

Region Region::disjunction(std::vector<Region> children) {
    Region r;
    r.kind_ = Kind::disjunction;
    r.composite_ = std::make_shared<const CompositeNode>(CompositeNode{std::move(children)});
    return r;
}

Region Region::negation(Region child) {
    Region r;
    r.kind_ = Kind::negation;
    r.composite_ = std::make_shared<const CompositeNode>(CompositeNode{{std::move(child)}});
    return r;
}

Region Region::box(const Box& box) {
    std::vector<Region> parts;
    parts.reserve(box.size());
    for (const auto& [var, range] : box) {
        parts.push_back(interval(var, range.lo, range.hi));
    }
    if (parts.size() == 1) {
        return parts.front();
    }
    return conjunction(std::move(parts));
}

const IntervalNode& Region::as_interval() const {
    if (kind_ != Kind::interval) {
        throw Error(ErrorCode::type_mismatch, "region is not an interval");
    }
    return *interval_;
}

const BallNode& Region::as_ball() const {
    if (kind_ != Kind::ball) {
        throw Error(ErrorCode::type_mismatch, "region is not a ball");
    }
    return *ball_;
}

const std::vector<Region>& Region::children() const {
    static const std::vector<Region> none;
    return composite_ ? composite_->children : none;
}

const Region& Region::child() const {
    if (kind_ != Kind::negation) {
        throw Error(ErrorCode::type_mismatch, "region is not a negation");
    }
    return composite_->children.front();
}

std::vector<std::string> Region::variables() const {
    std::set<std::string> names;
    switch (kind_) {
    case Kind::interval:
        names.insert(interval_->var);
        break;
    case Kind::ball:
        names.insert(ball_->vars.begin(), ball_->vars.end());
        break;
    case Kind::all:
        break;
    default:
        for (const auto& c : children()) {
            const auto sub = c.variables();
            names.insert(sub.begin(), sub.end());
        }
    }
    return {names.begin(), names.end()};
}

bool Region::contains(const std::map<std::string, double>& point) const {
    const auto order = variables();
    std::vector<double> values;
    values.reserve(order.size());
    for (const auto& name : order) {
        const auto it = point.find(name);
        if (it == point.end()) {
            throw Error(ErrorCode::unknown_variable, "point has no value for '" + name + "'");
        }
        values.push_back(it->second);
    }
    return CompiledRegion(*this, order).contains(values);
}

Box Region::bounding_box() const {
    if (kind_ == Kind::all || kind_ == Kind::negation) {
        throw Error(ErrorCode::unbounded_region, "region has no finite bounding box");
    }
    const auto vars = variables();
    Box box = constrained_box(*this);
    if (vars.empty()) {
        throw Error(ErrorCode::unbounded_region, "region references no variables");
    }
    for (const auto& v : vars) {
        if (!box.contains(v)) {
            throw Error(ErrorCode::unbounded_region,
                        "region is unbounded along '" + v + "'");
        }
    }
    return box;
}

bool Region::is_box() const {
    if (kind_ == Kind::interval) {
        return true;
    }
    if (kind_ != Kind::conjunction) {
        return false;
    }
    return std::all_of(children().begin(), children().end(),
                       [](const Region& c) { return c.kind() == Kind::interval; });
}

bool operator==(const Region& a, const Region& b) {
    if (a.kind_ != b.kind_) {
        return false;
    }
    switch (a.kind_) {
    case Kind::interval:
        return a.interval_->var == b.interval_->var && a.interval_->lo == b.interval_->lo &&
               a.interval_->hi == b.interval_->hi;
    case Kind::ball:
        return a.ball_->vars == b.ball_->vars && equal_doubles(a.ball_->center, b.ball_->center) &&
               a.ball_->radius == b.ball_->radius && a.ball_->p == b.ball_->p;
    case Kind::all:
        return true;
    default:
        return a.children() == b.children();
    }
}

CompiledRegion::CompiledRegion(const Region& region, std::span<const std::string> order) {
    emit(region, order);
}

std::size_t CompiledRegion::emit(const Region& region, std::span<const std::string> order) {
    auto index_of = [&](const std::string& name) {
        const auto it = std::find(order.begin(), order.end(), name);
        if (it == order.end()) {
            throw Error(ErrorCode::unknown_variable, "unknown variable '" + name + "'");
        }
        return static_cast<std::size_t>(it - order.begin());
    };

    const std::size_t at = ops_.size();
    ops_.push_back(Op{region.kind()});
    switch (region.kind()) {
    case Kind::interval: {
        const auto& node = region.as_interval();
        ops_[at].first = index_of(node.var);
        ops_[at].a = node.lo;
        ops_[at].b = node.hi;
        break;
    }
    case Kind::ball: {
        const auto& node = region.as_ball();
        ops_[at].first = indices_.size();
        ops_[at].count = node.vars.size();
        ops_[at].a = node.radius;
        ops_[at].b = node.p;
        for (std::size_t i = 0; i < node.vars.size(); ++i) {
            indices_.push_back(index_of(node.vars[i]));
            centers_.push_back(node.center[i]);
        }
        break;
    }
    case Kind::all:
        break;
    default:
        ops_[at].count = region.children().size();
        for (const auto& c : region.children()) {
            emit(c, order);
        }
    }
    ops_[at].skip = ops_.size() - at;
    return at;
}

bool CompiledRegion::contains(std::span<const double> values) const {
    return eval(0, values);
}

bool CompiledRegion::eval(std::size_t at, std::span<const double> values) const {
    const Op& op = ops_[at];
    switch (op.kind) {
    case Kind::interval: {
        const double v = values[op.first];
        return v >= op.a && v <= op.b;
    }
    case Kind::ball: {
        const double p = op.b;
        double acc = 0.0;
        for (std::size_t i = 0; i < op.count; ++i) {
            const double d = std::abs(values[indices_[op.first + i]] - centers_[op.first + i]);
            if (p == kInfinity) {
                acc = std::max(acc, d);
            } else if (p == 1.0) {
                acc += d;
            } else if (p == 2.0) {
                acc += d * d;
            } else {
                acc += std::pow(d, p);
            }
        }
        double norm = acc;
        if (p == 2.0) {
            norm = std::sqrt(acc);
        } else if (p != 1.0 && p != kInfinity) {
            norm = std::pow(acc, 1.0 / p);
        }
        return norm <= op.a;
    }
    case Kind::all:
        return true;
    case Kind::negation:
        return !eval(at + 1, values);
    case Kind::conjunction: {
        std::size_t child = at + 1;
        for (std::size_t i = 0; i < op.count; ++i) {
            if (!eval(child, values)) {
                return false;
            }
            child += ops_[child].skip;
        }
        return true;
    }
    case Kind::disjunction: {
        std::size_t child = at + 1;
        for (std::size_t i = 0; i < op.count; ++i) {
            if (eval(child, values)) {
                return true;
            }
            child += ops_[child].skip;
        }
        return false;
    }
    }
    return false;
}

double pnorm(std::span<const double> diff, double p) {
    if (p == kInfinity) {
        double m = 0.0;
        for (double d : diff) {
            m = std::max(m, std::abs(d));
        }
        return m;
    }
    double acc = 0.0;
    for (double d : diff) {
        acc += std::pow(std::abs(d), p);
    }
    return std::pow(acc, 1.0 / p);
}

double ball_volume(std::size_t n, double radius, double p) {
    const double dim = static_cast<double>(n);
    if (p == kInfinity) {
        return std::pow(2.0 * radius, dim);
    }
    return std::pow(2.0 * radius * std::tgamma(1.0 + 1.0 / p), dim) / std::tgamma(1.0 + dim / p);
}

VolumeEstimate volume_analytic(const Region& region) {
    VolumeEstimate out;
    if (region.kind() == Kind::ball) {
        const auto& node = region.as_ball();
        out.value = ball_volume(node.vars.size(), node.radius, node.p);
        return out;
    }
    if (region.is_box()) {
        out.value = box_volume(region.bounding_box());
        return out;
    }
    throw Error(ErrorCode::unsupported_analytic,
                "analytic volume needs a single ball or a conjunction of intervals");
}

VolumeEstimate volume_monte_carlo(const Region& region, std::size_t samples,
                                  std::uint64_t seed) {
    if (samples == 0) {
        throw Error(ErrorCode::invalid_argument, "Monte-Carlo volume needs samples > 0");
    }
    const Box box = region.bounding_box();
    VolumeEstimate out;
    out.samples = samples;
    if (box_empty(box)) {
        out.stderr_value = 0.0;
        return out;
    }

    std::vector<std::string> order;
    std::vector<Range> ranges;
    for (const auto& [var, range] : box) {
        order.push_back(var);
        ranges.push_back(range);
    }
    const CompiledRegion compiled(region, order);
    CounterRng rng(seed);
    std::vector<double> x(order.size());
    std::size_t hits = 0;
    for (std::size_t s = 0; s < samples; ++s) {
        for (std::size_t k = 0; k < x.size(); ++k) {
            x[k] = rng.uniform(ranges[k].lo, ranges[k].hi);
        }
        if (compiled.contains(x)) {
            ++hits;
        }
    }

    const double n = static_cast<double>(samples);
    const double frac = static_cast<double>(hits) / n;
    const double box_vol = box_volume(box);
    out.accepted = hits;
    out.value = frac * box_vol;
    out.stderr_value = box_vol * std::sqrt(std::max(0.0, frac * (1.0 - frac) / n));
    return out;
}

Region Cursor::to_region() const {
    std::vector<Region> parts;
    for (const auto& [var, value] : coords) {
        if (!std::isfinite(value)) {
            throw Error(ErrorCode::invalid_value, "cursor coordinate '" + var + "' is not finite");
        }
        parts.push_back(Region::interval(var, value, value));
    }
    return Region::conjunction(std::move(parts));
}

Region from_rectangle(const ViewMapping& view, const ScreenRect& rect) {
    if (view.x_var.empty() || view.y_var.empty()) {
        throw Error(ErrorCode::invalid_argument, "view must map two data columns");
    }
    const double xa = view.x.to_data(rect.x0);
    const double xb = view.x.to_data(rect.x1);
    const double ya = view.y.to_data(rect.y0);
    const double yb = view.y.to_data(rect.y1);
    return Region::conjunction({
        Region::interval(view.x_var, std::min(xa, xb), std::max(xa, xb)),
        Region::interval(view.y_var, std::min(ya, yb), std::max(ya, yb)),
    });
}

} // namespace paraspace::region
