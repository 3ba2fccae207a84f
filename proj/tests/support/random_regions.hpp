#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "paraspace/region/region.hpp"

namespace paraspace::testing {

/// Random region trees over a fixed variable pool, for property tests.
class RegionGenerator {
public:
    RegionGenerator(std::vector<std::string> vars, unsigned seed) : vars_(std::move(vars)), rng_(seed) {}

    region::Region tree(int depth) {
        std::uniform_int_distribution<int> pick(0, depth > 0 ? 5 : 1);
        switch (pick(rng_)) {
        case 0: return interval();
        case 1: return ball();
        case 2: return region::Region::conjunction(children(depth));
        case 3: return region::Region::disjunction(children(depth));
        case 4: return region::Region::negation(tree(depth - 1));
        default: return region::Region::conjunction({interval(), tree(depth - 1)});
        }
    }

    region::Region interval() {
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        double a = u(rng_);
        double b = u(rng_);
        if (a > b) std::swap(a, b);
        return region::Region::interval(var(), a, b);
    }

    region::Region ball() {
        std::uniform_int_distribution<std::size_t> dim(1, vars_.size());
        const std::size_t n = dim(rng_);
        std::vector<std::string> names = vars_;
        std::shuffle(names.begin(), names.end(), rng_);
        names.resize(n);
        std::uniform_real_distribution<double> u(-1.5, 1.5);
        std::vector<double> center(n);
        for (auto& c : center) c = u(rng_);
        const double ps[] = {1.0, 1.5, 2.0, 3.0, region::kInfinity};
        std::uniform_int_distribution<int> pp(0, 4);
        std::uniform_real_distribution<double> r(0.1, 1.5);
        return region::Region::ball(names, center, r(rng_), ps[pp(rng_)]);
    }

    std::map<std::string, double> point(double spread = 2.5) {
        std::uniform_real_distribution<double> u(-spread, spread);
        std::map<std::string, double> p;
        for (const auto& v : vars_) p[v] = u(rng_);
        return p;
    }

    std::mt19937& engine() { return rng_; }

private:
    std::vector<region::Region> children(int depth) {
        std::uniform_int_distribution<int> count(1, 3);
        std::vector<region::Region> out;
        const int n = count(rng_);
        for (int i = 0; i < n; ++i) out.push_back(tree(depth - 1));
        return out;
    }

    const std::string& var() {
        std::uniform_int_distribution<std::size_t> pick(0, vars_.size() - 1);
        return vars_[pick(rng_)];
    }

    std::vector<std::string> vars_;
    std::mt19937 rng_;
};

} // namespace paraspace::testing
