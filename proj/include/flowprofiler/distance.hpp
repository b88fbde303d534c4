#pragma once

#include <cmath>
#include <span>

#include "flowprofiler/errors.hpp"
#include "flowprofiler/types.hpp"

namespace flowprofiler {

inline double squared_distance(const Point& a, const Point& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double euclidean(const Point& a, const Point& b) {
    return std::sqrt(squared_distance(a, b));
}

inline void require_finite(std::span<const Point> points) {
    for (const auto& p : points) {
        for (double x : p) {
            if (!std::isfinite(x)) throw NonFiniteInput("point set contains a non-finite coordinate");
        }
    }
}

inline void require_same_dim(std::span<const Point> points) {
    if (points.empty()) return;
    size_t d = points[0].size();
    for (const auto& p : points) {
        if (p.size() != d) throw DimensionMismatch("point set has mixed dimensions");
    }
}

} // namespace flowprofiler
