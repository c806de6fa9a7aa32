#pragma once

#include "rrr/rng.hpp"
#include "rrr/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace rrr::testing {

inline double rel_error(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_error(const Tensor& a, const Tensor& b, double floor = 1e-8) {
    double worst = 0.0;
    for (Index i = 0; i < a.numel(); ++i) worst = std::max(worst, rel_error(a[i], b[i], floor));
    return worst;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace rrr::testing
