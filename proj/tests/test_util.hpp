#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "cfa/matrix.hpp"

namespace testutil {

// Central-difference gradient of a scalar function of a flat parameter
// vector. h = 1e-5 matches the tolerance contracts used throughout.
inline std::vector<double> fd_grad(std::vector<double> params,
                                   const std::function<double(const std::vector<double>&)>& f,
                                   double h = 1e-5) {
    std::vector<double> g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = params[i];
        params[i] = orig + h;
        const double hi = f(params);
        params[i] = orig - h;
        const double lo = f(params);
        params[i] = orig;
        g[i] = (hi - lo) / (2.0 * h);
    }
    return g;
}

inline double rel_err(const std::vector<double>& got, const std::vector<double>& want) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        num += (got[i] - want[i]) * (got[i] - want[i]);
        den += want[i] * want[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-8);
}

inline double max_abs_diff(const cfa::Matrix& a, const cfa::Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace testutil
