#ifndef SEXPLAIN_GRADCHECK_HPP
#define SEXPLAIN_GRADCHECK_HPP

#include "sexplain/rng.hpp"
#include "sexplain/tensor.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

namespace sexplain {

// Central-difference check of an analytic gradient, 64-bit throughout.
// Returns max over probed coordinates of
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// max_coords < 0 probes every coordinate.
inline double grad_check(const std::function<double(const Tensord&)>& objective,
                         const Tensord& input, const Tensord& analytic_grad, double epsilon,
                         int max_coords = -1, std::uint64_t seed = 0) {
    if (!(epsilon >= 1e-6 && epsilon <= 1e-3))
        throw std::invalid_argument("grad_check: epsilon must be in [1e-6, 1e-3]");
    if (!input.same_shape(analytic_grad))
        throw ShapeError("grad_check: gradient shape must match input");

    std::vector<Eigen::Index> coords;
    const Eigen::Index total = input.size();
    if (max_coords < 0 || max_coords >= total) {
        coords.resize(total);
        for (Eigen::Index i = 0; i < total; ++i) coords[i] = i;
    } else {
        Rng rng(seed);
        for (int i = 0; i < max_coords; ++i)
            coords.push_back(static_cast<Eigen::Index>(rng.below(total)));
    }

    Tensord probe = input;
    double worst = 0.0;
    for (Eigen::Index idx : coords) {
        const double orig = probe.data[idx];
        probe.data[idx] = orig + epsilon;
        const double fp = objective(probe);
        probe.data[idx] = orig - epsilon;
        const double fm = objective(probe);
        probe.data[idx] = orig;
        const double numeric = (fp - fm) / (2.0 * epsilon);
        const double analytic = analytic_grad.data[idx];
        const double rel = std::abs(analytic - numeric) /
                           std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace sexplain

#endif
