#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "seqlab/model.hpp"
#include "seqlab/tensor.hpp"

namespace seqlab {

/// Central-difference verification of analytic gradients. loss_fn must be a
/// pure function of the registered parameter values; grad_fn must populate
/// the gradient buffers for the same loss. Returns the worst relative error
///   max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
/// over every scalar of every parameter. Meaningful in double precision.
template <typename S>
double grad_check(std::vector<ParamRef<S>> params, const std::function<double()>& loss_fn,
                  const std::function<void()>& grad_fn, double epsilon = 1e-5) {
    grad_fn();
    std::vector<std::vector<S>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(p.grad->data);

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<S>& theta = *params[pi].value;
        for (std::size_t i = 0; i < theta.numel(); ++i) {
            const S saved = theta.data[i];
            theta.data[i] = saved + static_cast<S>(epsilon);
            const double up = loss_fn();
            theta.data[i] = saved - static_cast<S>(epsilon);
            const double down = loss_fn();
            theta.data[i] = saved;
            const double numeric = (up - down) / (2.0 * epsilon);
            const double a = static_cast<double>(analytic[pi][i]);
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace seqlab
