#pragma once
// Nelder-Mead minimisation backed by GSL's nmsimplex2.

#include <functional>
#include <vector>

namespace acuity::detail {

struct MinimizeResult {
    std::vector<double> x;
    double value;
    bool converged;
};

using Objective = std::function<double(const std::vector<double>&)>;

MinimizeResult nelder_mead(const Objective& f, std::vector<double> start,
                           std::vector<double> step, int max_iter = 500,
                           double size_tol = 1e-7);

}  // namespace acuity::detail
