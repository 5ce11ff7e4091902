// Maximum-likelihood fitting of per-size trial summaries.

#include "acuity/units_vrf.hpp"
#include "minimize.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace acuity {
namespace {

struct SizeRange {
    double lo;
    double hi;
};

SizeRange validate_trials(std::span<const SizeTrialSummary> data) {
    std::set<double> sizes;
    for (const auto& d : data) {
        if (!(d.size > 0.0)) throw std::invalid_argument("trial summary size must be positive");
        if (d.trials <= 0) throw std::invalid_argument("trial summary needs at least one trial");
        if (d.successes < 0 || d.successes > d.trials)
            throw std::invalid_argument("trial summary successes out of range");
        sizes.insert(d.size);
    }
    if (sizes.size() < 3) throw std::invalid_argument("fitting needs at least three distinct sizes");
    return {*sizes.begin(), *sizes.rbegin()};
}

double logistic_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

FlooredExpFit fit_floored_exp(std::span<const SizeTrialSummary> data, double c, double tau) {
    const SizeRange range = validate_trials(data);
    if (!(c > 0.0 && c < tau && tau < 1.0)) throw std::invalid_argument("fit_floored_exp: need 0 < c < tau < 1");

    bool informative = false;
    for (const auto& d : data) {
        const double rate = static_cast<double>(d.successes) / d.trials;
        if (rate > c + 2.0 * std::sqrt(c * (1.0 - c) / d.trials)) informative = true;
    }
    if (!informative) throw UnfittableError("all response rates are consistent with guessing");

    // theta = (ln k1, logit(k0 / k1))
    const double ln_k1_lo = std::log(range.lo / 100.0);
    const double ln_k1_hi = std::log(range.hi * 100.0);
    auto to_params = [&](const std::vector<double>& theta) {
        const double ln_k1 = std::clamp(theta[0], ln_k1_lo, ln_k1_hi);
        const double ratio = logistic_sigmoid(std::clamp(theta[1], -10.0, 10.0));
        const double k1 = std::exp(ln_k1);
        return VrfParams{ratio * k1, k1, c, tau};
    };
    auto objective = [&](const std::vector<double>& theta) {
        const VrfParams p = to_params(theta);
        return -mean_log_likelihood(data, [&](double x) { return floored_exp(x, p); });
    };

    std::vector<double> best{0.0, 0.0};
    double best_value = std::numeric_limits<double>::infinity();
    const int n_k1 = 120;
    const int n_ratio = 30;
    for (int i = 0; i < n_k1; ++i) {
        const double ln_k1 = std::log(range.lo / 10.0) +
                             (std::log(range.hi * 10.0) - std::log(range.lo / 10.0)) * i / (n_k1 - 1);
        for (int j = 0; j < n_ratio; ++j) {
            const double logit_r = -6.0 + 12.0 * j / (n_ratio - 1);
            std::vector<double> theta{ln_k1, logit_r};
            const double v = objective(theta);
            if (v < best_value) {
                best_value = v;
                best = theta;
            }
        }
    }

    auto refined = detail::nelder_mead(objective, best, {0.05, 0.4}, 2000, 1e-9);
    std::vector<double> theta = refined.value < best_value ? refined.x : best;
    FlooredExpFit fit;
    fit.params = to_params(theta);
    fit.mean_log_likelihood = -objective(theta);
    fit.boundary = fit.params.k1 < range.lo || fit.params.k1 > range.hi;
    return fit;
}

LogisticFit fit_logistic(std::span<const SizeTrialSummary> data, double c) {
    const SizeRange range = validate_trials(data);
    if (!(c >= 0.0 && c < 1.0)) throw std::invalid_argument("fit_logistic: c out of range");

    // theta = (ln v0, ln slope)
    auto to_params = [&](const std::vector<double>& theta) {
        return FractParams{std::exp(theta[0]), std::exp(std::clamp(theta[1], std::log(0.05), std::log(500.0))), c};
    };
    auto objective = [&](const std::vector<double>& theta) {
        const FractParams p = to_params(theta);
        return -mean_log_likelihood(
            data, [&](double x) { return fract_logistic(x, p, Orientation::IncreasingWithSize); });
    };

    std::vector<double> best{0.0, 0.0};
    double best_value = std::numeric_limits<double>::infinity();
    const double ln_v0_lo = -std::log(range.hi * 10.0);
    const double ln_v0_hi = -std::log(range.lo / 10.0);
    for (int i = 0; i < 120; ++i) {
        const double ln_v0 = ln_v0_lo + (ln_v0_hi - ln_v0_lo) * i / 119.0;
        for (int j = 0; j < 30; ++j) {
            const double ln_s = std::log(0.2) + (std::log(100.0) - std::log(0.2)) * j / 29.0;
            std::vector<double> theta{ln_v0, ln_s};
            const double v = objective(theta);
            if (v < best_value) {
                best_value = v;
                best = theta;
            }
        }
    }
    auto refined = detail::nelder_mead(objective, best, {0.05, 0.2}, 2000, 1e-9);
    std::vector<double> theta = refined.value < best_value ? refined.x : best;
    return LogisticFit{to_params(theta), -objective(theta)};
}

}  // namespace acuity
