#include "acuity/policy.hpp"

#include "minimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace acuity {

void SizeBounds::validate() const {
    if (!(min > 0.0 && min < max)) throw std::invalid_argument("size bounds need 0 < min < max");
}

SizeChoice clamp_size(double size, const SizeBounds& bounds) {
    if (size < bounds.min) return {bounds.min, true};
    if (size > bounds.max) return {bounds.max, true};
    return {size, false};
}

std::string policy_name(const PolicyKind& policy) {
    return std::visit(
        [](const auto& p) -> std::string {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, PosteriorMatching>) return "posterior-matching";
            else if constexpr (std::is_same_v<T, GreedyMap>) return "greedy-map";
            else if constexpr (std::is_same_v<T, FractMaxInfo>) return "fract-max-info";
            else return "fixed-sequence";
        },
        policy);
}

PolicyKind policy_from_name(std::string_view name) {
    if (name == "posterior-matching") return PosteriorMatching{};
    if (name == "greedy-map") return GreedyMap{};
    if (name == "fract-max-info") return FractMaxInfo{};
    throw std::invalid_argument("unknown policy: " + std::string(name));
}

SizeChoice next_size_posterior_matching(const ParticleSet& ps, Rng& rng, const SizeBounds& bounds) {
    return clamp_size(posterior_sample(ps, rng), bounds);
}

SizeChoice next_size_greedy_map(const ParticleSet& ps, const SizeBounds& bounds) {
    return clamp_size(posterior_map(ps), bounds);
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

FractFit fract_mle(std::span<const Observation> history, double c, const SizeBounds& bounds) {
    if (history.empty()) throw std::invalid_argument("fract_mle needs at least one observation");
    if (!(c >= 0.0 && c < 1.0)) throw std::invalid_argument("fract_mle: c out of range");

    std::vector<double> log_size;
    std::vector<char> correct;
    log_size.reserve(history.size());
    correct.reserve(history.size());
    std::size_t n_correct = 0;
    for (const auto& obs : history) {
        if (!(obs.size > 0.0)) throw std::invalid_argument("observation size must be positive");
        log_size.push_back(std::log(obs.size));
        correct.push_back(obs.correct ? 1 : 0);
        n_correct += obs.correct ? 1 : 0;
    }

    // Best PEST anchoring: one virtual correct answer at the largest size and
    // one virtual miss at the smallest keep the estimate finite when the real
    // history is one-sided.
    log_size.push_back(std::log(bounds.max));
    correct.push_back(1);
    log_size.push_back(std::log(bounds.min));
    correct.push_back(0);

    const double ln_v0_lo = -std::log(bounds.max);
    const double ln_v0_hi = -std::log(bounds.min);
    const double ln_s_lo = std::log(kFractSlopeMin);
    const double ln_s_hi = std::log(kFractSlopeMax);

    auto log_likelihood = [&](double ln_v0, double slope) {
        double ll = 0.0;
        for (std::size_t i = 0; i < log_size.size(); ++i) {
            const double p = c + (1.0 - c) * sigmoid(slope * (log_size[i] + ln_v0));
            ll += correct[i] ? std::log(std::max(p, 1e-300)) : std::log(std::max(1.0 - p, 1e-300));
        }
        return ll;
    };
    auto objective = [&](const std::vector<double>& theta) {
        const double ln_v0 = std::clamp(theta[0], ln_v0_lo, ln_v0_hi);
        const double ln_s = std::clamp(theta[1], ln_s_lo, ln_s_hi);
        return -log_likelihood(ln_v0, std::exp(ln_s));
    };

    // Coarse log grid, then simplex refinement.
    constexpr int kV0Steps = 48;
    constexpr int kSlopeSteps = 10;
    std::vector<double> best{ln_v0_lo, ln_s_lo};
    double best_value = std::numeric_limits<double>::infinity();
    for (int i = 0; i < kV0Steps; ++i) {
        const double ln_v0 = ln_v0_lo + (ln_v0_hi - ln_v0_lo) * i / (kV0Steps - 1);
        for (int j = 0; j < kSlopeSteps; ++j) {
            const double ln_s = ln_s_lo + (ln_s_hi - ln_s_lo) * j / (kSlopeSteps - 1);
            const double v = objective({ln_v0, ln_s});
            if (v < best_value) {
                best_value = v;
                best = {ln_v0, ln_s};
            }
        }
    }
    const double grid_step = (ln_v0_hi - ln_v0_lo) / (kV0Steps - 1);
    auto refined = detail::nelder_mead(objective, best, {0.5 * grid_step, 0.2}, 400, 1e-6);
    std::vector<double> theta = refined.value <= best_value ? refined.x : best;
    const double ln_v0 = std::clamp(theta[0], ln_v0_lo, ln_v0_hi);
    const double ln_s = std::clamp(theta[1], ln_s_lo, ln_s_hi);

    FractFit fit;
    fit.params = FractParams{std::exp(ln_v0), std::exp(ln_s), c};
    fit.log_likelihood = log_likelihood(ln_v0, fit.params.slope);
    const double tol = 1e-6;
    fit.boundary = n_correct == 0 || n_correct == history.size() ||
                   ln_v0 <= ln_v0_lo + tol || ln_v0 >= ln_v0_hi - tol;
    return fit;
}

SizeChoice fract_next_size(const FractParams& params, const SizeBounds& bounds) {
    if (!(params.v0 > 0.0 && params.slope > 0.0)) throw std::invalid_argument("fract_next_size: invalid params");
    return clamp_size(1.0 / params.v0, bounds);
}

double fract_threshold_information(double x, const FractParams& params) {
    const double s = sigmoid(params.slope * (std::log(x) + std::log(params.v0)));
    const double p = params.c + (1.0 - params.c) * s;
    const double dp = (1.0 - params.c) * params.slope * s * (1.0 - s);
    const double denom = p * (1.0 - p);
    return denom > 0.0 ? dp * dp / denom : 0.0;
}

}  // namespace acuity
