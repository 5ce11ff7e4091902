#pragma once
// Next-letter-size selection, plus the maximum-likelihood machinery behind
// the FrACT baseline.

#include "acuity/belief.hpp"
#include "acuity/random.hpp"
#include "acuity/units_vrf.hpp"

#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace acuity {

// Displayable letter sizes, arcmin.
struct SizeBounds {
    double min = 0.1;
    double max = 200.0;

    void validate() const;
};

struct SizeChoice {
    double size;
    bool clamped;
};

SizeChoice clamp_size(double size, const SizeBounds& bounds);

struct PosteriorMatching {};
struct GreedyMap {};
struct FractMaxInfo {};
struct FixedSequence {
    std::vector<double> sizes;  // cycled when the exam outlasts the list
};

using PolicyKind = std::variant<PosteriorMatching, GreedyMap, FractMaxInfo, FixedSequence>;

std::string policy_name(const PolicyKind& policy);
// "posterior-matching", "greedy-map" or "fract-max-info".
PolicyKind policy_from_name(std::string_view name);

// Thompson-style choice: the k1 of a particle drawn from the posterior.
SizeChoice next_size_posterior_matching(const ParticleSet& ps, Rng& rng, const SizeBounds& bounds);
SizeChoice next_size_greedy_map(const ParticleSet& ps, const SizeBounds& bounds);

struct FractFit {
    FractParams params;
    double log_likelihood;  // includes the two anchoring pseudo-responses
    bool boundary;  // optimum sat on a search bound, or the history cannot pin it down
};

// Search box for the logistic MLE. The threshold 1/v0 stays within the size
// bounds; slope is the logistic steepness on log size.
inline constexpr double kFractSlopeMin = 1.0;
inline constexpr double kFractSlopeMax = 10.0;

FractFit fract_mle(std::span<const Observation> history, double c, const SizeBounds& bounds);

// The logistic is steepest on a log-size axis at x = 1/v0 for every slope.
SizeChoice fract_next_size(const FractParams& params, const SizeBounds& bounds);

// Fisher information about the threshold carried by one trial at size x.
double fract_threshold_information(double x, const FractParams& params);

}  // namespace acuity
