#pragma once
// Particle belief over (k0, k1).
//
// Particles are drawn once from the prior and never moved or discarded; each
// observation multiplies every weight by that particle's likelihood, so an
// update costs O(particles) regardless of how long the exam has run.

#include "acuity/random.hpp"
#include "acuity/units_vrf.hpp"

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

namespace acuity {

enum class LogBase { Ten, E };

// Gumbel (maximum) distribution over log k1. mu and beta are in units of the
// chosen log base; with base ten they are logMAR.
struct GumbelPrior {
    double mu = 0.3;
    double beta = 0.5;
    LogBase base = LogBase::Ten;

    void validate() const;
};

// Flat prior over logMAR, used for the no-prior ablation.
struct UniformLogMarPrior {
    double lo = -0.5;
    double hi = 2.0;
};

using AcuityPrior = std::variant<GumbelPrior, UniformLogMarPrior>;

// p(k0 | k1): k0 = r k1 with r ~ Uniform(lo, hi).
struct K0RatioPrior {
    double lo = 0.75;
    double hi = 0.95;

    void validate() const;
};

struct Particle {
    double k0;
    double k1;
    double weight;
};

struct Observation {
    double size;  // arcmin
    bool correct;
};

/// Inverse-CDF Gumbel transform: mu - beta ln(-ln u).
double gumbel_quantile(const GumbelPrior& prior, double u);
/// Draw of log k1 in the prior's base.
double sample_gumbel(const GumbelPrior& prior, Rng& rng);
double sample_k1(const AcuityPrior& prior, Rng& rng);
/// Acuity (arcmin) at the mode of the prior; midpoint for the flat prior.
double prior_mode(const AcuityPrior& prior);
void validate_prior(const AcuityPrior& prior);

class ParticleSet {
public:
    ParticleSet(std::vector<Particle> particles, double c, double tau,
                ResponseModel model = ResponseModel::FlooredExponential);

    std::size_t size() const noexcept { return k1_.size(); }
    Particle particle(std::size_t i) const { return {k0_[i], k1_[i], weight_[i]}; }
    double k1(std::size_t i) const { return k1_[i]; }
    double weight(std::size_t i) const { return weight_[i]; }
    double total_weight() const noexcept { return total_; }
    double guess_rate() const noexcept { return c_; }
    double target_probability() const noexcept { return tau_; }
    ResponseModel model() const noexcept { return model_; }

    /// Indices sorted by ascending k1; fixed for the lifetime of the set.
    std::span<const std::size_t> order_by_k1() const noexcept { return order_; }
    std::span<const double> log10_k1() const noexcept { return log10_k1_; }

    /// Likelihood of `obs` under particle i, with slip mixed in.
    double likelihood(std::size_t i, const Observation& obs, double slip) const;

    void update(const Observation& obs, double slip);

    std::vector<double> normalized_weights() const;
    double effective_sample_size() const;

private:
    double response(std::size_t i, double x) const;

    std::vector<double> k0_;
    std::vector<double> k1_;
    std::vector<double> log10_k1_;
    std::vector<double> weight_;
    // FE: exponent rate ln((1-tau)/(1-c)) / (k1-k0). Logistic: slope.
    std::vector<double> coef_a_;
    // Logistic only: ln v0.
    std::vector<double> coef_b_;
    std::vector<std::size_t> order_;
    double total_ = 0.0;
    double c_;
    double tau_;
    ResponseModel model_;
};

ParticleSet init_particles(const AcuityPrior& prior, const K0RatioPrior& k0_prior,
                           std::size_t n, double c, double tau, Rng& rng,
                           ResponseModel model = ResponseModel::FlooredExponential);

/// Mode of a weighted Gaussian KDE over log10(k1), evaluated at the particles.
double posterior_map(const ParticleSet& ps);
/// k1 of a particle drawn with probability proportional to weight.
double posterior_sample(const ParticleSet& ps, Rng& rng);
/// Posterior mass of true k1 values within relative error rel_eps of center.
double credible_mass(const ParticleSet& ps, double center, double rel_eps);
/// Weighted quantiles of k1; ties resolve to the lower particle.
std::vector<double> posterior_quantiles(const ParticleSet& ps, std::span<const double> qs);

struct LogMarHistogram {
    std::vector<double> edges;  // logMAR, size = mass.size() + 1
    std::vector<double> mass;   // sums to 1; outliers fold into the end bins
};
LogMarHistogram logmar_histogram(const ParticleSet& ps, double lo, double hi, std::size_t bins);

}  // namespace acuity
