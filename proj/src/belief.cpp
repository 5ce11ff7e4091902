#include "acuity/belief.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace acuity {
namespace {

constexpr double kRescaleThreshold = 1e-100;

double to_arcmin(double log_value, LogBase base) {
    return base == LogBase::Ten ? std::pow(10.0, log_value) : std::exp(log_value);
}

}  // namespace

void GumbelPrior::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("Gumbel prior beta must be positive");
    if (!std::isfinite(mu)) throw std::invalid_argument("Gumbel prior mu must be finite");
}

void K0RatioPrior::validate() const {
    if (!(lo > 0.0 && lo < hi && hi < 1.0)) throw std::invalid_argument("k0 ratio prior needs 0 < lo < hi < 1");
}

double gumbel_quantile(const GumbelPrior& prior, double u) {
    return prior.mu - prior.beta * std::log(-std::log(u));
}

double sample_gumbel(const GumbelPrior& prior, Rng& rng) {
    return gumbel_quantile(prior, uniform01(rng));
}

double sample_k1(const AcuityPrior& prior, Rng& rng) {
    return std::visit(
        [&](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, GumbelPrior>) {
                return to_arcmin(sample_gumbel(p, rng), p.base);
            } else {
                return std::pow(10.0, uniform(rng, p.lo, p.hi));
            }
        },
        prior);
}

double prior_mode(const AcuityPrior& prior) {
    return std::visit(
        [](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, GumbelPrior>) {
                return to_arcmin(p.mu, p.base);
            } else {
                return std::pow(10.0, 0.5 * (p.lo + p.hi));
            }
        },
        prior);
}

void validate_prior(const AcuityPrior& prior) {
    std::visit(
        [](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, GumbelPrior>) {
                p.validate();
            } else if (!(p.lo < p.hi)) {
                throw std::invalid_argument("flat prior needs lo < hi");
            }
        },
        prior);
}

ParticleSet::ParticleSet(std::vector<Particle> particles, double c, double tau, ResponseModel model)
    : c_(c), tau_(tau), model_(model) {
    if (particles.empty()) throw std::invalid_argument("ParticleSet cannot be empty");
    if (!(c > 0.0 && c < tau && tau <= 1.0)) throw std::invalid_argument("ParticleSet: need 0 < c < tau <= 1");

    const std::size_t n = particles.size();
    k0_.reserve(n);
    k1_.reserve(n);
    log10_k1_.reserve(n);
    weight_.reserve(n);
    coef_a_.reserve(n);
    coef_b_.reserve(n);
    const double log_base = tau < 1.0 ? std::log((1.0 - tau) / (1.0 - c)) : 0.0;
    for (const auto& p : particles) {
        if (!(p.k0 > 0.0 && p.k0 < p.k1)) throw std::invalid_argument("particle needs 0 < k0 < k1");
        if (!(p.weight >= 0.0)) throw std::invalid_argument("particle weight must be nonnegative");
        k0_.push_back(p.k0);
        k1_.push_back(p.k1);
        log10_k1_.push_back(std::log10(p.k1));
        weight_.push_back(p.weight);
        if (model == ResponseModel::FlooredExponential) {
            coef_a_.push_back(log_base / (p.k1 - p.k0));
            coef_b_.push_back(0.0);
        } else {
            const FractParams f = logistic_from_anchors(VrfParams{p.k0, p.k1, c, tau});
            coef_a_.push_back(f.slope);
            coef_b_.push_back(std::log(f.v0));
        }
    }
    total_ = std::accumulate(weight_.begin(), weight_.end(), 0.0);
    if (!(total_ > 0.0)) throw std::invalid_argument("ParticleSet needs positive total weight");

    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t a, std::size_t b) { return k1_[a] < k1_[b]; });
}

double ParticleSet::response(std::size_t i, double x) const {
    if (model_ == ResponseModel::FlooredExponential) {
        if (x <= k0_[i]) return c_;
        if (tau_ >= 1.0) return 1.0;
        const double e = std::max(coef_a_[i] * (x - k0_[i]), -700.0);
        return std::max(c_, 1.0 - (1.0 - c_) * std::exp(e));
    }
    return c_ + (1.0 - c_) / (1.0 + std::exp(-coef_a_[i] * (std::log(x) + coef_b_[i])));
}

double ParticleSet::likelihood(std::size_t i, const Observation& obs, double slip) const {
    const double p = with_slip(response(i, obs.size), slip, c_);
    return obs.correct ? p : 1.0 - p;
}

void ParticleSet::update(const Observation& obs, double slip) {
    if (!(obs.size > 0.0)) throw std::invalid_argument("observation size must be positive");
    if (total_ < kRescaleThreshold && total_ > 0.0) {
        const double inv = 1.0 / total_;
        for (double& w : weight_) w *= inv;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < weight_.size(); ++i) {
        weight_[i] *= likelihood(i, obs, slip);
        total += weight_[i];
    }
    total_ = total;
}

std::vector<double> ParticleSet::normalized_weights() const {
    std::vector<double> out(weight_);
    if (total_ > 0.0)
        for (double& w : out) w /= total_;
    return out;
}

double ParticleSet::effective_sample_size() const {
    if (!(total_ > 0.0)) return 0.0;
    double sq = 0.0;
    for (double w : weight_) sq += (w / total_) * (w / total_);
    return 1.0 / sq;
}

ParticleSet init_particles(const AcuityPrior& prior, const K0RatioPrior& k0_prior, std::size_t n,
                           double c, double tau, Rng& rng, ResponseModel model) {
    if (n == 0) throw std::invalid_argument("init_particles needs n >= 1");
    validate_prior(prior);
    k0_prior.validate();
    std::vector<Particle> particles;
    particles.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double k1 = sample_k1(prior, rng);
        const double ratio = uniform(rng, k0_prior.lo, k0_prior.hi);
        particles.push_back({ratio * k1, k1, 1.0});
    }
    return ParticleSet(std::move(particles), c, tau, model);
}

double posterior_map(const ParticleSet& ps) {
    const double total = ps.total_weight();
    if (!(total > 0.0)) throw std::domain_error("posterior_map: all particle weights are zero");

    const auto order = ps.order_by_k1();
    const auto xs = ps.log10_k1();
    const std::size_t n = ps.size();

    double w_max = 0.0;
    std::size_t i_max = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (ps.weight(i) > w_max) {
            w_max = ps.weight(i);
            i_max = i;
        }
    }

    // Weighted moments, IQR and effective sample size for the Silverman rule.
    double mean = 0.0;
    double sum_sq_w = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = ps.weight(i) / total;
        mean += w * xs[i];
        sum_sq_w += w * w;
    }
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = xs[i] - mean;
        var += ps.weight(i) / total * d * d;
    }
    double q25 = xs[order.back()];
    double q75 = xs[order.back()];
    {
        double cum = 0.0;
        bool have25 = false;
        for (std::size_t idx : order) {
            cum += ps.weight(idx) / total;
            if (!have25 && cum >= 0.25) {
                q25 = xs[idx];
                have25 = true;
            }
            if (cum >= 0.75) {
                q75 = xs[idx];
                break;
            }
        }
    }
    const double sd = std::sqrt(std::max(var, 0.0));
    const double iqr_scale = (q75 - q25) / 1.34;
    const double spread = iqr_scale > 0.0 ? std::min(sd, iqr_scale) : sd;
    const double n_eff = 1.0 / sum_sq_w;
    const double h = 0.9 * spread * std::pow(n_eff, -0.2);
    if (!(h > 1e-12)) return ps.k1(i_max);

    // Binned KDE: linear binning onto a grid of spacing h/8, Gaussian
    // convolution truncated at 4h, then interpolation back to each particle.
    const double cutoff = w_max * 1e-12;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        if (ps.weight(i) > cutoff) {
            lo = std::min(lo, xs[i]);
            hi = std::max(hi, xs[i]);
        }
    }
    lo -= 4.0 * h;
    hi += 4.0 * h;
    const std::size_t grid = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil((hi - lo) / (h / 8.0))) + 1, 64, std::size_t{1} << 16);
    const double dx = (hi - lo) / static_cast<double>(grid - 1);

    std::vector<double> binned(grid, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = ps.weight(i);
        if (w <= cutoff) continue;
        const double pos = (xs[i] - lo) / dx;
        const auto j = std::min(static_cast<std::size_t>(pos), grid - 2);
        const double frac = pos - static_cast<double>(j);
        binned[j] += w * (1.0 - frac);
        binned[j + 1] += w * frac;
    }
    const auto half = static_cast<std::ptrdiff_t>(std::ceil(4.0 * h / dx));
    std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
    for (std::ptrdiff_t m = -half; m <= half; ++m) {
        const double z = static_cast<double>(m) * dx / h;
        kernel[static_cast<std::size_t>(m + half)] = std::exp(-0.5 * z * z);
    }
    std::vector<double> density(grid, 0.0);
    const auto g = static_cast<std::ptrdiff_t>(grid);
    for (std::ptrdiff_t j = 0; j < g; ++j) {
        const double b = binned[static_cast<std::size_t>(j)];
        if (b == 0.0) continue;
        const std::ptrdiff_t from = std::max<std::ptrdiff_t>(0, j - half);
        const std::ptrdiff_t to = std::min<std::ptrdiff_t>(g - 1, j + half);
        for (std::ptrdiff_t t = from; t <= to; ++t)
            density[static_cast<std::size_t>(t)] += b * kernel[static_cast<std::size_t>(t - j + half)];
    }

    double best_density = -1.0;
    std::size_t best = i_max;
    for (std::size_t idx : order) {
        if (ps.weight(idx) <= cutoff) continue;
        const double pos = (xs[idx] - lo) / dx;
        const auto j = std::min(static_cast<std::size_t>(pos), grid - 2);
        const double frac = pos - static_cast<double>(j);
        const double d = density[j] * (1.0 - frac) + density[j + 1] * frac;
        if (d > best_density) {
            best_density = d;
            best = idx;
        }
    }
    return ps.k1(best);
}

double posterior_sample(const ParticleSet& ps, Rng& rng) {
    const double total = ps.total_weight();
    if (!(total > 0.0)) throw std::domain_error("posterior_sample: all particle weights are zero");
    const double target = uniform01(rng) * total;
    double cum = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const double w = ps.weight(i);
        if (w <= 0.0) continue;
        last_positive = i;
        cum += w;
        if (cum > target) return ps.k1(i);
    }
    return ps.k1(last_positive);
}

double credible_mass(const ParticleSet& ps, double center, double rel_eps) {
    if (!(rel_eps > 0.0)) throw std::invalid_argument("credible_mass: rel_eps must be positive");
    if (!(center > 0.0)) throw std::invalid_argument("credible_mass: center must be positive");
    const double total = ps.total_weight();
    if (!(total > 0.0)) return 0.0;
    // |center - k1| / k1 <= eps  <=>  center/(1+eps) <= k1 <= center/(1-eps)
    const double lo = center / (1.0 + rel_eps);
    const double hi = rel_eps < 1.0 ? center / (1.0 - rel_eps) : std::numeric_limits<double>::infinity();
    double mass = 0.0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const double k1 = ps.k1(i);
        if (k1 >= lo && k1 <= hi) mass += ps.weight(i);
    }
    return std::min(1.0, mass / total);
}

std::vector<double> posterior_quantiles(const ParticleSet& ps, std::span<const double> qs) {
    for (std::size_t i = 0; i < qs.size(); ++i) {
        if (!(qs[i] > 0.0 && qs[i] < 1.0)) throw std::invalid_argument("quantile levels must lie in (0, 1)");
        if (i > 0 && qs[i] < qs[i - 1]) throw std::invalid_argument("quantile levels must be sorted");
    }
    const double total = ps.total_weight();
    if (!(total > 0.0)) throw std::domain_error("posterior_quantiles: all particle weights are zero");

    std::vector<double> out;
    out.reserve(qs.size());
    const auto order = ps.order_by_k1();
    double cum = 0.0;
    std::size_t pos = 0;
    for (double q : qs) {
        const double target = q * total * (1.0 - 1e-12);
        while (pos < order.size() && cum + ps.weight(order[pos]) < target) {
            cum += ps.weight(order[pos]);
            ++pos;
        }
        out.push_back(ps.k1(order[std::min(pos, order.size() - 1)]));
    }
    return out;
}

LogMarHistogram logmar_histogram(const ParticleSet& ps, double lo, double hi, std::size_t bins) {
    if (!(lo < hi) || bins == 0) throw std::invalid_argument("logmar_histogram: bad range");
    LogMarHistogram h;
    h.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    h.mass.assign(bins, 0.0);
    const double total = ps.total_weight();
    if (!(total > 0.0)) return h;
    const double width = (hi - lo) / static_cast<double>(bins);
    const auto xs = ps.log10_k1();
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const double pos = std::floor((xs[i] - lo) / width);
        const auto b = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
        h.mass[b] += ps.weight(i) / total;
    }
    return h;
}

}  // namespace acuity
