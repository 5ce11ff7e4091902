#pragma once
// Acuity units and visual response functions (VRFs).
//
// Canonical unit is the arcminute of visual angle subtended by the optotype.
// logMAR is log10(arcmin); Snellen 20/X corresponds to X/20 arcmin.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace acuity {

class Arcmin {
public:
    explicit Arcmin(double value);
    double value() const noexcept { return value_; }
    friend bool operator==(Arcmin, Arcmin) = default;

private:
    double value_;
};

class LogMar {
public:
    explicit constexpr LogMar(double value) noexcept : value_(value) {}
    constexpr double value() const noexcept { return value_; }
    friend bool operator==(LogMar, LogMar) = default;

private:
    double value_;
};

LogMar arcmin_to_logmar(Arcmin x);
Arcmin logmar_to_arcmin(LogMar m);
Arcmin snellen_to_arcmin(double numerator, double denominator);

// Floored Exponential parameters. k0: size where discernment begins,
// k1: acuity (size answered correctly with probability tau), c: guess rate.
struct VrfParams {
    double k0;
    double k1;
    double c;
    double tau;

    void validate() const;  // throws std::invalid_argument
};

// v(x) = max{c, 1 - (1-c) exp(-lambda (x - b))}
struct LocationScaleParams {
    double b;
    double lambda;
    double c;
};

// Logistic VRF: c + (1-c) / (1 + (v0 x)^slope). `slope` is the shape
// exponent of the logistic, not a slip rate.
struct FractParams {
    double v0;
    double slope;
    double c;
};

// As printed, the logistic falls with x (it was written for decimal acuity
// units). IncreasingWithSize uses (v0 x)^-slope so bigger letters are easier,
// which is the orientation every exam in this library uses.
enum class Orientation { AsPrinted, IncreasingWithSize };

enum class ResponseModel { FlooredExponential, Logistic };

double floored_exp(double x, const VrfParams& p);
double location_scale_vrf(double x, const LocationScaleParams& ls);
VrfParams reparameterize(const LocationScaleParams& ls, double tau);
LocationScaleParams to_location_scale(const VrfParams& p);

double fract_logistic(double x, const FractParams& p,
                      Orientation orientation = Orientation::AsPrinted);
// Size at which the logistic reaches `tau`.
double fract_acuity(const FractParams& p, double tau,
                    Orientation orientation = Orientation::IncreasingWithSize);

// Logistic (increasing orientation) anchored on Floored Exponential style
// parameters: it equals tau at k1 and c + kLogisticOnsetFraction (1 - c) at k0.
inline constexpr double kLogisticOnsetFraction = 0.05;
FractParams logistic_from_anchors(const VrfParams& p);

// Probability of a correct answer under either response model, using the
// (k0, k1, c, tau) anchors.
double response_probability(ResponseModel model, double x, const VrfParams& p);

double with_slip(double v, double slip, double c);

struct SizeTrialSummary {
    double size;
    int successes;
    int trials;
};

class UnfittableError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FlooredExpFit {
    VrfParams params;
    double mean_log_likelihood;  // per trial
    bool boundary;               // k1 fell outside the tested size range
};

struct LogisticFit {
    FractParams params;
    double mean_log_likelihood;
};

// Binomial maximum likelihood over (k0, k1) with c and tau fixed.
FlooredExpFit fit_floored_exp(std::span<const SizeTrialSummary> data, double c, double tau);
// Binomial maximum likelihood over (v0, slope), increasing orientation.
LogisticFit fit_logistic(std::span<const SizeTrialSummary> data, double c);

double mean_log_likelihood(std::span<const SizeTrialSummary> data, auto&& prob) {
    double ll = 0.0;
    long n = 0;
    for (const auto& d : data) {
        double p = prob(d.size);
        p = std::clamp(p, 1e-300, 1.0 - 1e-16);
        ll += d.successes * std::log(p) + (d.trials - d.successes) * std::log1p(-p);
        n += d.trials;
    }
    return n > 0 ? ll / static_cast<double>(n) : 0.0;
}

}  // namespace acuity
