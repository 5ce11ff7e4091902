#include "acuity/units_vrf.hpp"

#include <cmath>
#include <limits>

namespace acuity {

Arcmin::Arcmin(double value) : value_(value) {
    if (!(value > 0.0) || !std::isfinite(value))
        throw std::invalid_argument("Arcmin must be positive and finite, got " + std::to_string(value));
}

LogMar arcmin_to_logmar(Arcmin x) { return LogMar(std::log10(x.value())); }

Arcmin logmar_to_arcmin(LogMar m) { return Arcmin(std::pow(10.0, m.value())); }

Arcmin snellen_to_arcmin(double numerator, double denominator) {
    if (!(numerator > 0.0) || !(denominator > 0.0))
        throw std::invalid_argument("Snellen fraction needs positive numerator and denominator");
    return Arcmin(denominator / numerator);
}

void VrfParams::validate() const {
    if (!(k0 > 0.0 && k0 < k1 && std::isfinite(k1)))
        throw std::invalid_argument("VrfParams: need 0 < k0 < k1");
    if (!(c > 0.0 && c < tau && tau <= 1.0))
        throw std::invalid_argument("VrfParams: need 0 < c < tau <= 1");
}

double floored_exp(double x, const VrfParams& p) {
    p.validate();
    if (x <= p.k0) return p.c;
    if (p.tau >= 1.0) return 1.0;
    const double log_base = std::log((1.0 - p.tau) / (1.0 - p.c));  // < 0
    // exp() underflows to 0 past ~-745; clamp the exponent first.
    const double exponent = std::min((x - p.k0) / (p.k1 - p.k0), 700.0 / -log_base);
    return std::max(p.c, 1.0 - (1.0 - p.c) * std::exp(log_base * exponent));
}

double location_scale_vrf(double x, const LocationScaleParams& ls) {
    if (x <= ls.b) return ls.c;
    return std::max(ls.c, 1.0 - (1.0 - ls.c) * std::exp(-ls.lambda * (x - ls.b)));
}

VrfParams reparameterize(const LocationScaleParams& ls, double tau) {
    if (!(ls.lambda > 0.0)) throw std::invalid_argument("reparameterize: lambda must be positive");
    if (!(tau > ls.c)) throw std::invalid_argument("reparameterize: tau must exceed c");
    if (!(tau < 1.0)) throw std::invalid_argument("reparameterize: tau must be below 1");
    const double k1 = ls.b + std::log((1.0 - ls.c) / (1.0 - tau)) / ls.lambda;
    return VrfParams{ls.b, k1, ls.c, tau};
}

LocationScaleParams to_location_scale(const VrfParams& p) {
    if (!(p.tau < 1.0)) throw std::invalid_argument("to_location_scale: tau must be below 1");
    const double lambda = std::log((1.0 - p.c) / (1.0 - p.tau)) / (p.k1 - p.k0);
    return LocationScaleParams{p.k0, lambda, p.c};
}

double fract_logistic(double x, const FractParams& p, Orientation orientation) {
    const double e = orientation == Orientation::AsPrinted ? p.slope : -p.slope;
    return p.c + (1.0 - p.c) / (1.0 + std::pow(p.v0 * x, e));
}

double fract_acuity(const FractParams& p, double tau, Orientation orientation) {
    if (!(tau > p.c && tau < 1.0)) throw std::invalid_argument("fract_acuity: need c < tau < 1");
    const double q = (tau - p.c) / (1.0 - p.c);
    const double odds = orientation == Orientation::IncreasingWithSize ? q / (1.0 - q) : (1.0 - q) / q;
    return std::pow(odds, 1.0 / p.slope) / p.v0;
}

FractParams logistic_from_anchors(const VrfParams& p) {
    const double q1 = (p.tau - p.c) / (1.0 - p.c);
    const double q0 = kLogisticOnsetFraction;
    if (!(q1 > q0 && q1 < 1.0))
        throw std::invalid_argument("logistic_from_anchors: tau too close to c or equal to 1");
    auto logit = [](double q) { return std::log(q / (1.0 - q)); };
    const double slope = (logit(q1) - logit(q0)) / std::log(p.k1 / p.k0);
    const double v0 = std::pow(q1 / (1.0 - q1), 1.0 / slope) / p.k1;
    return FractParams{v0, slope, p.c};
}

double response_probability(ResponseModel model, double x, const VrfParams& p) {
    if (model == ResponseModel::FlooredExponential) return floored_exp(x, p);
    return fract_logistic(x, logistic_from_anchors(p), Orientation::IncreasingWithSize);
}

double with_slip(double v, double slip, double c) { return slip * c + (1.0 - slip) * v; }

}  // namespace acuity
