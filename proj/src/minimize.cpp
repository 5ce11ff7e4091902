#include "minimize.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace acuity::detail {
namespace {

struct VectorDeleter {
    void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};
struct MinimizerDeleter {
    void operator()(gsl_multimin_fminimizer* m) const { gsl_multimin_fminimizer_free(m); }
};

double trampoline(const gsl_vector* v, void* params) {
    const auto& f = *static_cast<const Objective*>(params);
    std::vector<double> x(v->size);
    for (std::size_t i = 0; i < v->size; ++i) x[i] = gsl_vector_get(v, i);
    double y = f(x);
    return std::isfinite(y) ? y : std::numeric_limits<double>::max();
}

}  // namespace

MinimizeResult nelder_mead(const Objective& f, std::vector<double> start,
                           std::vector<double> step, int max_iter, double size_tol) {
    const std::size_t n = start.size();
    if (n == 0 || step.size() != n) throw std::invalid_argument("nelder_mead: bad dimensions");

    gsl_set_error_handler_off();
    std::unique_ptr<gsl_vector, VectorDeleter> x(gsl_vector_alloc(n));
    std::unique_ptr<gsl_vector, VectorDeleter> ss(gsl_vector_alloc(n));
    for (std::size_t i = 0; i < n; ++i) {
        gsl_vector_set(x.get(), i, start[i]);
        gsl_vector_set(ss.get(), i, step[i]);
    }

    gsl_multimin_function fn;
    fn.n = n;
    fn.f = &trampoline;
    fn.params = const_cast<Objective*>(&f);

    std::unique_ptr<gsl_multimin_fminimizer, MinimizerDeleter> m(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n));
    gsl_multimin_fminimizer_set(m.get(), &fn, x.get(), ss.get());

    bool converged = false;
    for (int iter = 0; iter < max_iter; ++iter) {
        if (gsl_multimin_fminimizer_iterate(m.get()) != GSL_SUCCESS) break;
        double size = gsl_multimin_fminimizer_size(m.get());
        if (gsl_multimin_test_size(size, size_tol) == GSL_SUCCESS) {
            converged = true;
            break;
        }
    }

    MinimizeResult out;
    out.x.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.x[i] = gsl_vector_get(m->x, i);
    out.value = m->fval;
    out.converged = converged;
    return out;
}

}  // namespace acuity::detail
