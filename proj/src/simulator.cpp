#include "acuity/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace acuity {

void SimConfig::validate() const {
    if (n_patients < 1) throw std::invalid_argument("n_patients must be at least 1");
    truth_prior.validate();
    k0_ratio.validate();
    if (!(slip >= 0.0 && slip <= 0.5)) throw std::invalid_argument("patient slip must lie in [0, 0.5]");
    if (optotype_count < 2) throw std::invalid_argument("optotype_count must be at least 2");
    if (!(tau > 1.0 / optotype_count && tau < 1.0)) throw std::invalid_argument("tau must lie in (c, 1)");
    if (!(good_prior_beta > 0.0)) throw std::invalid_argument("good_prior_beta must be positive");
}

TruePatient sample_patient(const SimConfig& cfg, Rng& rng) {
    const double k1 = std::pow(10.0, sample_gumbel(cfg.truth_prior, rng));
    const double ratio = uniform(rng, cfg.k0_ratio.lo, cfg.k0_ratio.hi);
    TruePatient p;
    p.params = VrfParams{ratio * k1, k1, 1.0 / cfg.optotype_count, cfg.tau};
    p.slip = cfg.slip;
    p.model = cfg.truth_model;
    return p;
}

double response_probability(const TruePatient& patient, double size) {
    return with_slip(response_probability(patient.model, size, patient.params), patient.slip, patient.params.c);
}

bool simulate_response(const TruePatient& patient, double size, Rng& rng) {
    if (!(size > 0.0)) throw std::invalid_argument("simulate_response: size must be positive");
    return bernoulli(rng, response_probability(patient, size));
}

double relative_error(double predicted, double truth) {
    if (!(truth > 0.0)) throw std::invalid_argument("relative_error: truth must be positive");
    return std::abs(predicted - truth) / truth;
}

std::vector<std::string> table1_methods() { return {"Const", "Snellen", "ETDRS", "FrACT", "StAT"}; }

std::vector<std::string> ablation_methods() {
    return {"StAT", "StAT-noSlip", "StAT-greedyMAP", "StAT-logistic", "StAT-noPrior"};
}

Method make_method(const std::string& name, const SimConfig& cfg, int questions) {
    ExamConfig exam = cfg.exam;
    exam.max_questions = questions;
    exam.optotype_count = cfg.optotype_count;
    exam.tau = cfg.tau;

    auto stat_with = [](ExamConfig e) -> MethodFn {
        return [e = std::move(e)](const TruePatient& patient, Rng& exam_rng, Rng& response_rng) {
            return run_stat([&](double x) { return simulate_response(patient, x, response_rng); }, e, exam_rng);
        };
    };
    auto chart_with = [](ChartSpec spec, ChartScoring scoring) -> MethodFn {
        return [spec = std::move(spec), scoring](const TruePatient& patient, Rng&, Rng& response_rng) {
            TruePatient chart_patient = patient;
            chart_patient.params.c = 1.0 / kChartOptotypes;
            return run_chart([&](double x) { return simulate_response(chart_patient, x, response_rng); }, spec,
                             scoring);
        };
    };

    if (name == "Const") {
        return {name, [prior = exam.prior](const TruePatient&, Rng&, Rng&) { return run_const(prior); }};
    }
    if (name == "Snellen") return {name, chart_with(snellen_chart(), ChartScoring::Snellen)};
    if (name == "ETDRS") return {name, chart_with(etdrs_chart(), ChartScoring::Etdrs)};
    if (name == "FrACT") {
        return {name, [exam](const TruePatient& patient, Rng&, Rng& response_rng) {
                    return run_fract([&](double x) { return simulate_response(patient, x, response_rng); }, exam);
                }};
    }
    if (name == "StAT") return {name, stat_with(exam)};
    if (name == "StAT-noSlip") {
        exam.slip_model = 0.0;
        return {name, stat_with(exam)};
    }
    if (name == "StAT-greedyMAP") {
        exam.policy = GreedyMap{};
        return {name, stat_with(exam)};
    }
    if (name == "StAT-logistic") {
        exam.belief_model = ResponseModel::Logistic;
        return {name, stat_with(exam)};
    }
    if (name == "StAT-noPrior") {
        exam.prior = UniformLogMarPrior{-0.5, 2.0};
        return {name, stat_with(exam)};
    }
    if (name == "StAT-goodPrior") {
        const double beta = cfg.good_prior_beta;
        return {name, [exam, beta](const TruePatient& patient, Rng& exam_rng, Rng& response_rng) {
                    ExamConfig e = exam;
                    e.prior = GumbelPrior{std::log10(patient.params.k1), beta};
                    return run_stat([&](double x) { return simulate_response(patient, x, response_rng); }, e,
                                    exam_rng);
                }};
    }
    if (name == "StAT-star") {
        exam.mode = StarMode{};
        exam.max_questions = std::min(questions, StarMode{}.cap);
        return {name, stat_with(exam)};
    }
    throw std::invalid_argument("unknown method: " + name);
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

MethodRuns run_method(const SimConfig& cfg, const Method& method) {
    cfg.validate();
    MethodRuns out{method.name, std::vector<RunRecord>(cfg.n_patients)};
    parallel_for(cfg.n_patients, cfg.threads, [&](std::size_t i) {
        Rng patient_rng(derive_seed(cfg.master_seed, i, "patient"));
        const TruePatient patient = sample_patient(cfg, patient_rng);
        Rng exam_rng(derive_seed(cfg.master_seed, i, method.name));
        Rng response_rng(derive_seed(cfg.master_seed, i, method.name + "/responses"));
        RunRecord rec;
        try {
            const ExamResult r = method.run(patient, exam_rng, response_rng);
            rec.error = relative_error(r.predicted_k1, patient.params.k1);
            rec.confidence = r.confidence;
            rec.length = r.questions_asked;
            rec.converged = r.converged;
            rec.ok = std::isfinite(rec.error);
        } catch (const std::exception&) {
            rec.ok = false;
        }
        out.runs[i] = rec;
    });
    return out;
}

MetricsRow summarize(const MethodRuns& runs, double x) {
    MetricsRow row;
    row.policy = runs.name;
    row.x = x;
    double sum = 0.0;
    double sum_len = 0.0;
    for (const auto& r : runs.runs) {
        if (!r.ok) {
            ++row.failed;
            continue;
        }
        ++row.n;
        sum += r.error;
        sum_len += r.length;
    }
    if (row.n == 0) return row;
    row.mean_error = sum / static_cast<double>(row.n);
    row.mean_length = sum_len / static_cast<double>(row.n);
    double ss = 0.0;
    for (const auto& r : runs.runs)
        if (r.ok) ss += (r.error - row.mean_error) * (r.error - row.mean_error);
    if (row.n > 1) row.stderr_error = std::sqrt(ss / static_cast<double>(row.n - 1) / static_cast<double>(row.n));
    return row;
}

namespace {

std::vector<double> paired_differences(const MethodRuns& a, const MethodRuns& b) {
    if (a.runs.size() != b.runs.size()) throw std::invalid_argument("paired runs must cover the same patients");
    std::vector<double> d;
    for (std::size_t i = 0; i < a.runs.size(); ++i)
        if (a.runs[i].ok && b.runs[i].ok) d.push_back(a.runs[i].error - b.runs[i].error);
    return d;
}

}  // namespace

double mean_difference(const MethodRuns& a, const MethodRuns& b) {
    const auto d = paired_differences(a, b);
    if (d.empty()) return 0.0;
    double s = 0.0;
    for (double v : d) s += v;
    return s / static_cast<double>(d.size());
}

double paired_difference_stderr(const MethodRuns& a, const MethodRuns& b) {
    const auto d = paired_differences(a, b);
    if (d.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(d.size());
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(d.size() - 1) / static_cast<double>(d.size()));
}

std::vector<MetricsRow> run_benchmark(const SimConfig& cfg, const std::vector<std::string>& methods, int questions) {
    if (methods.empty()) throw std::invalid_argument("run_benchmark needs at least one method");
    std::vector<MetricsRow> rows;
    for (const auto& name : methods)
        rows.push_back(summarize(run_method(cfg, make_method(name, cfg, questions)), questions));
    return rows;
}

std::vector<MetricsRow> run_length_sweep(const SimConfig& cfg, const std::vector<std::string>& methods,
                                         const std::vector<int>& lengths) {
    if (!std::is_sorted(lengths.begin(), lengths.end())) throw std::invalid_argument("lengths must be ascending");
    std::vector<MetricsRow> rows;
    for (const auto& name : methods)
        for (int len : lengths) rows.push_back(summarize(run_method(cfg, make_method(name, cfg, len)), len));
    return rows;
}

std::vector<MetricsRow> run_ablations(const SimConfig& cfg, int questions) {
    return run_benchmark(cfg, ablation_methods(), questions);
}

std::vector<MetricsRow> run_slip_sweep(const SimConfig& cfg, const std::vector<double>& slips, int questions) {
    std::vector<MetricsRow> rows;
    for (double slip : slips) {
        if (!(slip >= 0.0 && slip <= 0.5)) throw std::invalid_argument("slip levels must lie in [0, 0.5]");
        SimConfig c = cfg;
        c.slip = slip;
        c.exam.slip_model = slip;
        rows.push_back(summarize(run_method(c, make_method("StAT", c, questions)), slip));
    }
    return rows;
}

std::vector<MetricsRow> run_optotype_sweep(const SimConfig& cfg, const std::vector<int>& counts, int questions) {
    std::vector<MetricsRow> rows;
    for (int count : counts) {
        if (count < 2) throw std::invalid_argument("optotype counts must be at least 2");
        SimConfig c = cfg;
        c.optotype_count = count;
        rows.push_back(summarize(run_method(c, make_method("StAT", c, questions)), count));
    }
    return rows;
}

std::vector<CalibrationBin> calibration_bins(const std::vector<double>& confidence, const std::vector<bool>& success,
                                             std::size_t bins) {
    if (confidence.size() != success.size()) throw std::invalid_argument("calibration inputs differ in length");
    if (bins == 0) throw std::invalid_argument("calibration needs at least one bin");
    std::vector<CalibrationBin> out(bins);
    std::vector<double> conf_sum(bins, 0.0);
    std::vector<double> hits(bins, 0.0);
    for (std::size_t b = 0; b < bins; ++b) {
        out[b].lo = static_cast<double>(b) / static_cast<double>(bins);
        out[b].hi = static_cast<double>(b + 1) / static_cast<double>(bins);
    }
    for (std::size_t i = 0; i < confidence.size(); ++i) {
        const double c = std::clamp(confidence[i], 0.0, 1.0);
        const auto b = std::min(static_cast<std::size_t>(c * static_cast<double>(bins)), bins - 1);
        ++out[b].n;
        conf_sum[b] += c;
        hits[b] += success[i] ? 1.0 : 0.0;
    }
    for (std::size_t b = 0; b < bins; ++b) {
        if (out[b].n == 0) continue;
        out[b].mean_confidence = conf_sum[b] / static_cast<double>(out[b].n);
        out[b].empirical_rate = hits[b] / static_cast<double>(out[b].n);
    }
    return out;
}

std::vector<CalibrationBin> run_calibration(const SimConfig& cfg, std::size_t n_runs, int questions) {
    if (n_runs < 1000) throw std::invalid_argument("calibration needs at least 1000 runs");
    SimConfig c = cfg;
    c.n_patients = n_runs;
    c.exam.confidence_eps = 0.10;
    const MethodRuns runs = run_method(c, make_method("StAT", c, questions));
    std::vector<double> confidence;
    std::vector<bool> success;
    for (const auto& r : runs.runs) {
        if (!r.ok) continue;
        confidence.push_back(r.confidence);
        success.push_back(r.error < 0.10);
    }
    return calibration_bins(confidence, success);
}

std::vector<CalibrationBin> synthetic_calibration(std::size_t n_runs, std::uint64_t seed, std::size_t bins) {
    Rng rng(seed);
    std::vector<double> confidence(n_runs);
    std::vector<bool> success(n_runs);
    for (std::size_t i = 0; i < n_runs; ++i) {
        confidence[i] = uniform01(rng);
        success[i] = bernoulli(rng, confidence[i]);
    }
    return calibration_bins(confidence, success, bins);
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
    out << "policy,x,y,stderr,mean_length,n,failed\n";
    out << std::setprecision(10);
    for (const auto& r : rows)
        out << r.policy << ',' << r.x << ',' << r.mean_error << ',' << r.stderr_error << ',' << r.mean_length << ','
            << r.n << ',' << r.failed << '\n';
}

void write_calibration_csv(std::ostream& out, const std::vector<CalibrationBin>& bins) {
    out << "bin_lo,bin_hi,n,mean_confidence,empirical_rate\n";
    out << std::setprecision(10);
    for (const auto& b : bins)
        out << b.lo << ',' << b.hi << ',' << b.n << ',' << b.mean_confidence << ',' << b.empirical_rate << '\n';
}

}  // namespace acuity
