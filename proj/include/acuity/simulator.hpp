#pragma once
// Virtual patients and the experiment harness.
//
// Every number produced here is a pure function of SimConfig::master_seed.
// Each (run index, method) pair gets its own RNG stream, and per-run results
// are reduced in index order, so thread count never changes the output.

#include "acuity/exams.hpp"

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace acuity {

struct TruePatient {
    VrfParams params;
    double slip = 0.0;
    ResponseModel model = ResponseModel::FlooredExponential;
};

struct SimConfig {
    std::size_t n_patients = 1000;
    // log10 k1 of simulated patients; mode 2 arcmin.
    GumbelPrior truth_prior{0.30103, 0.30};
    K0RatioPrior k0_ratio{};
    double slip = 0.05;
    int optotype_count = 4;
    double tau = 0.8;
    ResponseModel truth_model = ResponseModel::FlooredExponential;
    std::uint64_t master_seed = 1;
    unsigned threads = 0;  // 0: hardware concurrency
    // Base exam for the adaptive methods; question count and optotype count
    // are overwritten per experiment.
    ExamConfig exam{};
    double good_prior_beta = 0.1;

    void validate() const;
};

TruePatient sample_patient(const SimConfig& cfg, Rng& rng);
double response_probability(const TruePatient& patient, double size);
bool simulate_response(const TruePatient& patient, double size, Rng& rng);
double relative_error(double predicted, double truth);

struct RunRecord {
    double error = 0.0;
    double confidence = 0.0;
    int length = 0;
    bool converged = false;
    bool ok = false;
};

using MethodFn = std::function<ExamResult(const TruePatient&, Rng& exam_rng, Rng& response_rng)>;

struct Method {
    std::string name;
    MethodFn run;
};

// Known names: Const, Snellen, ETDRS, FrACT, StAT, StAT-noSlip,
// StAT-greedyMAP, StAT-logistic, StAT-noPrior, StAT-goodPrior, StAT-star.
Method make_method(const std::string& name, const SimConfig& cfg, int questions);
std::vector<std::string> table1_methods();
std::vector<std::string> ablation_methods();

struct MethodRuns {
    std::string name;
    std::vector<RunRecord> runs;  // indexed by patient
};

MethodRuns run_method(const SimConfig& cfg, const Method& method);

struct MetricsRow {
    std::string policy;
    double x = 0.0;  // experiment variable: questions, slip, optotype count
    double mean_error = 0.0;
    double stderr_error = 0.0;
    double mean_length = 0.0;
    std::size_t n = 0;
    std::size_t failed = 0;
};

MetricsRow summarize(const MethodRuns& runs, double x);
// Standard error of the mean per-patient difference a - b over patients where
// both runs succeeded.
double paired_difference_stderr(const MethodRuns& a, const MethodRuns& b);
double mean_difference(const MethodRuns& a, const MethodRuns& b);

std::vector<MetricsRow> run_benchmark(const SimConfig& cfg, const std::vector<std::string>& methods, int questions);
std::vector<MetricsRow> run_length_sweep(const SimConfig& cfg, const std::vector<std::string>& methods,
                                         const std::vector<int>& lengths);
std::vector<MetricsRow> run_ablations(const SimConfig& cfg, int questions = 20);
// Patients slip at each level and the exam models that same level.
std::vector<MetricsRow> run_slip_sweep(const SimConfig& cfg, const std::vector<double>& slips, int questions = 20);
// Guess rate 1/count for both patients and exam.
std::vector<MetricsRow> run_optotype_sweep(const SimConfig& cfg, const std::vector<int>& counts, int questions = 20);

struct CalibrationBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t n = 0;
    double mean_confidence = 0.0;
    double empirical_rate = 0.0;
};

std::vector<CalibrationBin> calibration_bins(const std::vector<double>& confidence,
                                             const std::vector<bool>& success, std::size_t bins = 10);
// Confidence = posterior mass within +-0.1 of the estimate; success =
// relative error below 0.1.
std::vector<CalibrationBin> run_calibration(const SimConfig& cfg, std::size_t n_runs = 10000, int questions = 20);
// Reference generator whose successes are Bernoulli(confidence) exactly.
std::vector<CalibrationBin> synthetic_calibration(std::size_t n_runs, std::uint64_t seed, std::size_t bins = 10);

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
void write_calibration_csv(std::ostream& out, const std::vector<CalibrationBin>& bins);

// Runs fn(i) for i in [0, n) across worker threads.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace acuity
