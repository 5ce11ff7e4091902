// Command-line front end: simulation experiments (CSV out) and the live exam
// HTTP service.

#include "acuity/exam_service.hpp"
#include "acuity/http_api.hpp"
#include "acuity/simulator.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>

namespace {

using namespace acuity;

struct CommonOptions {
    std::uint64_t seed = 1;
    std::size_t patients = 1000;
    int questions = 20;
    std::string out;
    unsigned threads = 0;
    double truth_mu = 0.30103;
    double truth_beta = 0.30;
    double k0_lo = 0.75;
    double k0_hi = 0.95;
    double slip = 0.05;
    int optotypes = 4;
    double tau = 0.8;
    std::size_t particles = 5000;
    double prior_mu = 0.3;
    double prior_beta = 0.5;
    double slip_model = 0.05;
    double good_prior_beta = 0.1;
    std::string truth_model = "floored-exp";
};

// Long options are reachable as --foo-bar and as foo_bar in config files.
template <typename T>
CLI::Option* opt(CLI::App& app, const std::string& dashed, T& target, const std::string& help) {
    std::string underscored = dashed;
    std::replace(underscored.begin(), underscored.end(), '-', '_');
    std::string names = "--" + dashed;
    if (underscored != dashed) names += ",--" + underscored;
    return app.add_option(names, target, help)->capture_default_str();
}

SimConfig make_sim_config(const CommonOptions& o) {
    SimConfig cfg;
    cfg.master_seed = o.seed;
    cfg.n_patients = o.patients;
    cfg.threads = o.threads;
    cfg.truth_prior = GumbelPrior{o.truth_mu, o.truth_beta};
    cfg.k0_ratio = K0RatioPrior{o.k0_lo, o.k0_hi};
    cfg.slip = o.slip;
    cfg.optotype_count = o.optotypes;
    cfg.tau = o.tau;
    cfg.good_prior_beta = o.good_prior_beta;
    if (o.truth_model == "logistic") cfg.truth_model = ResponseModel::Logistic;
    else if (o.truth_model != "floored-exp") throw std::invalid_argument("truth-model must be floored-exp or logistic");
    cfg.exam.n_particles = o.particles;
    cfg.exam.prior = GumbelPrior{o.prior_mu, o.prior_beta};
    cfg.exam.k0_ratio = cfg.k0_ratio;
    cfg.exam.slip_model = o.slip_model;
    return cfg;
}

class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path);
            if (!*file_) throw std::runtime_error("cannot open " + path);
        }
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

int serve(const std::string& data_dir, const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw std::invalid_argument("bind address must be host:port");
    const std::string host = bind.substr(0, colon);
    const int port = std::stoi(bind.substr(colon + 1));

    service::SessionManager sessions(data_dir);
    const auto report = sessions.recover_sessions();
    std::cerr << "recovered " << report.restored << " session(s) from " << data_dir;
    if (!report.truncated.empty()) std::cerr << ", " << report.truncated.size() << " truncated to last valid event";
    std::cerr << '\n';

    httplib::Server server;
    service::register_routes(server, sessions);
    std::cerr << "listening on " << host << ':' << port << '\n';
    if (!server.listen(host, port)) {
        std::cerr << "failed to bind " << bind << '\n';
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive visual acuity exam: simulation harness and live service"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "Flat key = value file mirroring the options below");

    CommonOptions o;
    opt(app, "seed", o.seed, "Master seed; every output is a pure function of it");
    opt(app, "patients", o.patients, "Simulated patients per method");
    opt(app, "questions", o.questions, "Questions per adaptive exam");
    opt(app, "out", o.out, "CSV output path (stdout when empty)");
    opt(app, "threads", o.threads, "Worker threads (0: all cores)");
    opt(app, "truth-mu", o.truth_mu, "Simulated patients: Gumbel mu of log10 k1");
    opt(app, "truth-beta", o.truth_beta, "Simulated patients: Gumbel beta of log10 k1");
    opt(app, "truth-model", o.truth_model, "Simulated patients: floored-exp or logistic");
    opt(app, "k0-lo", o.k0_lo, "k0/k1 ratio lower bound");
    opt(app, "k0-hi", o.k0_hi, "k0/k1 ratio upper bound");
    opt(app, "slip", o.slip, "Simulated patient slip probability");
    opt(app, "optotypes", o.optotypes, "Number of optotype choices (guess rate 1/n)");
    opt(app, "tau", o.tau, "Target probability defining acuity");
    opt(app, "particles", o.particles, "Particles in the exam belief");
    opt(app, "prior-mu", o.prior_mu, "Exam prior: Gumbel mu (logMAR)");
    opt(app, "prior-beta", o.prior_beta, "Exam prior: Gumbel beta (logMAR)");
    opt(app, "slip-model", o.slip_model, "Slip probability assumed by the exam");
    opt(app, "good-prior-beta", o.good_prior_beta, "Gumbel beta of the truth-centred prior");

    std::vector<std::string> methods = table1_methods();
    auto* benchmark = app.add_subcommand("benchmark", "Mean relative error and length per method");
    benchmark->add_option("--methods", methods, "Methods to run")->capture_default_str();

    std::vector<int> lengths = {5, 10, 20, 50, 100, 200};
    std::vector<std::string> sweep_methods = {"FrACT", "StAT"};
    auto* sweep_length = app.add_subcommand("sweep-length", "Error against exam length");
    sweep_length->add_option("--lengths", lengths, "Exam lengths (ascending)")->capture_default_str();
    sweep_length->add_option("--methods", sweep_methods, "Methods to run")->capture_default_str();

    std::size_t runs = 10000;
    auto* calibration = app.add_subcommand("calibration", "Confidence calibration bins");
    calibration->add_option("--runs", runs, "Number of exams")->capture_default_str();

    auto* ablations = app.add_subcommand("ablations", "Error with each modelling choice turned off");

    std::vector<double> slips = {0.0, 0.05, 0.1, 0.2, 0.3, 0.4};
    auto* sweep_slip = app.add_subcommand("sweep-slip", "Error against patient slip probability");
    sweep_slip->add_option("--slips", slips, "Slip levels")->capture_default_str();

    std::vector<int> counts = {2, 4, 10, 19, 26};
    auto* sweep_optotypes = app.add_subcommand("sweep-optotypes", "Error against optotype count");
    sweep_optotypes->add_option("--counts", counts, "Optotype counts")->capture_default_str();

    std::string trace_method = "StAT";
    std::size_t trace_index = 0;
    auto* trace = app.add_subcommand("trace", "One simulated exam as JSON lines");
    trace->add_option("--method", trace_method, "Method name")->capture_default_str();
    trace->add_option("--index", trace_index, "Patient index")->capture_default_str();

    std::string data_dir = env_or("STAT_DATA_DIR", "./sessions");
    std::string bind = env_or("STAT_BIND", "127.0.0.1:8080");
    auto* serve_cmd = app.add_subcommand("serve", "Run the live exam HTTP service");
    serve_cmd->add_option("--data-dir", data_dir, "Session log directory (env STAT_DATA_DIR)")->capture_default_str();
    serve_cmd->add_option("--bind", bind, "host:port (env STAT_BIND)")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (serve_cmd->parsed()) return serve(data_dir, bind);

        const SimConfig cfg = make_sim_config(o);
        if (trace->parsed()) {
            const Method method = make_method(trace_method, cfg, o.questions);
            Rng patient_rng(derive_seed(cfg.master_seed, trace_index, "patient"));
            const TruePatient patient = sample_patient(cfg, patient_rng);
            Rng exam_rng(derive_seed(cfg.master_seed, trace_index, method.name));
            Rng response_rng(derive_seed(cfg.master_seed, trace_index, method.name + "/responses"));
            Output out(o.out);
            write_trace_jsonl(out.stream(), method.run(patient, exam_rng, response_rng));
            std::cerr << "true k1 = " << patient.params.k1 << " arcmin\n";
            return 0;
        }

        Output out(o.out);
        if (benchmark->parsed()) {
            write_metrics_csv(out.stream(), run_benchmark(cfg, methods, o.questions));
        } else if (sweep_length->parsed()) {
            write_metrics_csv(out.stream(), run_length_sweep(cfg, sweep_methods, lengths));
        } else if (calibration->parsed()) {
            write_calibration_csv(out.stream(), run_calibration(cfg, runs, o.questions));
        } else if (ablations->parsed()) {
            write_metrics_csv(out.stream(), run_ablations(cfg, o.questions));
        } else if (sweep_slip->parsed()) {
            write_metrics_csv(out.stream(), run_slip_sweep(cfg, slips, o.questions));
        } else if (sweep_optotypes->parsed()) {
            write_metrics_csv(out.stream(), run_optotype_sweep(cfg, counts, o.questions));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
