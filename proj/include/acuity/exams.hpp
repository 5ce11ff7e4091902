#pragma once
// Exam orchestration: the adaptive particle exam (fixed length or run until
// confident), plus the constant, chart and FrACT baselines. All exams talk to
// the patient through a ResponseOracle, so the same code drives simulated
// patients and live sessions.

#include "acuity/belief.hpp"
#include "acuity/policy.hpp"
#include "acuity/random.hpp"

#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <variant>
#include <vector>

namespace acuity {

struct FixedLength {};

// Keep asking until posterior mass within +-rel_eps of the estimate reaches
// `confidence`, or `cap` questions have been asked.
struct StarMode {
    double rel_eps = 0.10;
    double confidence = 0.95;
    int cap = 200;
};

using ExamMode = std::variant<FixedLength, StarMode>;

struct ExamConfig {
    PolicyKind policy = PosteriorMatching{};
    int max_questions = 20;
    int optotype_count = 4;  // tumbling E
    double tau = 0.8;
    double slip_model = 0.05;
    AcuityPrior prior = GumbelPrior{};
    K0RatioPrior k0_ratio{};
    std::size_t n_particles = 5000;
    ResponseModel belief_model = ResponseModel::FlooredExponential;
    ExamMode mode = FixedLength{};
    double confidence_eps = 0.10;  // band used for the reported confidence
    SizeBounds bounds{};

    double guess_rate() const { return 1.0 / optotype_count; }
    int question_limit() const;
    void validate() const;
};

struct ExamResult {
    double predicted_k1 = 0.0;  // arcmin
    double confidence = 0.0;
    int questions_asked = 0;
    std::vector<Observation> trace;
    bool converged = false;
    bool floor = false;     // chart: failed the first line
    bool ceiling = false;   // chart: passed every line
    bool boundary = false;  // FrACT: estimate clamped or MLE on a bound
    int clamp_count = 0;
};

using ResponseOracle = std::function<bool(double size)>;

// Raised when the oracle fails mid-exam; carries what was observed so far.
class ExamAborted : public std::runtime_error {
public:
    ExamAborted(const std::string& what, std::vector<Observation> partial)
        : std::runtime_error(what), partial_trace(std::move(partial)) {}
    std::vector<Observation> partial_trace;
};

// One adaptive exam, driven a step at a time: next_size(), then record().
class StatExam {
public:
    StatExam(ExamConfig cfg, Rng& rng);

    bool finished() const noexcept { return finished_; }
    SizeChoice next_size(Rng& rng);
    void record(const Observation& obs);
    ExamResult result() const;

    const ExamConfig& config() const noexcept { return cfg_; }
    const ParticleSet& belief() const noexcept { return belief_; }
    const std::vector<Observation>& trace() const noexcept { return trace_; }
    double last_confidence() const noexcept { return last_confidence_; }

private:
    void check_stop();

    ExamConfig cfg_;
    ParticleSet belief_;
    std::vector<Observation> trace_;
    bool finished_ = false;
    bool converged_ = false;
    double last_confidence_ = 0.0;
    int clamp_count_ = 0;
};

ExamResult run_stat(const ResponseOracle& oracle, const ExamConfig& cfg, Rng& rng);
ExamResult run_const(const AcuityPrior& prior);

struct ChartLine {
    double size;  // arcmin
    int letters;
};

struct ChartSpec {
    std::vector<ChartLine> lines;  // coarsest first

    void validate() const;
};

enum class ChartScoring { Snellen, Etdrs };

inline constexpr double kEtdrsLogMarPerLetter = 0.02;
inline constexpr int kChartOptotypes = 19;

ChartSpec snellen_chart();
ChartSpec etdrs_chart();
ExamResult run_chart(const ResponseOracle& oracle, const ChartSpec& spec, ChartScoring scoring);

ExamResult run_fract(const ResponseOracle& oracle, const ExamConfig& cfg);

// JSON lines: one {"step","size_arcmin","correct"} record per observation,
// then a {"type":"result",...} record.
void write_trace_jsonl(std::ostream& out, const ExamResult& result);

}  // namespace acuity
