#include "acuity/exams.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace acuity {

int ExamConfig::question_limit() const {
    if (const auto* star = std::get_if<StarMode>(&mode)) return star->cap;
    return max_questions;
}

void ExamConfig::validate() const {
    if (max_questions < 0) throw std::invalid_argument("max_questions must be nonnegative");
    if (optotype_count < 2) throw std::invalid_argument("optotype_count must be at least 2");
    if (!(tau > guess_rate() && tau <= 1.0)) throw std::invalid_argument("tau must lie in (c, 1]");
    if (!(slip_model >= 0.0 && slip_model <= 1.0)) throw std::invalid_argument("slip_model must lie in [0, 1]");
    if (n_particles == 0) throw std::invalid_argument("n_particles must be positive");
    if (!(confidence_eps > 0.0)) throw std::invalid_argument("confidence_eps must be positive");
    validate_prior(prior);
    k0_ratio.validate();
    bounds.validate();
    if (const auto* star = std::get_if<StarMode>(&mode)) {
        if (!(star->rel_eps > 0.0)) throw std::invalid_argument("star rel_eps must be positive");
        if (!(star->confidence > 0.0 && star->confidence <= 1.0))
            throw std::invalid_argument("star confidence must lie in (0, 1]");
        if (star->cap < max_questions) throw std::invalid_argument("star cap must be >= max_questions");
    }
    if (const auto* seq = std::get_if<FixedSequence>(&policy)) {
        if (seq->sizes.empty()) throw std::invalid_argument("fixed sequence policy needs sizes");
    }
}

namespace {

double band_eps(const ExamConfig& cfg) {
    if (const auto* star = std::get_if<StarMode>(&cfg.mode)) return star->rel_eps;
    return cfg.confidence_eps;
}

}  // namespace

StatExam::StatExam(ExamConfig cfg, Rng& rng)
    : cfg_((cfg.validate(), std::move(cfg))),
      belief_(init_particles(cfg_.prior, cfg_.k0_ratio, cfg_.n_particles, cfg_.guess_rate(), cfg_.tau, rng,
                             cfg_.belief_model)) {
    finished_ = cfg_.question_limit() == 0;
}

SizeChoice StatExam::next_size(Rng& rng) {
    if (finished_) throw std::logic_error("exam already finished");
    SizeChoice choice = std::visit(
        [&](const auto& p) -> SizeChoice {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, PosteriorMatching>) {
                return next_size_posterior_matching(belief_, rng, cfg_.bounds);
            } else if constexpr (std::is_same_v<T, GreedyMap>) {
                return next_size_greedy_map(belief_, cfg_.bounds);
            } else if constexpr (std::is_same_v<T, FractMaxInfo>) {
                if (trace_.empty()) return clamp_size(prior_mode(cfg_.prior), cfg_.bounds);
                const FractFit fit = fract_mle(trace_, cfg_.guess_rate(), cfg_.bounds);
                return fract_next_size(fit.params, cfg_.bounds);
            } else {
                return clamp_size(p.sizes[trace_.size() % p.sizes.size()], cfg_.bounds);
            }
        },
        cfg_.policy);
    if (choice.clamped) ++clamp_count_;
    return choice;
}

void StatExam::record(const Observation& obs) {
    if (finished_) throw std::logic_error("exam already finished");
    belief_.update(obs, cfg_.slip_model);
    trace_.push_back(obs);
    check_stop();
}

void StatExam::check_stop() {
    const auto asked = static_cast<int>(trace_.size());
    if (const auto* star = std::get_if<StarMode>(&cfg_.mode)) {
        last_confidence_ = credible_mass(belief_, posterior_map(belief_), star->rel_eps);
        if (last_confidence_ >= star->confidence) {
            finished_ = true;
            converged_ = true;
        } else if (asked >= star->cap) {
            finished_ = true;
        }
        return;
    }
    if (asked >= cfg_.max_questions) finished_ = true;
}

ExamResult StatExam::result() const {
    ExamResult r;
    // With no answers the posterior is the prior, whose mode is known exactly.
    r.predicted_k1 = trace_.empty() ? prior_mode(cfg_.prior) : posterior_map(belief_);
    r.confidence = credible_mass(belief_, r.predicted_k1, band_eps(cfg_));
    r.questions_asked = static_cast<int>(trace_.size());
    r.trace = trace_;
    r.converged = converged_;
    r.clamp_count = clamp_count_;
    return r;
}

ExamResult run_stat(const ResponseOracle& oracle, const ExamConfig& cfg, Rng& rng) {
    StatExam exam(cfg, rng);
    while (!exam.finished()) {
        const double size = exam.next_size(rng).size;
        bool correct = false;
        try {
            correct = oracle(size);
        } catch (const std::exception& e) {
            throw ExamAborted(std::string("response oracle failed: ") + e.what(), exam.trace());
        }
        exam.record({size, correct});
    }
    return exam.result();
}

ExamResult run_const(const AcuityPrior& prior) {
    validate_prior(prior);
    ExamResult r;
    r.predicted_k1 = prior_mode(prior);
    return r;
}

void ChartSpec::validate() const {
    if (lines.empty()) throw std::invalid_argument("chart needs at least one line");
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (!(lines[i].size > 0.0)) throw std::invalid_argument("chart line size must be positive");
        if (lines[i].letters < 1) throw std::invalid_argument("chart line needs at least one letter");
        if (i > 0 && !(lines[i].size < lines[i - 1].size))
            throw std::invalid_argument("chart line sizes must strictly decrease");
    }
}

ChartSpec snellen_chart() {
    // 20/200 down to 20/15.
    const double denominators[] = {200, 100, 70, 50, 40, 30, 25, 20, 15};
    const int letters[] = {1, 2, 3, 4, 5, 6, 7, 8, 8};
    ChartSpec spec;
    for (std::size_t i = 0; i < std::size(denominators); ++i)
        spec.lines.push_back({snellen_to_arcmin(20.0, denominators[i]).value(), letters[i]});
    return spec;
}

ChartSpec etdrs_chart() {
    // 14 lines of 5 letters, logMAR +1.0 down to -0.3.
    ChartSpec spec;
    for (int i = 0; i < 14; ++i) {
        const double logmar = 1.0 - 0.1 * i;
        spec.lines.push_back({std::pow(10.0, logmar), 5});
    }
    return spec;
}

ExamResult run_chart(const ResponseOracle& oracle, const ChartSpec& spec, ChartScoring scoring) {
    spec.validate();
    ExamResult r;
    int last_passed = -1;
    int correct_on_failed = 0;
    bool failed = false;
    for (std::size_t li = 0; li < spec.lines.size() && !failed; ++li) {
        const ChartLine& line = spec.lines[li];
        int correct = 0;
        for (int k = 0; k < line.letters; ++k) {
            const bool ok = oracle(line.size);
            r.trace.push_back({line.size, ok});
            correct += ok ? 1 : 0;
        }
        // The exam stops on the first line where more than half the letters are missed.
        if (2 * (line.letters - correct) <= line.letters) {
            last_passed = static_cast<int>(li);
        } else {
            failed = true;
            correct_on_failed = correct;
        }
    }
    r.questions_asked = static_cast<int>(r.trace.size());
    if (last_passed < 0) {
        r.floor = true;
        r.predicted_k1 = spec.lines.front().size;
        return r;
    }
    r.ceiling = !failed;
    const double passed_size = spec.lines[static_cast<std::size_t>(last_passed)].size;
    if (scoring == ChartScoring::Snellen) {
        r.predicted_k1 = passed_size;
    } else {
        const double logmar = std::log10(passed_size) - kEtdrsLogMarPerLetter * correct_on_failed;
        r.predicted_k1 = std::pow(10.0, logmar);
    }
    return r;
}

ExamResult run_fract(const ResponseOracle& oracle, const ExamConfig& cfg) {
    cfg.validate();
    const double c = cfg.guess_rate();
    ExamResult r;
    SizeChoice next = clamp_size(prior_mode(cfg.prior), cfg.bounds);
    std::optional<FractFit> fit;
    for (int i = 0; i < cfg.max_questions; ++i) {
        if (next.clamped) ++r.clamp_count;
        bool correct = false;
        try {
            correct = oracle(next.size);
        } catch (const std::exception& e) {
            throw ExamAborted(std::string("response oracle failed: ") + e.what(), r.trace);
        }
        r.trace.push_back({next.size, correct});
        fit = fract_mle(r.trace, c, cfg.bounds);
        next = fract_next_size(fit->params, cfg.bounds);
    }
    r.questions_asked = static_cast<int>(r.trace.size());
    if (!fit) {
        r.predicted_k1 = clamp_size(prior_mode(cfg.prior), cfg.bounds).size;
        r.boundary = true;
        return r;
    }
    const SizeChoice estimate =
        clamp_size(fract_acuity(fit->params, cfg.tau, Orientation::IncreasingWithSize), cfg.bounds);
    r.predicted_k1 = estimate.size;
    r.boundary = fit->boundary || estimate.clamped;
    return r;
}

void write_trace_jsonl(std::ostream& out, const ExamResult& result) {
    for (std::size_t i = 0; i < result.trace.size(); ++i) {
        nlohmann::json rec = {{"step", i + 1},
                              {"size_arcmin", result.trace[i].size},
                              {"correct", result.trace[i].correct}};
        out << rec.dump() << '\n';
    }
    nlohmann::json res = {{"type", "result"},
                          {"predicted_k1", result.predicted_k1},
                          {"predicted_logmar", std::log10(result.predicted_k1)},
                          {"confidence", result.confidence},
                          {"questions_asked", result.questions_asked},
                          {"converged", result.converged}};
    out << res.dump() << '\n';
}

}  // namespace acuity
