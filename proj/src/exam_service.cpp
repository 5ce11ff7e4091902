#include "acuity/exam_service.hpp"

#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

namespace acuity::service {
namespace {

using nlohmann::json;

ServiceError validation_error(const std::string& message) { return {"validation_error", 400, message}; }

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
    return os.str();
}

std::string random_token() {
    std::random_device rd;
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    for (int i = 0; i < 4; ++i) os << std::setw(8) << rd();
    return os.str();
}

std::uint64_t random_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

template <typename T>
T read_field(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw validation_error(std::string("field '") + key + "' has the wrong type");
    }
}

}  // namespace

ExamConfig config_from_json(const json& overrides) {
    if (overrides.is_null()) return ExamConfig{};
    if (!overrides.is_object()) throw validation_error("session overrides must be a JSON object");
    static const std::set<std::string> known = {"prior",   "max_questions", "optotype_count", "tau",
                                                "slip",    "n_particles",   "policy",         "mode",
                                                "star",    "size_min",      "size_max",       "k0_ratio",
                                                "confidence_eps", "seed"};
    for (const auto& [key, _] : overrides.items())
        if (!known.count(key)) throw validation_error("unknown config field '" + key + "'");

    ExamConfig cfg;
    if (overrides.contains("prior")) {
        const json& p = overrides.at("prior");
        if (!p.is_object()) throw validation_error("prior must be an object");
        GumbelPrior g;
        g.mu = read_field(p, "mu", g.mu);
        g.beta = read_field(p, "beta", g.beta);
        const std::string base = read_field<std::string>(p, "log_base", "10");
        if (base == "e") g.base = LogBase::E;
        else if (base != "10") throw validation_error("prior.log_base must be \"10\" or \"e\"");
        cfg.prior = g;
    }
    cfg.max_questions = read_field(overrides, "max_questions", cfg.max_questions);
    cfg.optotype_count = read_field(overrides, "optotype_count", cfg.optotype_count);
    cfg.tau = read_field(overrides, "tau", cfg.tau);
    cfg.slip_model = read_field(overrides, "slip", cfg.slip_model);
    cfg.n_particles = read_field(overrides, "n_particles", cfg.n_particles);
    cfg.confidence_eps = read_field(overrides, "confidence_eps", cfg.confidence_eps);
    cfg.bounds.min = read_field(overrides, "size_min", cfg.bounds.min);
    cfg.bounds.max = read_field(overrides, "size_max", cfg.bounds.max);
    if (overrides.contains("k0_ratio")) {
        const json& k = overrides.at("k0_ratio");
        cfg.k0_ratio.lo = read_field(k, "lo", cfg.k0_ratio.lo);
        cfg.k0_ratio.hi = read_field(k, "hi", cfg.k0_ratio.hi);
    }
    if (overrides.contains("policy")) {
        try {
            cfg.policy = policy_from_name(read_field<std::string>(overrides, "policy", ""));
        } catch (const std::invalid_argument& e) {
            throw validation_error(e.what());
        }
    }
    const std::string mode = read_field<std::string>(overrides, "mode", "fixed");
    if (mode == "star") {
        StarMode star;
        if (overrides.contains("star")) {
            const json& s = overrides.at("star");
            star.rel_eps = read_field(s, "rel_eps", star.rel_eps);
            star.confidence = read_field(s, "confidence", star.confidence);
            star.cap = read_field(s, "cap", star.cap);
        }
        cfg.mode = star;
    } else if (mode != "fixed") {
        throw validation_error("mode must be \"fixed\" or \"star\"");
    }
    if (cfg.n_particles > 200000) throw validation_error("n_particles too large");
    if (cfg.optotype_count > 26) throw validation_error("optotype_count must be at most 26");
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw validation_error(e.what());
    }
    return cfg;
}

json config_to_json(const ExamConfig& cfg) {
    json out;
    const auto* g = std::get_if<GumbelPrior>(&cfg.prior);
    if (!g) throw std::invalid_argument("only Gumbel priors are serialisable");
    out["prior"] = {{"mu", g->mu}, {"beta", g->beta}, {"log_base", g->base == LogBase::Ten ? "10" : "e"}};
    out["max_questions"] = cfg.max_questions;
    out["optotype_count"] = cfg.optotype_count;
    out["tau"] = cfg.tau;
    out["slip"] = cfg.slip_model;
    out["n_particles"] = cfg.n_particles;
    if (std::holds_alternative<FixedSequence>(cfg.policy))
        throw std::invalid_argument("fixed-sequence policy is not serialisable");
    out["policy"] = policy_name(cfg.policy);
    out["confidence_eps"] = cfg.confidence_eps;
    out["size_min"] = cfg.bounds.min;
    out["size_max"] = cfg.bounds.max;
    out["k0_ratio"] = {{"lo", cfg.k0_ratio.lo}, {"hi", cfg.k0_ratio.hi}};
    if (const auto* star = std::get_if<StarMode>(&cfg.mode)) {
        out["mode"] = "star";
        out["star"] = {{"rel_eps", star->rel_eps}, {"confidence", star->confidence}, {"cap", star->cap}};
    } else {
        out["mode"] = "fixed";
    }
    return out;
}

std::vector<std::string> optotype_set(int count) {
    if (count == 4) return {"up", "down", "left", "right"};
    if (count < 2 || count > 26) throw std::invalid_argument("optotype count must lie in [2, 26]");
    std::vector<std::string> out;
    for (int i = 0; i < count; ++i) out.emplace_back(1, static_cast<char>('A' + i));
    return out;
}

struct SessionManager::Session {
    Session(std::string id_, std::uint64_t seed_, ExamConfig cfg_)
        : id(std::move(id_)),
          seed(seed_),
          cfg(std::move(cfg_)),
          exam_rng(seed_),
          optotype_rng(derive_seed(seed_, 0, "optotype")),
          exam(cfg, exam_rng),
          optotypes(optotype_set(cfg.optotype_count)) {}

    std::string id;
    std::uint64_t seed;
    ExamConfig cfg;
    Rng exam_rng;
    Rng optotype_rng;
    StatExam exam;
    std::vector<std::string> optotypes;
    std::optional<Stimulus> pending;
    int last_step = 0;
    std::optional<std::string> last_chosen;
    std::optional<ResponseReply> last_reply;
    std::string created_at;
    std::string updated_at;
    std::filesystem::path log_path;
    std::ofstream log;
    std::mutex mutex;

    void advance() {
        if (exam.finished()) {
            pending.reset();
            return;
        }
        Stimulus s;
        s.step = static_cast<int>(exam.trace().size()) + 1;
        s.size_arcmin = exam.next_size(exam_rng).size;
        const auto idx = static_cast<std::size_t>(uniform01(optotype_rng) * static_cast<double>(optotypes.size()));
        s.optotype = optotypes[std::min(idx, optotypes.size() - 1)];
        pending = s;
    }

    ResponseReply apply(const std::optional<std::string>& chosen) {
        const Stimulus shown = *pending;
        const bool correct = chosen.has_value() && *chosen == shown.optotype;
        exam.record({shown.size_arcmin, correct});
        ResponseReply reply;
        reply.step = shown.step;
        reply.correct = correct;
        reply.confidence = exam.last_confidence();
        advance();
        reply.finished = exam.finished();
        if (reply.finished) {
            reply.result = exam.result();
            reply.confidence = reply.result->confidence;
        } else {
            reply.next = pending;
        }
        last_step = shown.step;
        last_chosen = chosen;
        last_reply = reply;
        return reply;
    }

    void append(const json& event) {
        if (!log.is_open()) return;
        log << event.dump() << '\n';
        log.flush();
        if (!log) throw ServiceError("storage_error", 500, "failed to append to session log");
    }
};

SessionManager::SessionManager(std::filesystem::path data_dir) : data_dir_(std::move(data_dir)) {
    if (!data_dir_.empty()) std::filesystem::create_directories(data_dir_);
}

SessionManager::~SessionManager() = default;

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
    std::shared_lock lock(registry_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError("not_found", 404, "no session with id " + id);
    return it->second;
}

void SessionManager::insert(std::shared_ptr<Session> s) {
    std::unique_lock lock(registry_mutex_);
    if (!sessions_.emplace(s->id, s).second) throw ServiceError("conflict", 409, "duplicate session id");
}

bool SessionManager::exists(const std::string& id) const {
    std::shared_lock lock(registry_mutex_);
    return sessions_.count(id) > 0;
}

std::size_t SessionManager::session_count() const {
    std::shared_lock lock(registry_mutex_);
    return sessions_.size();
}

CreateReply SessionManager::create_session(const json& overrides) {
    ExamConfig cfg = config_from_json(overrides);
    if (cfg.question_limit() < 1) throw validation_error("a live session must ask at least one question");
    std::uint64_t seed = random_seed();
    if (overrides.is_object() && overrides.contains("seed")) seed = read_field<std::uint64_t>(overrides, "seed", 0);

    auto session = std::make_shared<Session>(random_token(), seed, cfg);
    session->created_at = session->updated_at = now_iso8601();
    if (!data_dir_.empty()) {
        session->log_path = data_dir_ / (session->id + ".jsonl");
        session->log.open(session->log_path, std::ios::app);
        if (!session->log) throw ServiceError("storage_error", 500, "cannot open session log");
    }
    session->append({{"event", "created"},
                     {"session_id", session->id},
                     {"seed", seed},
                     {"config", config_to_json(session->cfg)},
                     {"at", session->created_at}});
    session->advance();
    insert(session);
    return CreateReply{session->id, *session->pending, session->cfg};
}

ResponseReply SessionManager::submit_response(const std::string& id, int step,
                                              const std::optional<std::string>& chosen) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (s->last_reply && step == s->last_step) {
        if (chosen == s->last_chosen) return *s->last_reply;
        throw ServiceError("conflict", 409, "step " + std::to_string(step) + " was already answered differently");
    }
    if (s->exam.finished()) throw ServiceError("conflict", 409, "session is finished");
    if (!s->pending || step != s->pending->step)
        throw ServiceError("conflict", 409,
                           "stale step " + std::to_string(step) + ", expected " +
                               std::to_string(s->pending ? s->pending->step : 0));
    if (chosen && std::find(s->optotypes.begin(), s->optotypes.end(), *chosen) == s->optotypes.end())
        throw validation_error("unknown optotype '" + *chosen + "'");

    const Stimulus shown = *s->pending;
    const bool correct = chosen.has_value() && *chosen == shown.optotype;
    s->updated_at = now_iso8601();
    json event = {{"event", "response"},   {"step", step},     {"size_arcmin", shown.size_arcmin},
                  {"optotype", shown.optotype}, {"correct", correct}, {"at", s->updated_at}};
    if (chosen) event["chosen"] = *chosen;
    else event["timeout"] = true;
    s->append(event);
    ResponseReply reply = s->apply(chosen);
    if (reply.finished) s->append({{"event", "finished"}, {"step", step}, {"at", s->updated_at}});
    return reply;
}

Stimulus SessionManager::pending_stimulus(const std::string& id) const {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (!s->pending) throw ServiceError("conflict", 409, "session is finished");
    return *s->pending;
}

BeliefSummary SessionManager::get_belief(const std::string& id) const {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    const ParticleSet& ps = s->exam.belief();
    BeliefSummary b;
    b.step = static_cast<int>(s->exam.trace().size());
    b.map_arcmin = posterior_map(ps);
    const std::vector<double> qs = {0.05, 0.25, 0.5, 0.75, 0.95};
    const auto values = posterior_quantiles(ps, qs);
    for (std::size_t i = 0; i < qs.size(); ++i) b.quantiles.push_back({qs[i], values[i]});
    b.confidence = credible_mass(ps, b.map_arcmin, s->cfg.confidence_eps);
    b.histogram = logmar_histogram(ps, -1.0, 3.0, 40);
    b.effective_sample_size = ps.effective_sample_size();
    return b;
}

ExamResult SessionManager::get_result(const std::string& id) const {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (!s->exam.finished()) throw ServiceError("not_finished", 409, "session is still in progress");
    return s->exam.result();
}

std::optional<std::string> SessionManager::restore_from_log(const std::filesystem::path& file, bool& truncated) {
    truncated = false;
    std::ifstream in(file, std::ios::binary);
    std::string line;
    std::uintmax_t valid_bytes = 0;
    std::shared_ptr<Session> s;

    auto next_line = [&](std::string& out) -> bool {
        if (!std::getline(in, out)) return false;
        // A final line without '\n' was cut short mid-write.
        if (in.eof()) {
            truncated = true;
            return false;
        }
        return true;
    };

    if (!next_line(line)) return std::nullopt;
    try {
        const json created = json::parse(line);
        if (created.at("event") != "created") return std::nullopt;
        s = std::make_shared<Session>(created.at("session_id").get<std::string>(),
                                      created.at("seed").get<std::uint64_t>(), config_from_json(created.at("config")));
        s->created_at = s->updated_at = created.value("at", "");
    } catch (const std::exception&) {
        return std::nullopt;
    }
    valid_bytes += line.size() + 1;
    s->advance();

    while (next_line(line)) {
        try {
            const json ev = json::parse(line);
            const std::string kind = ev.at("event").get<std::string>();
            if (kind == "response") {
                // Validate fully before applying so a bad record leaves no trace.
                if (!s->pending) throw std::runtime_error("response after finish");
                const Stimulus& shown = *s->pending;
                if (ev.at("step").get<int>() != shown.step ||
                    ev.at("size_arcmin").get<double>() != shown.size_arcmin ||
                    ev.at("optotype").get<std::string>() != shown.optotype)
                    throw std::runtime_error("replayed stimulus diverges from log");
                std::optional<std::string> chosen;
                if (ev.contains("chosen")) chosen = ev.at("chosen").get<std::string>();
                if ((chosen.has_value() && *chosen == shown.optotype) != ev.at("correct").get<bool>())
                    throw std::runtime_error("replayed correctness diverges from log");
                const std::string at = ev.value("at", s->updated_at);
                s->apply(chosen);
                s->updated_at = at;
            } else if (kind != "finished") {
                throw std::runtime_error("unknown event");
            }
        } catch (const std::exception&) {
            truncated = true;
            break;
        }
        valid_bytes += line.size() + 1;
    }
    in.close();
    if (truncated) std::filesystem::resize_file(file, valid_bytes);

    s->log_path = file;
    s->log.open(file, std::ios::app);
    const std::string id = s->id;
    insert(s);
    return id;
}

RecoveryReport SessionManager::recover_sessions() {
    RecoveryReport report;
    if (data_dir_.empty() || !std::filesystem::exists(data_dir_)) return report;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(data_dir_))
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        if (exists(f.stem().string())) continue;
        bool truncated = false;
        const auto id = restore_from_log(f, truncated);
        if (!id) {
            report.skipped.push_back(f.stem().string());
            continue;
        }
        ++report.restored;
        if (truncated) report.truncated.push_back(*id);
    }
    return report;
}

json to_json(const Stimulus& s) {
    return {{"step", s.step},
            {"size_arcmin", s.size_arcmin},
            {"size_logmar", std::log10(s.size_arcmin)},
            {"optotype", s.optotype}};
}

json result_to_json(const ExamResult& r, const std::string& session_id) {
    json trace = json::array();
    for (std::size_t i = 0; i < r.trace.size(); ++i)
        trace.push_back({{"step", i + 1}, {"size_arcmin", r.trace[i].size}, {"correct", r.trace[i].correct}});
    std::ostringstream snellen;
    snellen << "20/" << std::llround(20.0 * r.predicted_k1);
    return {{"session_id", session_id},
            {"predicted_arcmin", r.predicted_k1},
            {"predicted_logmar", std::log10(r.predicted_k1)},
            {"snellen", snellen.str()},
            {"confidence", r.confidence},
            {"questions_asked", r.questions_asked},
            {"converged", r.converged},
            {"trace", trace}};
}

json to_json(const ResponseReply& r, const std::string& session_id) {
    json out = {{"session_id", session_id},
                {"step", r.step},
                {"correct", r.correct},
                {"finished", r.finished},
                {"confidence", r.confidence}};
    if (r.next) out["stimulus"] = to_json(*r.next);
    if (r.result) out["result"] = result_to_json(*r.result, session_id);
    return out;
}

json to_json(const BeliefSummary& b, const std::string& session_id) {
    json quantiles = json::array();
    for (const auto& q : b.quantiles)
        quantiles.push_back({{"q", q.q}, {"arcmin", q.arcmin}, {"logmar", std::log10(q.arcmin)}});
    return {{"session_id", session_id},
            {"step", b.step},
            {"map_arcmin", b.map_arcmin},
            {"map_logmar", std::log10(b.map_arcmin)},
            {"quantiles", quantiles},
            {"confidence", b.confidence},
            {"histogram", {{"edges_logmar", b.histogram.edges}, {"mass", b.histogram.mass}}},
            {"effective_sample_size", b.effective_sample_size}};
}

}  // namespace acuity::service
