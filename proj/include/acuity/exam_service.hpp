#pragma once
// Session layer for live exams.
//
// A session wraps one StatExam and hands it to a client one stimulus at a
// time. Correctness is decided here from (shown, chosen). Each session has an
// append-only JSON-lines event log holding its RNG seed and resolved config,
// so replaying the log rebuilds the belief exactly.

#include "acuity/exams.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace acuity::service {

class ServiceError : public std::runtime_error {
public:
    ServiceError(std::string code, int http_status, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)), status_(http_status) {}
    const std::string& code() const noexcept { return code_; }
    int http_status() const noexcept { return status_; }

private:
    std::string code_;
    int status_;
};

// Overrides use the same snake_case keys that config_to_json emits.
ExamConfig config_from_json(const nlohmann::json& overrides);
nlohmann::json config_to_json(const ExamConfig& cfg);

std::vector<std::string> optotype_set(int count);

struct Stimulus {
    int step = 0;
    double size_arcmin = 0.0;
    std::string optotype;
};

struct ResponseReply {
    int step = 0;
    bool correct = false;
    bool finished = false;
    double confidence = 0.0;  // Star sessions: current stopping statistic
    std::optional<Stimulus> next;
    std::optional<ExamResult> result;
};

struct CreateReply {
    std::string session_id;
    Stimulus stimulus;
    ExamConfig config;
};

struct QuantilePoint {
    double q;
    double arcmin;
};

struct BeliefSummary {
    int step = 0;
    double map_arcmin = 0.0;
    std::vector<QuantilePoint> quantiles;
    double confidence = 0.0;
    LogMarHistogram histogram;
    double effective_sample_size = 0.0;
};

struct RecoveryReport {
    std::size_t restored = 0;
    std::vector<std::string> truncated;  // sessions restored to their last valid event
    std::vector<std::string> skipped;    // logs without a usable creation record
};

class SessionManager {
public:
    // Empty data_dir keeps sessions in memory only.
    explicit SessionManager(std::filesystem::path data_dir = {});
    ~SessionManager();
    SessionManager(const SessionManager&) = delete;
    SessionManager& operator=(const SessionManager&) = delete;

    CreateReply create_session(const nlohmann::json& overrides = nlohmann::json::object());
    // chosen == nullopt records a timeout, scored incorrect.
    ResponseReply submit_response(const std::string& id, int step, const std::optional<std::string>& chosen);
    BeliefSummary get_belief(const std::string& id) const;
    ExamResult get_result(const std::string& id) const;
    Stimulus pending_stimulus(const std::string& id) const;
    bool exists(const std::string& id) const;
    std::size_t session_count() const;

    RecoveryReport recover_sessions();

    const std::filesystem::path& data_dir() const noexcept { return data_dir_; }

private:
    struct Session;

    std::shared_ptr<Session> find(const std::string& id) const;
    void insert(std::shared_ptr<Session> s);
    std::optional<std::string> restore_from_log(const std::filesystem::path& file, bool& truncated);

    std::filesystem::path data_dir_;
    mutable std::shared_mutex registry_mutex_;
    std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
};

nlohmann::json to_json(const Stimulus& s);
nlohmann::json to_json(const ResponseReply& r, const std::string& session_id);
nlohmann::json to_json(const BeliefSummary& b, const std::string& session_id);
nlohmann::json result_to_json(const ExamResult& r, const std::string& session_id);

}  // namespace acuity::service
