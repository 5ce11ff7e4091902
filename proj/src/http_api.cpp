#include "acuity/http_api.hpp"

#include <httplib.h>

namespace acuity::service {
namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send_json(res, status, {{"code", code}, {"message", message}});
}

// Runs a handler and maps service and parse failures onto error payloads.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const ServiceError& e) {
        send_error(res, e.http_status(), e.code(), e.what());
    } catch (const json::exception& e) {
        send_error(res, 400, "bad_request", std::string("malformed JSON: ") + e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "internal_error", e.what());
    }
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    return json::parse(req.body);
}

}  // namespace

void register_routes(httplib::Server& server, SessionManager& sessions) {
    server.Get("/healthz", [&sessions](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}, {"sessions", sessions.session_count()}});
    });

    server.Post("/sessions", [&sessions](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const CreateReply reply = sessions.create_session(parse_body(req));
            send_json(res, 201,
                      {{"session_id", reply.session_id},
                       {"stimulus", to_json(reply.stimulus)},
                       {"optotypes", optotype_set(reply.config.optotype_count)},
                       {"config", config_to_json(reply.config)}});
        });
    });

    server.Post(R"(/sessions/([0-9a-f]+)/responses)", [&sessions](const httplib::Request& req,
                                                                  httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            const json body = parse_body(req);
            if (!body.is_object() || !body.contains("step") || !body.at("step").is_number_integer())
                throw ServiceError("validation_error", 400, "response needs an integer 'step'");
            std::optional<std::string> chosen;
            if (body.contains("chosen") && !body.at("chosen").is_null()) {
                if (!body.at("chosen").is_string())
                    throw ServiceError("validation_error", 400, "'chosen' must be a string");
                chosen = body.at("chosen").get<std::string>();
            } else if (!body.value("timeout", false)) {
                throw ServiceError("validation_error", 400, "response needs 'chosen' or 'timeout': true");
            }
            const ResponseReply reply = sessions.submit_response(id, body.at("step").get<int>(), chosen);
            send_json(res, 200, to_json(reply, id));
        });
    });

    server.Get(R"(/sessions/([0-9a-f]+))", [&sessions](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            if (!sessions.exists(id)) throw ServiceError("not_found", 404, "no session with id " + id);
            json body = {{"session_id", id}};
            try {
                body["state"] = "awaiting_response";
                body["stimulus"] = to_json(sessions.pending_stimulus(id));
            } catch (const ServiceError&) {
                body["state"] = "finished";
            }
            send_json(res, 200, body);
        });
    });

    server.Get(R"(/sessions/([0-9a-f]+)/belief)", [&sessions](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            send_json(res, 200, to_json(sessions.get_belief(id), id));
        });
    });

    server.Get(R"(/sessions/([0-9a-f]+)/result)", [&sessions](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            send_json(res, 200, result_to_json(sessions.get_result(id), id));
        });
    });
}

}  // namespace acuity::service
