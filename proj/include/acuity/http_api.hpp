#pragma once
// JSON-over-HTTP binding of the session service.
//
//   POST /sessions                      body: config overrides (optional)
//   POST /sessions/{id}/responses       body: {"step": n, "chosen": "up"} or {"step": n, "timeout": true}
//   GET  /sessions/{id}                 pending stimulus, for clients resuming
//   GET  /sessions/{id}/belief
//   GET  /sessions/{id}/result
//   GET  /healthz
//
// Errors are {"code": ..., "message": ...} with a matching HTTP status.

#include "acuity/exam_service.hpp"

namespace httplib {
class Server;
}

namespace acuity::service {

void register_routes(httplib::Server& server, SessionManager& sessions);

}  // namespace acuity::service
