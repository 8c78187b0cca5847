#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "bard/conduct.hpp"

namespace bard {

struct ServiceResponse {
    int status = 200;
    Json body;
    std::string content_type = "application/json";
};

/// RFC 7807 problem document for an exception (or a bare status/detail).
ServiceResponse problem(int status, const std::string& slug, const std::string& title,
                        const std::string& detail, const std::string& instance = "");
ServiceResponse problem_from_exception(const std::exception& e, const std::string& instance);

/*
 * Transport-independent request handling for the trial-conduct API. The HTTP
 * server is a thin adapter over handle(), which keeps every route testable
 * without sockets. Engines are cached per trial and rebuilt from the log on
 * first use; each trial has its own mutex so unrelated trials proceed in
 * parallel while commands on one trial are serialized.
 */
class TrialService {
   public:
    struct Options {
        std::string data_dir = "bard-data";
        /// When set, requests must carry "Authorization: Bearer <token>".
        std::optional<std::string> token;
    };

    explicit TrialService(Options opts);

    ServiceResponse handle(const std::string& method, const std::string& path,
                           const std::string& body,
                           const std::string& authorization = "",
                           const std::map<std::string, std::string>& query = {});

    const EventStore& store() const { return store_; }

   private:
    struct Slot {
        std::mutex mu;
        std::unique_ptr<TrialEngine> engine;
    };

    ServiceResponse route(const std::string& method, const std::string& path,
                          const Json& body, const std::map<std::string, std::string>& query);

    ServiceResponse post_design(const Json& body);
    ServiceResponse get_design(const std::string& id);
    ServiceResponse get_boundaries(const std::string& design_id,
                                   const std::map<std::string, std::string>& query);
    ServiceResponse post_trial(const Json& body);
    ServiceResponse trial_command(const std::string& id, const std::string& action,
                                  const Json& body);
    ServiceResponse trial_view(const std::string& id, const std::string& view);

    std::shared_ptr<Slot> slot(const std::string& id);
    DesignConfig resolve_design(const Json& body, std::string& design_id);

    Options opts_;
    EventStore store_;
    std::mutex slots_mu_;
    std::map<std::string, std::shared_ptr<Slot>> slots_;
};

/// Runs the HTTP server until the process is stopped.
void serve(TrialService& service, const std::string& host, int port);

}  // namespace bard
