#include <httplib.h>

#include <iostream>

#include "bard/service.hpp"

namespace bard {

void serve(TrialService& service, const std::string& host, int port) {
    httplib::Server server;

    auto dispatch = [&service](const httplib::Request& req, httplib::Response& res) {
        std::map<std::string, std::string> query;
        for (const auto& [k, v] : req.params) query[k] = v;
        const auto r = service.handle(req.method, req.path, req.body,
                                      req.get_header_value("Authorization"), query);
        res.status = r.status;
        res.set_content(r.body.dump(), r.content_type);
    };
    const std::string any = R"(/.*)";
    server.Get(any, dispatch);
    server.Post(any, dispatch);
    server.Put(any, dispatch);
    server.Delete(any, dispatch);
    server.Patch(any, dispatch);
    server.set_exception_handler(
        [](const httplib::Request& req, httplib::Response& res, std::exception_ptr ep) {
            ServiceResponse r = problem(500, "internal", "Internal error", "unexpected failure",
                                        req.path);
            try {
                if (ep) std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                r = problem_from_exception(e, req.path);
            } catch (...) {
            }
            res.status = r.status;
            res.set_content(r.body.dump(), r.content_type);
        });

    std::cerr << "bard: serving on http://" << host << ":" << port << " (data: "
              << service.store().root() << ")\n";
    if (!server.listen(host, port))
        throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace bard
