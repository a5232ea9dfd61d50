// Mock remote decoder for tests and offline runs. Implements the wire
// format expected by remote_decode: POST {prompt, skeleton_tokens,
// max_tokens} -> {"text": ...}.
#include <chrono>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

int main(int argc, char** argv) {
    CLI::App app{"emotok-mock-llm: canned-response decoder endpoint"};
    int port = 8080;
    std::string host = "127.0.0.1";
    std::string path = "/v1/generate";
    std::string text = "This is a happy person.";
    int delay_ms = 0;
    bool malformed = false;
    int status = 200;
    app.add_option("--host", host, "Bind address");
    app.add_option("--port", port, "Port");
    app.add_option("--path", path, "Endpoint path");
    app.add_option("--text", text, "Completion text to return");
    app.add_option("--delay-ms", delay_ms, "Artificial response delay");
    app.add_option("--status", status, "HTTP status to return");
    app.add_flag("--malformed", malformed, "Return a body without the 'text' field");
    CLI11_PARSE(app, argc, argv);

    httplib::Server server;
    server.Post(path, [&](const httplib::Request& req, httplib::Response& res) {
        if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception&) {
            res.status = 400;
            res.set_content("{\"error\":\"bad request body\"}", "application/json");
            return;
        }
        res.status = status;
        if (malformed) {
            res.set_content("{\"completion\":\"missing text field\"}", "application/json");
            return;
        }
        nlohmann::json reply;
        reply["text"] = text;
        std::size_t slots = body.contains("skeleton_tokens") ? body["skeleton_tokens"].size() : 0;
        reply["echo_slots"] = slots;
        res.set_content(reply.dump(), "application/json");
    });

    std::cout << "mock decoder listening on " << host << ":" << port << path << "\n";
    if (!server.listen(host, port)) {
        std::cerr << "failed to bind " << host << ":" << port << "\n";
        return 1;
    }
    return 0;
}
