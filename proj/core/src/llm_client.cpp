#include "emotok/llm_client.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "emotok/errors.hpp"

namespace emotok::bridge {

std::string remote_decode(const RemoteEndpoint& endpoint, const std::string& prompt,
                          const std::vector<SkeletonSlot>& skeleton_tokens,
                          const RemoteOptions& options) {
    if (endpoint.host.empty()) throw ParameterError("remote_decode: endpoint host not configured");

    nlohmann::json body;
    body["prompt"] = prompt;
    auto tokens = nlohmann::json::array();
    for (const auto& slot : skeleton_tokens) {
        auto vec = nlohmann::json::array();
        for (std::size_t i = 0; i < slot.vector.numel(); ++i) vec.push_back(slot.vector[i]);
        tokens.push_back(std::move(vec));
    }
    body["skeleton_tokens"] = std::move(tokens);
    body["max_tokens"] = options.max_tokens;
    const std::string payload = body.dump();

    httplib::Client client(endpoint.host, endpoint.port);
    client.set_connection_timeout(0, endpoint.timeout_ms * 1000);
    client.set_read_timeout(endpoint.timeout_ms / 1000, (endpoint.timeout_ms % 1000) * 1000);

    httplib::Headers headers;
    if (const char* key = std::getenv(endpoint.api_key_env.c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const int attempts = endpoint.max_retries + 1;
    std::string last_error;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(endpoint.backoff_ms << (attempt - 1)));
        }
        auto res = client.Post(endpoint.path, headers, payload, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;  // transport failure: retry
        }
        if (res->status < 200 || res->status >= 300) {
            throw HttpStatusError(res->status, "remote decoder returned status " +
                                                   std::to_string(res->status) + " for " +
                                                   endpoint.path);
        }
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("remote decoder sent malformed JSON: ") + e.what());
        }
        if (!parsed.contains("text") || !parsed["text"].is_string()) {
            throw SchemaError("remote decoder response missing string field 'text'");
        }
        return parsed["text"].get<std::string>();
    }
    throw TimeoutError("remote decoder unreachable after " + std::to_string(attempts) +
                       " attempts (" + last_error + ")");
}

}  // namespace emotok::bridge
