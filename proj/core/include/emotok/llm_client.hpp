#pragma once

#include <string>
#include <vector>

#include "emotok/bridge.hpp"

namespace emotok::bridge {

// Remote decoder endpoint. Credentials come from the environment variable
// named by api_key_env (sent as a bearer token, never logged).
struct RemoteEndpoint {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string path = "/v1/generate";
    int timeout_ms = 5000;
    int max_retries = 2;
    int backoff_ms = 100;
    std::string api_key_env = "EMOTOK_REMOTE_API_KEY";
};

struct RemoteOptions {
    std::size_t max_tokens = 64;
};

// One POST per attempt with bounded retries and exponential backoff.
// Wire format: {"prompt": str, "skeleton_tokens": [[f,...],...],
// "max_tokens": int} -> {"text": str}.
// Throws TimeoutError after exhausting retries, HttpStatusError on a
// non-success status, SchemaError on a malformed body.
std::string remote_decode(const RemoteEndpoint& endpoint, const std::string& prompt,
                          const std::vector<SkeletonSlot>& skeleton_tokens,
                          const RemoteOptions& options = {});

}  // namespace emotok::bridge
