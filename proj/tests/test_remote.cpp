#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "emotok/llm_client.hpp"

using namespace emotok;
namespace br = emotok::bridge;

namespace {

// In-process replica of the bundled mock server.
struct MockServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    nlohmann::json last_request;
    std::string last_auth;

    explicit MockServer(const std::string& mode = "ok") {
        server.Post("/v1/generate", [this, mode](const httplib::Request& req,
                                                 httplib::Response& res) {
            last_request = nlohmann::json::parse(req.body, nullptr, false);
            if (req.has_header("Authorization")) last_auth = req.get_header_value("Authorization");
            if (mode == "malformed") {
                res.set_content("{\"completion\": \"no text field\"}", "application/json");
                return;
            }
            if (mode == "status500") {
                res.status = 500;
                res.set_content("{\"error\": \"boom\"}", "application/json");
                return;
            }
            if (mode == "notjson") {
                res.set_content("this is not json {", "application/json");
                return;
            }
            nlohmann::json reply;
            reply["text"] = "This is a happy person.";
            res.set_content(reply.dump(), "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~MockServer() {
        server.stop();
        thread.join();
    }

    br::RemoteEndpoint endpoint() const {
        br::RemoteEndpoint e;
        e.host = "127.0.0.1";
        e.port = port;
        e.timeout_ms = 2000;
        e.max_retries = 1;
        e.backoff_ms = 10;
        return e;
    }
};

std::vector<br::SkeletonSlot> two_slots() {
    std::vector<br::SkeletonSlot> slots(2);
    slots[0].vector = Tensor::from_vector({1.0, 2.0, 3.0});
    slots[1].vector = Tensor::from_vector({4.0, 5.0, 6.0});
    return slots;
}

}  // namespace

TEST_CASE("remote_decode extracts the canned completion verbatim") {
    MockServer mock;
    auto text = br::remote_decode(mock.endpoint(), "prompt text", two_slots(), {});
    CHECK(text == "This is a happy person.");
}

TEST_CASE("the wire format carries prompt, skeleton tokens, and max_tokens") {
    MockServer mock;
    br::RemoteOptions options;
    options.max_tokens = 17;
    br::remote_decode(mock.endpoint(), "the prompt", two_slots(), options);
    REQUIRE(!mock.last_request.is_discarded());
    CHECK(mock.last_request["prompt"] == "the prompt");
    CHECK(mock.last_request["max_tokens"] == 17);
    REQUIRE(mock.last_request["skeleton_tokens"].size() == 2);
    CHECK(mock.last_request["skeleton_tokens"][0] == nlohmann::json::array({1.0, 2.0, 3.0}));
    CHECK(mock.last_request["skeleton_tokens"][1] == nlohmann::json::array({4.0, 5.0, 6.0}));
}

TEST_CASE("credentials come from the environment and go into the bearer header") {
    MockServer mock;
    ::setenv("EMOTOK_REMOTE_API_KEY", "secret-key-123", 1);
    br::remote_decode(mock.endpoint(), "p", {}, {});
    CHECK(mock.last_auth == "Bearer secret-key-123");
    ::unsetenv("EMOTOK_REMOTE_API_KEY");
}

TEST_CASE("unreachable endpoint raises TimeoutError after the configured retries") {
    br::RemoteEndpoint endpoint;
    endpoint.host = "127.0.0.1";
    endpoint.port = 1;  // nothing listens here
    endpoint.timeout_ms = 200;
    endpoint.max_retries = 2;
    endpoint.backoff_ms = 1;
    try {
        br::remote_decode(endpoint, "p", {}, {});
        FAIL("expected TimeoutError");
    } catch (const TimeoutError& e) {
        CHECK(std::string(e.what()).find("3 attempts") != std::string::npos);
    }
}

TEST_CASE("malformed body raises SchemaError naming the missing field") {
    MockServer mock("malformed");
    try {
        br::remote_decode(mock.endpoint(), "p", {}, {});
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("text") != std::string::npos);
    }
}

TEST_CASE("non-JSON body raises SchemaError") {
    MockServer mock("notjson");
    CHECK_THROWS_AS(br::remote_decode(mock.endpoint(), "p", {}, {}), SchemaError);
}

TEST_CASE("non-success status raises HttpStatusError with the code") {
    MockServer mock("status500");
    try {
        br::remote_decode(mock.endpoint(), "p", {}, {});
        FAIL("expected HttpStatusError");
    } catch (const HttpStatusError& e) {
        CHECK(e.status() == 500);
    }
}
