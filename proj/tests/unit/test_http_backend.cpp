#include <doctest.h>

#include <cstdlib>

#include "fake_server.hpp"
#include "storyreel/http_backend.hpp"
#include "support.hpp"

using namespace storyreel;
using json = nlohmann::json;

namespace {

constexpr const char* kKeyEnv = "STORYREEL_TEST_HTTP_KEY";
constexpr const char* kSecret = "sk-test-9f8e7d6c5b4a-secret";

struct Counters {
    std::atomic<int> chat{0};
};

EndpointConfig endpoint(const testing::FakeServer& server, const std::string& path) {
    return EndpointConfig{server.url(path), "test-model", kKeyEnv, "alloy"};
}

ChatRequest simple_request() {
    ChatRequest request;
    request.model_id = "test-model";
    request.messages = {ChatTurn{"system", "tower", "You are the Editor."}, ChatTurn{"user", "tower", "Hi"}};
    return request;
}

bool authorized(const httplib::Request& req) { return req.get_header_value("Authorization") == std::string("Bearer ") + kSecret; }

}  // namespace

TEST_CASE("live chat client speaks the chat-completions shape") {
    setenv(kKeyEnv, kSecret, 1);
    testing::FakeServer server;
    json seen;
    server.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        if (!authorized(req)) {
            res.status = 401;
            return;
        }
        seen = json::parse(req.body);
        res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"APPROVE"}}],)"
                        R"("usage":{"prompt_tokens":120,"completion_tokens":80}})",
                        "application/json");
    });
    server.start();
    HttpChatBackend chat(endpoint(server, "/v1/chat/completions"), 5000);
    const ChatResponse response = chat.chat_complete(simple_request());
    CHECK(response.content == "APPROVE");
    CHECK(response.usage == Usage{120, 80});
    CHECK(seen["model"] == "test-model");
    CHECK(seen["messages"].size() == 2);
    CHECK(seen["messages"][0]["role"] == "system");
    CHECK_FALSE(seen["messages"][0].contains("author"));
}

TEST_CASE("invalid key gives AuthError with zero retries") {
    setenv(kKeyEnv, "sk-wrong", 1);
    testing::FakeServer server;
    std::atomic<int> hits{0};
    server.server().Post("/chat", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 401;
        res.set_content(R"({"error":"invalid api key"})", "application/json");
    });
    server.start();
    HttpChatBackend chat(endpoint(server, "/chat"), 5000);
    SimulatedRunClock clock;
    CHECK_THROWS_AS(with_retry([&](int) { return chat.chat_complete(simple_request()); }, RetryPolicy{}, clock),
                    AuthError);
    CHECK(hits == 1);
    CHECK(clock.sleeps().empty());
}

TEST_CASE("missing key variable is an AuthError naming the variable, with no request sent") {
    unsetenv(kKeyEnv);
    testing::FakeServer server;
    std::atomic<int> hits{0};
    server.server().Post("/chat", [&](const httplib::Request&, httplib::Response&) { ++hits; });
    server.start();
    HttpChatBackend chat(endpoint(server, "/chat"), 5000);
    try {
        chat.chat_complete(simple_request());
        FAIL("expected AuthError");
    } catch (const AuthError& e) {
        CHECK(std::string(e.what()).find(kKeyEnv) != std::string::npos);
    }
    CHECK(hits == 0);
}

TEST_CASE("5xx is retried and then succeeds") {
    setenv(kKeyEnv, kSecret, 1);
    testing::FakeServer server;
    std::atomic<int> hits{0};
    server.server().Post("/chat", [&](const httplib::Request&, httplib::Response& res) {
        if (++hits < 3) {
            res.status = 503;
            return;
        }
        res.set_content(R"({"choices":[{"message":{"content":"ok"}}],"usage":{"prompt_tokens":1,"completion_tokens":2}})",
                        "application/json");
    });
    server.start();
    HttpChatBackend chat(endpoint(server, "/chat"), 5000);
    SimulatedRunClock clock;
    const auto result = with_retry([&](int) { return chat.chat_complete(simple_request()); }, RetryPolicy{}, clock);
    CHECK(result.value.content == "ok");
    CHECK(result.attempts == 3);
    CHECK(clock.sleeps() == std::vector<std::int64_t>{1000, 2000});
}

TEST_CASE("429 and 408 are transport errors, unreachable hosts too") {
    setenv(kKeyEnv, kSecret, 1);
    testing::FakeServer server;
    server.server().Post("/busy", [](const httplib::Request&, httplib::Response& res) { res.status = 429; });
    server.server().Post("/slow", [](const httplib::Request&, httplib::Response& res) { res.status = 408; });
    server.start();
    CHECK_THROWS_AS(HttpChatBackend(endpoint(server, "/busy"), 5000).chat_complete(simple_request()), TransportError);
    CHECK_THROWS_AS(HttpChatBackend(endpoint(server, "/slow"), 5000).chat_complete(simple_request()), TransportError);
    HttpChatBackend nowhere(EndpointConfig{"http://127.0.0.1:9/chat", "m", kKeyEnv, ""}, 500);
    CHECK_THROWS_AS(nowhere.chat_complete(simple_request()), TransportError);
}

TEST_CASE("malformed responses are not retried") {
    setenv(kKeyEnv, kSecret, 1);
    testing::FakeServer server;
    server.server().Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("<html>oops</html>", "text/html");
    });
    server.server().Post("/nousage", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"choices":[{"message":{"content":"hi"}}]})", "application/json");
    });
    server.server().Post("/teapot", [](const httplib::Request&, httplib::Response& res) { res.status = 418; });
    server.start();
    CHECK_THROWS_AS(HttpChatBackend(endpoint(server, "/garbage"), 5000).chat_complete(simple_request()),
                    MalformedResponse);
    CHECK_THROWS_AS(HttpChatBackend(endpoint(server, "/nousage"), 5000).chat_complete(simple_request()),
                    MalformedResponse);
    CHECK_THROWS_AS(HttpChatBackend(endpoint(server, "/teapot"), 5000).chat_complete(simple_request()),
                    MalformedResponse);
}

TEST_CASE("media clients") {
    setenv(kKeyEnv, kSecret, 1);
    testing::FakeServer server;
    const std::string png = std::string("\x89PNG\r\n\x1a\n", 8) + "pixels";
    server.server().Post("/image", [&](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        if (body["prompt"].get<std::string>().find("gore") != std::string::npos) {
            res.status = 400;
            res.set_content(R"({"error":{"code":"content_policy_violation"}})", "application/json");
            return;
        }
        res.set_content(json{{"data", {{{"b64_json", testing::base64_encode(png)}}}}}.dump(), "application/json");
    });
    server.server().Post("/speech", [](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        CHECK(body["voice"] == "alloy");
        res.set_content(make_wav(1200, "x"), "audio/wav");
    });
    server.server().Post("/music", [](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        const auto ms = static_cast<std::int64_t>(body["duration_s"].get<double>() * 1000.0 + 0.5);
        res.set_content(json{{"audio_base64", testing::base64_encode(make_wav(ms, "m"))}}.dump(), "application/json");
    });
    server.start();
    HttpImageBackend image(endpoint(server, "/image"), 5000);
    const MediaAsset picture = image.generate_image("an owl", CallTag{});
    CHECK(picture.bytes == png);
    CHECK(picture.extension == "png");
    CHECK_THROWS_AS(image.generate_image("gore", CallTag{}), ModerationRejection);
    CHECK_THROWS_AS(image.generate_image(" ", CallTag{}), std::invalid_argument);

    HttpSpeechBackend speech(endpoint(server, "/speech"), 5000);
    CHECK(speech.synthesize_speech("hello there", CallTag{}).duration_ms == 1200);

    HttpMusicBackend music(endpoint(server, "/music"), 5000);
    CHECK(music.compose_music(MusicPrompt{"piano", "warm"}, 9200, CallTag{}).duration_ms == 9200);
    CHECK_THROWS_AS(music.compose_music(MusicPrompt{"piano", "warm"}, 0, CallTag{}), std::invalid_argument);
}

TEST_CASE("error messages never carry the key") {
    setenv(kKeyEnv, kSecret, 1);
    testing::FakeServer server;
    server.server().Post("/echo", [](const httplib::Request& req, httplib::Response& res) {
        res.status = 400;
        res.set_content("rejected header " + req.get_header_value("Authorization"), "text/plain");
    });
    server.start();
    try {
        HttpChatBackend(endpoint(server, "/echo"), 5000).chat_complete(simple_request());
        FAIL("expected an error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find(kSecret) == std::string::npos);
    }
}

TEST_CASE("endpoint URLs") {
    CHECK(split_url("https://api.example.com/v1/chat").origin == "https://api.example.com");
    CHECK(split_url("https://api.example.com/v1/chat").path == "/v1/chat");
    CHECK(split_url("http://localhost:8080").path == "/");
    CHECK_THROWS(split_url("ftp://x"));
    CHECK_THROWS(split_url("example.com/v1"));
}
