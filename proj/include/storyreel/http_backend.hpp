#pragma once

#include <cstdint>
#include <string>

#include "storyreel/backends.hpp"

namespace storyreel {

/// One configured HTTP endpoint. The API key is read from the named
/// environment variable at call time and never stored or logged.
struct EndpointConfig {
    std::string url;
    std::string model;
    std::string api_key_env;
    std::string voice;  // speech only
};

/// OpenAI-compatible chat-completions client.
class HttpChatBackend final : public ChatBackend {
public:
    HttpChatBackend(EndpointConfig endpoint, std::int64_t timeout_ms)
        : endpoint_(std::move(endpoint)), timeout_ms_(timeout_ms) {}
    ChatResponse chat_complete(const ChatRequest& request) override;

private:
    EndpointConfig endpoint_;
    std::int64_t timeout_ms_;
};

/// Text-to-image over JSON POST: {"model","prompt","n":1,"response_format":"b64_json"}
/// answered with {"data":[{"b64_json":...}]}. A 400 whose body mentions a
/// content policy is reported as ModerationRejection.
class HttpImageBackend final : public ImageBackend {
public:
    HttpImageBackend(EndpointConfig endpoint, std::int64_t timeout_ms)
        : endpoint_(std::move(endpoint)), timeout_ms_(timeout_ms) {}
    MediaAsset generate_image(std::string_view prompt, const CallTag& tag) override;

private:
    EndpointConfig endpoint_;
    std::int64_t timeout_ms_;
};

/// Speech synthesis over JSON POST {"model","input","voice","response_format":"wav"}; WAV bytes back.
class HttpSpeechBackend final : public SpeechBackend {
public:
    HttpSpeechBackend(EndpointConfig endpoint, std::int64_t timeout_ms)
        : endpoint_(std::move(endpoint)), timeout_ms_(timeout_ms) {}
    MediaAsset synthesize_speech(std::string_view text, const CallTag& tag) override;

private:
    EndpointConfig endpoint_;
    std::int64_t timeout_ms_;
};

/// Music generation over JSON POST {"model","prompt","mood","duration_s"}; WAV bytes back.
class HttpMusicBackend final : public MusicBackend {
public:
    HttpMusicBackend(EndpointConfig endpoint, std::int64_t timeout_ms)
        : endpoint_(std::move(endpoint)), timeout_ms_(timeout_ms) {}
    MediaAsset compose_music(const MusicPrompt& prompt, std::int64_t target_duration_ms,
                             const CallTag& tag) override;

private:
    EndpointConfig endpoint_;
    std::int64_t timeout_ms_;
};

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

/// Splits an absolute http(s) URL; throws std::invalid_argument otherwise.
SplitUrl split_url(std::string_view url);

}  // namespace storyreel
