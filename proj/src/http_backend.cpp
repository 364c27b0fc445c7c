#include "storyreel/http_backend.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>

#include "storyreel/text_util.hpp"

namespace storyreel {

namespace {

using json = nlohmann::json;

struct HttpReply {
    int status = 0;
    std::string body;
    std::string content_type;
    std::int64_t latency_ms = 0;
};

std::string api_key(const EndpointConfig& endpoint) {
    if (endpoint.api_key_env.empty()) {
        return {};
    }
    const char* value = std::getenv(endpoint.api_key_env.c_str());
    if (value == nullptr || *value == '\0') {
        throw AuthError("environment variable " + endpoint.api_key_env + " is not set");
    }
    return value;
}

/// POSTs a JSON body and classifies failures. 2xx replies are returned;
/// everything else throws the matching BackendError.
HttpReply post_json(const EndpointConfig& endpoint, const json& body, std::int64_t timeout_ms) {
    const SplitUrl url = split_url(endpoint.url);
    const std::string key = api_key(endpoint);

    httplib::Client client(url.origin);
    const auto timeout = std::chrono::milliseconds(timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers headers;
    if (!key.empty()) {
        headers.emplace("Authorization", "Bearer " + key);
    }

    const auto start = std::chrono::steady_clock::now();
    auto result = client.Post(url.path, headers, body.dump(), "application/json");
    const std::int64_t latency =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();

    if (!result) {
        throw TransportError("request to " + url.origin + url.path + " failed: " + httplib::to_string(result.error()),
                             latency);
    }
    HttpReply reply{result->status, result->body, result->get_header_value("Content-Type"), latency};
    const int status = reply.status;
    const std::string where = "HTTP " + std::to_string(status) + " from " + url.origin + url.path;
    if (status == 401 || status == 403) {
        throw AuthError(where, latency);
    }
    if (status == 408 || status == 429 || status >= 500) {
        throw TransportError(where, latency);
    }
    if (status < 200 || status >= 300) {
        const std::string lower = text_util::to_lower_ascii(reply.body);
        if (lower.find("content_policy") != std::string::npos || lower.find("moderation") != std::string::npos) {
            throw ModerationRejection(where, latency);
        }
        throw MalformedResponse(where, latency);
    }
    return reply;
}

json parse_body(const HttpReply& reply) {
    try {
        return json::parse(reply.body);
    } catch (const json::exception&) {
        throw MalformedResponse("response body is not JSON", reply.latency_ms);
    }
}

std::string image_extension(std::string_view bytes) {
    if (bytes.starts_with("\x89PNG")) {
        return "png";
    }
    if (bytes.starts_with("\xFF\xD8")) {
        return "jpg";
    }
    if (bytes.starts_with("RIFF") && bytes.size() > 12 && bytes.substr(8, 4) == "WEBP") {
        return "webp";
    }
    return "bin";
}

/// Audio endpoints may answer with raw WAV or with {"audio_base64": ...}.
std::string audio_bytes(const HttpReply& reply) {
    if (reply.content_type.find("json") != std::string::npos) {
        const json body = parse_body(reply);
        if (!body.contains("audio_base64") || !body["audio_base64"].is_string()) {
            throw MalformedResponse("audio response lacks audio_base64", reply.latency_ms);
        }
        return base64_decode(body["audio_base64"].get<std::string>());
    }
    return reply.body;
}

}  // namespace

SplitUrl split_url(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) {
        throw std::invalid_argument("endpoint URL must be absolute: " + std::string(url));
    }
    const std::string_view scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw std::invalid_argument("endpoint URL must use http or https: " + std::string(url));
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string_view::npos) {
        return {std::string(url), "/"};
    }
    return {std::string(url.substr(0, path_start)), std::string(url.substr(path_start))};
}

ChatResponse HttpChatBackend::chat_complete(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& turn : request.messages) {
        messages.push_back({{"role", turn.role}, {"content", turn.content}});
    }
    const std::string model = request.model_id.empty() ? endpoint_.model : request.model_id;
    json body = {{"model", model}, {"messages", messages}, {"temperature", request.temperature}, {"stream", false}};
    const HttpReply reply = post_json(endpoint_, body, timeout_ms_);
    const json parsed = parse_body(reply);
    try {
        const auto& choice = parsed.at("choices").at(0);
        ChatResponse response;
        response.content = choice.at("message").at("content").get<std::string>();
        const auto& usage = parsed.at("usage");
        response.usage.prompt_tokens = usage.at("prompt_tokens").get<std::uint64_t>();
        response.usage.completion_tokens = usage.at("completion_tokens").get<std::uint64_t>();
        response.latency_ms = reply.latency_ms;
        return response;
    } catch (const json::exception& e) {
        throw MalformedResponse(std::string("chat response missing fields: ") + e.what(), reply.latency_ms);
    }
}

MediaAsset HttpImageBackend::generate_image(std::string_view prompt, const CallTag&) {
    if (text_util::trim(prompt).empty()) {
        throw std::invalid_argument("image prompt must be nonempty");
    }
    json body = {{"model", endpoint_.model}, {"prompt", prompt}, {"n", 1}, {"response_format", "b64_json"}};
    const HttpReply reply = post_json(endpoint_, body, timeout_ms_);
    const json parsed = parse_body(reply);
    try {
        const auto& item = parsed.at("data").at(0);
        std::string bytes = base64_decode(item.at("b64_json").get<std::string>());
        bool flagged = parsed.value("moderation_flagged", false) || item.value("moderation_flagged", false);
        std::string ext = image_extension(bytes);
        return MediaAsset::make(MediaKind::Image, std::move(bytes), std::move(ext), 0, flagged, reply.latency_ms);
    } catch (const json::exception& e) {
        throw MalformedResponse(std::string("image response missing fields: ") + e.what(), reply.latency_ms);
    }
}

MediaAsset HttpSpeechBackend::synthesize_speech(std::string_view text, const CallTag&) {
    if (text_util::trim(text).empty()) {
        throw std::invalid_argument("narration text must be nonempty");
    }
    json body = {{"model", endpoint_.model}, {"input", text}, {"response_format", "wav"}};
    if (!endpoint_.voice.empty()) {
        body["voice"] = endpoint_.voice;
    }
    const HttpReply reply = post_json(endpoint_, body, timeout_ms_);
    std::string bytes = audio_bytes(reply);
    const std::int64_t duration = wav_duration_ms(bytes);
    if (duration <= 0) {
        throw MalformedResponse("speech audio has zero duration", reply.latency_ms);
    }
    return MediaAsset::make(MediaKind::Narration, std::move(bytes), "wav", duration, false, reply.latency_ms);
}

MediaAsset HttpMusicBackend::compose_music(const MusicPrompt& prompt, std::int64_t target_duration_ms,
                                           const CallTag&) {
    if (target_duration_ms <= 0) {
        throw std::invalid_argument("music target duration must be positive");
    }
    json body = {{"model", endpoint_.model},
                 {"prompt", prompt.description},
                 {"mood", prompt.mood},
                 {"duration_s", static_cast<double>(target_duration_ms) / 1000.0}};
    const HttpReply reply = post_json(endpoint_, body, timeout_ms_);
    std::string bytes = audio_bytes(reply);
    const std::int64_t duration = wav_duration_ms(bytes);
    return MediaAsset::make(MediaKind::Music, std::move(bytes), "wav", duration, false, reply.latency_ms);
}

}  // namespace storyreel
