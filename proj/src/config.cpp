#include "storyreel/config.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace storyreel {

namespace {

using json = nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

template <typename T>
void read_opt(const json& object, const char* key, T& target, const std::string& where) {
    if (!object.contains(key)) {
        return;
    }
    try {
        target = object.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

const json& section(const json& root, const char* key) {
    static const json empty = json::object();
    if (!root.contains(key)) {
        return empty;
    }
    const json& value = root.at(key);
    if (!value.is_object()) {
        throw ConfigError(std::string(key) + " must be an object");
    }
    return value;
}

Usd parse_money(const json& value, const std::string& where) {
    try {
        if (value.is_string()) {
            return Usd::parse(value.get<std::string>());
        }
        if (value.is_number()) {
            return Usd::parse(value.dump());
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
    throw ConfigError(where + " must be a decimal string or number");
}

EndpointConfig parse_endpoint(const json& backends, const char* name) {
    EndpointConfig endpoint;
    const std::string where = std::string("backends.") + name;
    if (!backends.contains(name)) {
        return endpoint;
    }
    const json& value = backends.at(name);
    if (!value.is_object()) {
        throw ConfigError(where + " must be an object");
    }
    read_opt(value, "url", endpoint.url, where);
    read_opt(value, "model", endpoint.model, where);
    read_opt(value, "api_key_env", endpoint.api_key_env, where);
    read_opt(value, "voice", endpoint.voice, where);
    if (value.contains("api_key")) {
        throw ConfigError(where + ".api_key is not allowed; name an environment variable in api_key_env");
    }
    return endpoint;
}

MediaKind media_key(const std::string& key) {
    try {
        return parse_media_kind(key);
    } catch (const std::invalid_argument&) {
        throw ConfigError("pricing.media has unknown kind \"" + key + "\"");
    }
}

}  // namespace

AppConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) {
        throw ConfigError("config must be a JSON object");
    }

    AppConfig config;
    std::string mode = "live";
    read_opt(root, "mode", mode, "config");
    if (mode != "live" && mode != "mock") {
        throw ConfigError("mode must be \"live\" or \"mock\"");
    }
    config.mock_mode = mode == "mock";

    const json& backends = section(root, "backends");
    config.endpoints.chat = parse_endpoint(backends, "chat");
    config.endpoints.image = parse_endpoint(backends, "image");
    config.endpoints.speech = parse_endpoint(backends, "speech");
    config.endpoints.music = parse_endpoint(backends, "music");
    read_opt(backends, "timeout_ms", config.endpoints.timeout_ms, "backends");
    if (config.endpoints.chat.model.empty()) {
        throw ConfigError("backends.chat.model is required");
    }

    PipelineConfig& p = config.pipeline;
    p.model_id = config.endpoints.chat.model;
    const json& pipeline = section(root, "pipeline");
    read_opt(pipeline, "scene_count", p.scene_count, "pipeline");
    read_opt(pipeline, "approval_max_rounds", p.approval_max_rounds, "pipeline");
    read_opt(pipeline, "exchange_cap", p.exchange_cap, "pipeline");
    read_opt(pipeline, "reask_max", p.reask_max, "pipeline");
    read_opt(pipeline, "temperature", p.temperature, "pipeline");
    read_opt(pipeline, "refusal_patterns", p.refusal_patterns, "pipeline");
    read_opt(pipeline, "repetitive_threshold", p.repetitive_threshold, "pipeline");
    read_opt(pipeline, "fade_out_ms", p.fade_out_ms, "pipeline");
    read_opt(pipeline, "lead_padding_ms", p.padding.lead_ms, "pipeline");
    read_opt(pipeline, "tail_padding_ms", p.padding.tail_ms, "pipeline");
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    const json& pricing = section(root, "pricing");
    for (const auto& [model, rates] : section(pricing, "models").items()) {
        const std::string where = "pricing.models." + model;
        if (!rates.is_object() || !rates.contains("prompt_per_million") || !rates.contains("completion_per_million")) {
            throw ConfigError(where + " needs prompt_per_million and completion_per_million");
        }
        ModelRates r{parse_money(rates.at("prompt_per_million"), where + ".prompt_per_million"),
                     parse_money(rates.at("completion_per_million"), where + ".completion_per_million")};
        if (r.prompt_per_million < Usd{} || r.completion_per_million < Usd{}) {
            throw ConfigError(where + " rates must be non-negative");
        }
        config.pricing.models.emplace(model, r);
    }
    for (const auto& [kind, fee] : section(pricing, "media").items()) {
        const Usd amount = parse_money(fee, "pricing.media." + kind);
        if (amount < Usd{}) {
            throw ConfigError("pricing.media." + kind + " must be non-negative");
        }
        config.pricing.media[media_key(kind)] = amount;
    }

    const json& retry = section(root, "retry");
    read_opt(retry, "max_attempts", config.retry.max_attempts, "retry");
    read_opt(retry, "base_delay_ms", config.retry.base_delay_ms, "retry");
    read_opt(retry, "backoff_factor", config.retry.backoff_factor, "retry");
    read_opt(retry, "per_attempt_timeout_ms", config.retry.per_attempt_timeout_ms, "retry");
    if (!config.retry.valid()) {
        throw ConfigError("retry policy is invalid");
    }

    const json& mock = section(root, "mock");
    MockScript& s = config.mock.script;
    read_opt(mock, "p_transport_error", s.p_transport_error, "mock");
    read_opt(mock, "p_refusal", s.p_refusal, "mock");
    read_opt(mock, "p_moderation", s.p_moderation, "mock");
    read_opt(mock, "p_repetitive", s.p_repetitive, "mock");
    read_opt(mock, "p_revise", s.p_revise, "mock");
    read_opt(mock, "never_approve", s.never_approve, "mock");
    read_opt(mock, "verdicts", s.verdicts, "mock");
    read_opt(mock, "moderation_keywords", s.moderation_keywords, "mock");
    if (mock.contains("run_failure_probability") && !mock.at("run_failure_probability").is_null()) {
        double value = 0.0;
        read_opt(mock, "run_failure_probability", value, "mock");
        config.mock.run_failure_probability = value;
    }
    for (double prob : {s.p_transport_error, s.p_refusal, s.p_moderation, s.p_repetitive, s.p_revise,
                        config.mock.run_failure_probability.value_or(0.0)}) {
        if (prob < 0.0 || prob > 1.0) {
            throw ConfigError("mock probabilities must lie in [0, 1]");
        }
    }

    if (root.contains("encoder")) {
        const json& encoder = section(root, "encoder");
        read_opt(encoder, "name", config.encoder.name, "encoder");
        read_opt(encoder, "tokens", config.encoder.tokens, "encoder");
        if (config.encoder.tokens.empty()) {
            throw ConfigError("encoder.tokens must be nonempty");
        }
    }

    std::string roles_dir = "roles";
    read_opt(root, "role_spec_dir", roles_dir, "config");
    config.role_spec_dir = std::filesystem::path(roles_dir).is_absolute() ? std::filesystem::path(roles_dir)
                                                                          : base_dir / roles_dir;

    const json& thresholds = section(root, "length_thresholds");
    read_opt(thresholds, "short_max", config.thresholds.short_max, "length_thresholds");
    read_opt(thresholds, "long_min", config.thresholds.long_min, "length_thresholds");
    if (config.thresholds.short_max < 1 || config.thresholds.short_max >= config.thresholds.long_min) {
        throw ConfigError("length_thresholds need 1 <= short_max < long_min");
    }
    return config;
}

AppConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw ConfigError("config file not found: " + path.string());
    }
    AppConfig config = parse_config(read_file(path), path.parent_path());
    config.source = path;
    return config;
}

RolePrompts load_role_prompts(const AppConfig& config) {
    return build_role_prompts(load_role_specs(config.role_spec_dir), project_context(config.pipeline));
}

double effective_transport_rate(const AppConfig& config) {
    if (!config.mock.run_failure_probability) {
        return config.mock.script.p_transport_error;
    }
    // Happy-path backend calls: nine chat exchanges plus image and speech per scene plus music.
    const int calls = PipelineConfig::kHappyPathExchanges + 2 * config.pipeline.scene_count + 1;
    return transport_rate_for_run_failure(*config.mock.run_failure_probability, calls, config.retry.max_attempts);
}

BackendSet make_backends(const AppConfig& config, bool mock, std::uint64_t seed) {
    if (mock) {
        MockScript script = config.mock.script;
        script.seed = seed;
        script.p_transport_error = effective_transport_rate(config);
        return make_mock_backends(std::move(script), config.pricing, config.retry);
    }
    const auto& e = config.endpoints;
    for (const auto* endpoint : {&e.chat, &e.image, &e.speech, &e.music}) {
        if (endpoint->url.empty()) {
            throw ConfigError("live mode needs a url for every backend");
        }
    }
    const std::int64_t timeout = std::min(e.timeout_ms, config.retry.per_attempt_timeout_ms);
    BackendSet set;
    set.chat = std::make_shared<HttpChatBackend>(e.chat, timeout);
    set.image = std::make_shared<HttpImageBackend>(e.image, timeout);
    set.speech = std::make_shared<HttpSpeechBackend>(e.speech, timeout);
    set.music = std::make_shared<HttpMusicBackend>(e.music, timeout);
    set.pricing = config.pricing;
    set.retry = config.retry;
    return set;
}

std::vector<CheckItem> validate_config(const std::filesystem::path& path, bool mock) {
    std::vector<CheckItem> items;
    AppConfig config;
    try {
        config = load_config(path);
        items.push_back({"schema", true, path.string()});
    } catch (const ConfigError& e) {
        items.push_back({"schema", false, e.what()});
        return items;
    }
    mock = mock || config.mock_mode;

    try {
        load_role_prompts(config);
        items.push_back({"role specs", true, config.role_spec_dir.string()});
    } catch (const RoleSpecError& e) {
        items.push_back({"role specs", false, e.what()});
    } catch (const std::exception& e) {
        items.push_back({"role specs", false, e.what()});
    }

    std::vector<std::string> missing;
    if (!config.pricing.covers_model(config.pipeline.model_id)) {
        missing.push_back("chat model \"" + config.pipeline.model_id + "\"");
    }
    for (MediaKind kind : {MediaKind::Image, MediaKind::Narration, MediaKind::Music}) {
        if (!config.pricing.media.contains(kind)) {
            missing.push_back("media kind \"" + std::string(to_string(kind)) + "\"");
        }
    }
    if (missing.empty()) {
        items.push_back({"pricing", true, "covers " + config.pipeline.model_id + " and all media kinds"});
    } else {
        std::string detail = "no pricing for ";
        for (std::size_t i = 0; i < missing.size(); ++i) {
            detail += (i ? ", " : "") + missing[i];
        }
        items.push_back({"pricing", false, detail});
    }

    const auto unknown = unknown_placeholders(config.encoder.tokens);
    if (unknown.empty()) {
        items.push_back({"encoder template", true, config.encoder.name});
    } else {
        std::string detail = "unknown placeholders:";
        for (const auto& name : unknown) {
            detail += " " + name;
        }
        items.push_back({"encoder template", false, detail});
    }

    if (mock) {
        items.push_back({"key environment variables", true, "skipped in mock mode"});
    } else {
        std::vector<std::string> unset;
        std::vector<std::string> names;
        const auto& e = config.endpoints;
        for (const auto* endpoint : {&e.chat, &e.image, &e.speech, &e.music}) {
            const std::string& name = endpoint->api_key_env;
            if (name.empty() || std::find(names.begin(), names.end(), name) != names.end()) {
                continue;
            }
            names.push_back(name);
            const char* value = std::getenv(name.c_str());
            if (value == nullptr || *value == '\0') {
                unset.push_back(name);
            }
        }
        if (unset.empty()) {
            std::string detail = names.empty() ? "none configured" : "set:";
            for (const auto& name : names) {
                detail += " " + name;
            }
            items.push_back({"key environment variables", true, detail});
        } else {
            std::string detail = "not set:";
            for (const auto& name : unset) {
                detail += " " + name;
            }
            items.push_back({"key environment variables", false, detail});
        }
    }
    return items;
}

std::vector<std::string> configured_secret_values(const AppConfig& config) {
    std::vector<std::string> values;
    const auto& e = config.endpoints;
    for (const auto* endpoint : {&e.chat, &e.image, &e.speech, &e.music}) {
        if (endpoint->api_key_env.empty()) {
            continue;
        }
        const char* value = std::getenv(endpoint->api_key_env.c_str());
        if (value != nullptr && *value != '\0' &&
            std::find(values.begin(), values.end(), value) == values.end()) {
            values.emplace_back(value);
        }
    }
    return values;
}

}  // namespace storyreel
