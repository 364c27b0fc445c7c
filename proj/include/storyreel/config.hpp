#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "storyreel/assembly.hpp"
#include "storyreel/chat_tower.hpp"
#include "storyreel/http_backend.hpp"
#include "storyreel/mock_backend.hpp"

namespace storyreel {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Endpoints {
    EndpointConfig chat;
    EndpointConfig image;
    EndpointConfig speech;
    EndpointConfig music;
    std::int64_t timeout_ms = 60000;
};

/// Mock section: MockScript fields plus an optional target run-level failure
/// probability from which the per-attempt transport error rate is derived.
struct MockSettings {
    MockScript script;
    std::optional<double> run_failure_probability;
};

struct AppConfig {
    std::filesystem::path source;
    bool mock_mode = false;
    PipelineConfig pipeline;
    Endpoints endpoints;
    PricingTable pricing;
    RetryPolicy retry;
    MockSettings mock;
    EncoderTemplate encoder = default_encoder_template();
    std::filesystem::path role_spec_dir;
    LengthThresholds thresholds;
};

/// Parses a config document. Relative paths resolve against `base_dir`.
AppConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);
AppConfig load_config(const std::filesystem::path& path);

RolePrompts load_role_prompts(const AppConfig& config);

/// Mock backends seeded with `seed`, or live HTTP backends.
BackendSet make_backends(const AppConfig& config, bool mock, std::uint64_t seed);

/// Per-attempt transport error rate the mock uses for this config.
double effective_transport_rate(const AppConfig& config);

struct CheckItem {
    std::string name;
    bool ok = false;
    std::string detail;
};

/// The validate checklist: schema, role specs, pricing coverage, encoder
/// template placeholders and key environment variables (names only; skipped
/// in mock mode).
std::vector<CheckItem> validate_config(const std::filesystem::path& path, bool mock);

/// Current values of the key environment variables the config names. Used
/// to scan outputs for leaks.
std::vector<std::string> configured_secret_values(const AppConfig& config);

}  // namespace storyreel
