#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "storyreel/chat_tower.hpp"
#include "storyreel/config.hpp"
#include "storyreel/mock_backend.hpp"

namespace storyreel::testing {

inline std::filesystem::path data_dir() { return STORYREEL_DATA_DIR; }

inline PricingTable test_pricing(const std::string& model = "mock-chat") {
    PricingTable pricing;
    pricing.models[model] = ModelRates{Usd::parse("1.0"), Usd::parse("2.0")};
    pricing.media[MediaKind::Image] = Usd::parse("0.04");
    pricing.media[MediaKind::Narration] = Usd::parse("0.015");
    pricing.media[MediaKind::Music] = Usd::parse("0.02");
    return pricing;
}

inline const RolePrompts& bundled_roles(const PipelineConfig& config = {}) {
    static const RolePrompts roles =
        build_role_prompts(load_role_specs(data_dir() / "roles"), project_context(config));
    return roles;
}

inline BackendSet mock_set(MockScript script) {
    return make_mock_backends(std::move(script), test_pricing(), RetryPolicy{});
}

inline MockScript seeded(std::uint64_t seed) {
    MockScript script;
    script.seed = seed;
    return script;
}

inline PipelineResult run_mock(const std::string& prompt, MockScript script, PipelineConfig config = {},
                               const std::string& run_id = "run-0001") {
    BackendSet backends = mock_set(std::move(script));
    return run_pipeline(UserPrompt(prompt), config, bundled_roles(config), backends, run_id);
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device device;
        path_ = std::filesystem::temp_directory_path() /
                ("storyreel-test-" + std::to_string(device()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

inline void spit(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out << bytes;
}

/// Mock-mode config document pointing at the bundled role specs.
inline std::string mock_config_json(const std::string& mock_section = "{}", const std::string& extra = "") {
    return std::string("{\n") + "  \"mode\": \"mock\",\n" + "  \"role_spec_dir\": \"" +
           (data_dir() / "roles").string() + "\",\n" +
           "  \"backends\": {\"chat\": {\"url\": \"http://127.0.0.1:9/v1/chat\", \"model\": \"mock-chat\"}},\n" +
           "  \"pricing\": {\"models\": {\"mock-chat\": {\"prompt_per_million\": \"1.0\", "
           "\"completion_per_million\": \"2.0\"}},\n" +
           "              \"media\": {\"image\": \"0.04\", \"narration\": \"0.015\", \"music\": \"0.02\"}},\n" +
           extra + "  \"mock\": " + mock_section + "\n}\n";
}

}  // namespace storyreel::testing
