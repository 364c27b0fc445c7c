#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "storyreel/backends.hpp"

namespace storyreel {

/// Failure injection and scripted behaviour for the deterministic mock.
struct MockScript {
    std::uint64_t seed = 0;
    /// Per-attempt probability that any backend call fails with TransportError.
    double p_transport_error = 0.0;
    /// Per-reply probability that a drafting agent answers with a refusal.
    double p_refusal = 0.0;
    /// Per-image probability that the image service flags the prompt.
    double p_moderation = 0.0;
    /// Per-draft probability that the painter repeats a prompt.
    double p_repetitive = 0.0;
    /// Per-review probability of an unscripted revision request.
    double p_revise = 0.0;
    bool never_approve = false;
    /// Scripted verdicts per artifact ("scenes", "images", "music"), one entry
    /// per round: "APPROVE" or "REVISE". Rounds past the script fall back to p_revise.
    std::map<std::string, std::vector<std::string>> verdicts;
    /// Image prompts containing any of these words (case-insensitive) are flagged.
    std::vector<std::string> moderation_keywords;
};

/// Seeded mock for all four backends. Stateless across calls: every reply is a
/// pure function of (seed, request, CallTag), so concurrent runs cannot perturb
/// each other and reruns are byte-identical.
class MockBackend final : public ChatBackend, public ImageBackend, public SpeechBackend, public MusicBackend {
public:
    explicit MockBackend(MockScript script) : script_(std::move(script)) {}

    ChatResponse chat_complete(const ChatRequest& request) override;
    MediaAsset generate_image(std::string_view prompt, const CallTag& tag) override;
    MediaAsset synthesize_speech(std::string_view text, const CallTag& tag) override;
    MediaAsset compose_music(const MusicPrompt& prompt, std::int64_t target_duration_ms,
                             const CallTag& tag) override;

    const MockScript& script() const { return script_; }

    /// Uniform draw in [0, 1) for a call and purpose. Exposed for tests.
    double draw(const CallTag& tag, std::string_view purpose) const;

    /// Speech pacing used by the mock: 2.5 words per second.
    static std::int64_t narration_duration_ms(std::string_view text);

private:
    std::string reply_for(const ChatRequest& request) const;
    void maybe_fail(const CallTag& tag) const;

    MockScript script_;
};

/// Builds a BackendSet whose four backends share one MockBackend and whose
/// runs use a simulated clock.
BackendSet make_mock_backends(MockScript script, PricingTable pricing, RetryPolicy retry);

/// Per-attempt transport error probability that yields the given run-level
/// failure probability for a run making `calls` backend calls with `attempts` tries each.
double transport_rate_for_run_failure(double run_failure, int calls, int attempts);

}  // namespace storyreel
