#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "storyreel/money.hpp"
#include "storyreel/role_engine.hpp"

namespace storyreel {

// ---------------------------------------------------------------------------
// Errors

/// Base for every backend failure. `latency_ms` is the time the failed attempt
/// consumed, so callers can still account wall time.
class BackendError : public std::runtime_error {
public:
    BackendError(const std::string& what, std::int64_t latency_ms = 0)
        : std::runtime_error(what), latency_ms_(latency_ms) {}
    std::int64_t latency_ms() const { return latency_ms_; }

private:
    std::int64_t latency_ms_;
};

/// Network failure, timeout, 408/429 or 5xx. The only retryable class.
class TransportError : public BackendError {
public:
    using BackendError::BackendError;
};

class AuthError : public BackendError {
public:
    using BackendError::BackendError;
};

class MalformedResponse : public BackendError {
public:
    using BackendError::BackendError;
};

/// The media service refused the prompt on content-policy grounds.
class ModerationRejection : public BackendError {
public:
    using BackendError::BackendError;
};

class UnknownModel : public std::invalid_argument {
public:
    explicit UnknownModel(const std::string& model)
        : std::invalid_argument("no pricing for model \"" + model + "\""), model_(model) {}
    const std::string& model() const { return model_; }

private:
    std::string model_;
};

/// Retry budget exhausted on TransportError.
class NetworkInstability : public std::runtime_error {
public:
    NetworkInstability(const std::string& last_error, int attempts, std::vector<std::int64_t> failed_latencies_ms)
        : std::runtime_error("network instability after " + std::to_string(attempts) +
                             " attempts: " + last_error),
          last_error_(last_error),
          attempts_(attempts),
          failed_latencies_ms_(std::move(failed_latencies_ms)) {}

    const std::string& last_error() const { return last_error_; }
    int attempts() const { return attempts_; }
    const std::vector<std::int64_t>& failed_latencies_ms() const { return failed_latencies_ms_; }

private:
    std::string last_error_;
    int attempts_;
    std::vector<std::int64_t> failed_latencies_ms_;
};

// ---------------------------------------------------------------------------
// Requests and responses

struct Usage {
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    bool operator==(const Usage&) const = default;
};

/// Identifies a backend call for logging and for deterministic mocks. Live
/// backends ignore it; it is never sent over the wire.
struct CallTag {
    std::string run_id;
    std::string stage;
    int round = 0;
    int reask = 0;
    int call_seq = 0;
    int attempt = 1;
    int expected_items = 0;
};

/// One chat message. `author` records provenance: "tower" for orchestrator
/// text, "user" for the user's own prompt, or a role key for agent-authored text.
struct ChatTurn {
    std::string role;
    std::string author;
    std::string content;
    bool operator==(const ChatTurn&) const = default;
};

struct ChatRequest {
    std::string model_id;
    std::vector<ChatTurn> messages;
    double temperature = 0.7;
    CallTag tag;
};

struct ChatResponse {
    std::string content;
    Usage usage;
    std::int64_t latency_ms = 0;
};

enum class MediaKind { Image, Narration, Music };

std::string_view to_string(MediaKind kind);
MediaKind parse_media_kind(std::string_view text);

struct MediaAsset {
    MediaKind kind = MediaKind::Image;
    std::string bytes;
    std::int64_t duration_ms = 0;
    bool moderation_flagged = false;
    std::string digest;
    std::string extension;
    /// Time the producing call took; not part of the asset's identity.
    std::int64_t latency_ms = 0;

    static MediaAsset make(MediaKind kind, std::string bytes, std::string extension, std::int64_t duration_ms,
                           bool moderation_flagged, std::int64_t latency_ms);
};

// ---------------------------------------------------------------------------
// Backend interfaces

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse chat_complete(const ChatRequest& request) = 0;
};

class ImageBackend {
public:
    virtual ~ImageBackend() = default;
    virtual MediaAsset generate_image(std::string_view prompt, const CallTag& tag) = 0;
};

class SpeechBackend {
public:
    virtual ~SpeechBackend() = default;
    virtual MediaAsset synthesize_speech(std::string_view text, const CallTag& tag) = 0;
};

class MusicBackend {
public:
    virtual ~MusicBackend() = default;
    virtual MediaAsset compose_music(const MusicPrompt& prompt, std::int64_t target_duration_ms,
                                     const CallTag& tag) = 0;
};

// ---------------------------------------------------------------------------
// Time

/// Per-run clock. Live runs use real time; mock runs use a simulated clock so
/// total_time is reproducible and retry delays cost nothing.
class RunClock {
public:
    virtual ~RunClock() = default;
    virtual std::int64_t elapsed_ms() const = 0;
    virtual void sleep_ms(std::int64_t ms) = 0;
    /// Called after every backend call with the latency it reported.
    virtual void account_latency_ms(std::int64_t ms) = 0;
};

class SteadyRunClock final : public RunClock {
public:
    SteadyRunClock() : start_(std::chrono::steady_clock::now()) {}
    std::int64_t elapsed_ms() const override;
    void sleep_ms(std::int64_t ms) override;
    void account_latency_ms(std::int64_t) override {}

private:
    std::chrono::steady_clock::time_point start_;
};

class SimulatedRunClock final : public RunClock {
public:
    std::int64_t elapsed_ms() const override { return now_ms_; }
    void sleep_ms(std::int64_t ms) override {
        now_ms_ += ms;
        slept_.push_back(ms);
    }
    void account_latency_ms(std::int64_t ms) override { now_ms_ += ms; }
    const std::vector<std::int64_t>& sleeps() const { return slept_; }

private:
    std::int64_t now_ms_ = 0;
    std::vector<std::int64_t> slept_;
};

/// RFC 3339 UTC timestamp with millisecond precision.
std::string rfc3339_now();

// ---------------------------------------------------------------------------
// Retry

struct RetryPolicy {
    int max_attempts = 3;
    std::int64_t base_delay_ms = 1000;
    double backoff_factor = 2.0;
    std::int64_t per_attempt_timeout_ms = 60000;

    /// Delay scheduled after the given failed attempt (1-based):
    /// base_delay * factor^(attempt-1).
    std::int64_t delay_after_attempt(int failed_attempt) const;
    bool valid() const;
};

template <typename T>
struct Retried {
    T value;
    int attempts = 1;
    std::vector<std::int64_t> failed_latencies_ms;
};

/// Calls `call(attempt)` until it succeeds, retrying TransportError with
/// exponential backoff. Non-retryable errors propagate unchanged; exhaustion
/// throws NetworkInstability. Failed-attempt latencies are accounted on the clock.
template <typename Call>
auto with_retry(Call&& call, const RetryPolicy& policy, RunClock& clock)
    -> Retried<std::invoke_result_t<Call&, int>> {
    if (!policy.valid()) {
        throw std::invalid_argument("invalid retry policy");
    }
    std::vector<std::int64_t> failed;
    std::string last_error;
    for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
        try {
            auto value = call(attempt);
            return {std::move(value), attempt, std::move(failed)};
        } catch (const TransportError& e) {
            failed.push_back(e.latency_ms());
            clock.account_latency_ms(e.latency_ms());
            last_error = e.what();
            if (attempt < policy.max_attempts) {
                clock.sleep_ms(policy.delay_after_attempt(attempt));
            }
        }
    }
    throw NetworkInstability(last_error, policy.max_attempts, std::move(failed));
}

// ---------------------------------------------------------------------------
// Pricing and cost ledger

struct ModelRates {
    Usd prompt_per_million{};
    Usd completion_per_million{};
};

struct PricingTable {
    std::map<std::string, ModelRates, std::less<>> models;
    std::map<MediaKind, Usd> media;

    bool covers_model(std::string_view model) const { return models.find(model) != models.end(); }
};

/// Chat cost: tokens x rate / 1e6 per direction, exact to the pico-dollar.
Usd cost_of(const Usage& usage, std::string_view model_id, const PricingTable& pricing);
/// Flat per-call media fee.
Usd cost_of(MediaKind kind, const PricingTable& pricing);

enum class CallKind { Chat, Image, Narration, Music };

std::string_view to_string(CallKind kind);
CallKind call_kind_for(MediaKind kind);

struct LedgerEntry {
    std::string run_id;
    CallKind kind = CallKind::Chat;
    Usage usage;
    Usd cost{};
};

/// Append-only, thread-safe cost record shared by concurrent runs.
class CostLedger {
public:
    void append(LedgerEntry entry);
    std::vector<LedgerEntry> entries() const;
    Usd total() const;
    Usd total_for(std::string_view run_id) const;
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::vector<LedgerEntry> entries_;
};

// ---------------------------------------------------------------------------
// Backend set handed to the pipeline

struct BackendSet {
    std::shared_ptr<ChatBackend> chat;
    std::shared_ptr<ImageBackend> image;
    std::shared_ptr<SpeechBackend> speech;
    std::shared_ptr<MusicBackend> music;
    std::shared_ptr<CostLedger> ledger = std::make_shared<CostLedger>();
    PricingTable pricing;
    RetryPolicy retry;
    /// Creates a fresh clock for each run.
    std::function<std::unique_ptr<RunClock>()> make_clock = [] { return std::make_unique<SteadyRunClock>(); };
};

// ---------------------------------------------------------------------------
// Media encoding helpers

/// 8-bit mono PCM WAV of the given duration. The waveform is derived from `seed_text`.
std::string make_wav(std::int64_t duration_ms, std::string_view seed_text, int sample_rate = 2000);

/// Duration of a PCM WAV file in milliseconds; throws MalformedResponse if not WAV.
std::int64_t wav_duration_ms(std::string_view bytes);

/// Small binary PPM image whose colours are derived from `seed_text`.
std::string make_ppm(std::string_view seed_text, int width = 32, int height = 18);

std::string base64_decode(std::string_view text);

}  // namespace storyreel
