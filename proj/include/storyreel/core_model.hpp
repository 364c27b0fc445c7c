#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "storyreel/money.hpp"

namespace storyreel {

class EmptyPrompt : public std::invalid_argument {
public:
    EmptyPrompt() : std::invalid_argument("prompt text is empty") {}
};

enum class TopicClass { Vehicle, Concert, AssociationFootball, Animal, Food };
enum class LengthClass { Short, Medium, Long };
enum class FailureReason { NetworkInstability, CharacterConfusion, InfiniteLoop };
enum class TerminalState { Completed, AbortedNetwork, AbortedConfusion, AbortedLoopCap };

inline constexpr TopicClass kAllTopicClasses[] = {TopicClass::Vehicle, TopicClass::Concert,
                                                 TopicClass::AssociationFootball, TopicClass::Animal,
                                                 TopicClass::Food};
inline constexpr TerminalState kAllTerminalStates[] = {TerminalState::Completed, TerminalState::AbortedNetwork,
                                                      TerminalState::AbortedConfusion,
                                                      TerminalState::AbortedLoopCap};

std::string_view to_string(TopicClass topic);
std::string_view to_string(LengthClass length);
std::string_view to_string(FailureReason reason);
std::string_view to_string(TerminalState state);

/// Parsers for the names above; throw std::invalid_argument on unknown input.
TopicClass parse_topic_class(std::string_view text);
LengthClass parse_length_class(std::string_view text);
FailureReason parse_failure_reason(std::string_view text);
TerminalState parse_terminal_state(std::string_view text);

/// User-supplied prompt. Construction trims surrounding whitespace and rejects
/// blank text, so every instance holds nonempty text.
class UserPrompt {
public:
    explicit UserPrompt(std::string_view text, std::optional<TopicClass> topic = std::nullopt);

    const std::string& text() const { return text_; }
    std::optional<TopicClass> topic_class() const { return topic_; }

    bool operator==(const UserPrompt&) const = default;

private:
    std::string text_;
    std::optional<TopicClass> topic_;
};

struct ModerationFlagged {
    int scene = 0;
    bool operator==(const ModerationFlagged&) const = default;
};

struct RepetitiveVisuals {
    int first = 0;
    int second = 0;
    bool operator==(const RepetitiveVisuals&) const = default;
};

using InappropriateFlag = std::variant<ModerationFlagged, RepetitiveVisuals>;

struct Appropriate {
    bool operator==(const Appropriate&) const = default;
};

struct Inappropriate {
    std::vector<InappropriateFlag> flags;
    bool operator==(const Inappropriate&) const = default;
};

struct Invalid {
    FailureReason reason = FailureReason::NetworkInstability;
    bool operator==(const Invalid&) const = default;
};

using Outcome = std::variant<Appropriate, Inappropriate, Invalid>;

bool is_invalid(const Outcome& outcome);

/// Compact text form used in reports and transcripts:
///   "Appropriate", "Inappropriate[moderation:2 repetitive:1-3]", "Invalid[InfiniteLoop]".
std::string outcome_to_string(const Outcome& outcome);
Outcome parse_outcome(std::string_view text);

/// Top-level category name ("Appropriate", "Inappropriate", "Invalid").
std::string_view outcome_category(const Outcome& outcome);

/// Per-run accounting. Times are integer milliseconds so sums are exact.
struct RunMetrics {
    std::uint64_t total_loops = 0;
    std::uint64_t total_token_length = 0;
    std::int64_t communicate_time_ms = 0;
    std::int64_t total_time_ms = 0;
    Usd cost{};

    double communicate_time_s() const { return static_cast<double>(communicate_time_ms) / 1000.0; }
    double total_time_s() const { return static_cast<double>(total_time_ms) / 1000.0; }

    /// All fields non-negative and communicate_time <= total_time.
    bool valid() const;

    bool operator==(const RunMetrics&) const = default;
};

struct LengthThresholds {
    int short_max = 5;
    int long_min = 11;
};

struct RunRecord {
    std::string run_id;
    UserPrompt prompt;
    LengthClass length_class = LengthClass::Short;
    std::string model_id;
    RunMetrics metrics;
    Outcome outcome;
    std::string transcript_digest;
};

/// Counts words: whitespace-separated tokens (ASCII and Unicode spaces), where
/// a token made only of hyphens/dashes joins its neighbours into one word.
int count_words(std::string_view text);

LengthClass classify_prompt_length(std::string_view text, LengthThresholds thresholds = {});

Outcome classify_outcome(TerminalState terminal_state, std::span<const InappropriateFlag> flags);

RunMetrics merge_metrics(std::span<const RunMetrics> parts);

/// Strips leading/trailing ASCII and Unicode whitespace.
std::string trim(std::string_view text);

}  // namespace storyreel
