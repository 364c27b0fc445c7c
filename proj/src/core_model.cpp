#include "storyreel/core_model.hpp"

#include <array>
#include <charconv>
#include <utility>

#include "storyreel/text_util.hpp"

namespace storyreel {

namespace {

constexpr std::array<std::pair<TopicClass, std::string_view>, 5> kTopicNames{{
    {TopicClass::Vehicle, "Vehicle"},
    {TopicClass::Concert, "Concert"},
    {TopicClass::AssociationFootball, "AssociationFootball"},
    {TopicClass::Animal, "Animal"},
    {TopicClass::Food, "Food"},
}};

constexpr std::array<std::pair<LengthClass, std::string_view>, 3> kLengthNames{{
    {LengthClass::Short, "Short"},
    {LengthClass::Medium, "Medium"},
    {LengthClass::Long, "Long"},
}};

constexpr std::array<std::pair<FailureReason, std::string_view>, 3> kReasonNames{{
    {FailureReason::NetworkInstability, "NetworkInstability"},
    {FailureReason::CharacterConfusion, "CharacterConfusion"},
    {FailureReason::InfiniteLoop, "InfiniteLoop"},
}};

constexpr std::array<std::pair<TerminalState, std::string_view>, 4> kStateNames{{
    {TerminalState::Completed, "Completed"},
    {TerminalState::AbortedNetwork, "AbortedNetwork"},
    {TerminalState::AbortedConfusion, "AbortedConfusion"},
    {TerminalState::AbortedLoopCap, "AbortedLoopCap"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E value) {
    for (const auto& [e, name] : table) {
        if (e == value) {
            return name;
        }
    }
    return "?";
}

template <typename E, std::size_t N>
E value_of(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view text,
           const char* what) {
    for (const auto& [e, name] : table) {
        if (name == text) {
            return e;
        }
    }
    throw std::invalid_argument(std::string("unknown ") + what + ": " + std::string(text));
}

int parse_int(std::string_view text) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw std::invalid_argument("expected integer, got: " + std::string(text));
    }
    return value;
}

}  // namespace

std::string_view to_string(TopicClass topic) { return name_of(kTopicNames, topic); }
std::string_view to_string(LengthClass length) { return name_of(kLengthNames, length); }
std::string_view to_string(FailureReason reason) { return name_of(kReasonNames, reason); }
std::string_view to_string(TerminalState state) { return name_of(kStateNames, state); }

TopicClass parse_topic_class(std::string_view text) { return value_of(kTopicNames, text, "topic class"); }
LengthClass parse_length_class(std::string_view text) { return value_of(kLengthNames, text, "length class"); }
FailureReason parse_failure_reason(std::string_view text) {
    return value_of(kReasonNames, text, "failure reason");
}
TerminalState parse_terminal_state(std::string_view text) {
    return value_of(kStateNames, text, "terminal state");
}

std::string trim(std::string_view text) { return std::string(text_util::trim(text)); }

UserPrompt::UserPrompt(std::string_view text, std::optional<TopicClass> topic)
    : text_(trim(text)), topic_(topic) {
    if (text_.empty()) {
        throw EmptyPrompt{};
    }
}

bool is_invalid(const Outcome& outcome) { return std::holds_alternative<Invalid>(outcome); }

std::string_view outcome_category(const Outcome& outcome) {
    switch (outcome.index()) {
        case 0:
            return "Appropriate";
        case 1:
            return "Inappropriate";
        default:
            return "Invalid";
    }
}

std::string outcome_to_string(const Outcome& outcome) {
    if (std::holds_alternative<Appropriate>(outcome)) {
        return "Appropriate";
    }
    if (const auto* invalid = std::get_if<Invalid>(&outcome)) {
        return "Invalid[" + std::string(to_string(invalid->reason)) + "]";
    }
    const auto& flags = std::get<Inappropriate>(outcome).flags;
    std::string out = "Inappropriate[";
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        if (const auto* m = std::get_if<ModerationFlagged>(&flags[i])) {
            out += "moderation:" + std::to_string(m->scene);
        } else {
            const auto& r = std::get<RepetitiveVisuals>(flags[i]);
            out += "repetitive:" + std::to_string(r.first) + "-" + std::to_string(r.second);
        }
    }
    out += ']';
    return out;
}

Outcome parse_outcome(std::string_view text) {
    if (text == "Appropriate") {
        return Appropriate{};
    }
    auto bracketed = [&](std::string_view prefix) -> std::optional<std::string_view> {
        if (text.size() > prefix.size() + 1 && text.substr(0, prefix.size()) == prefix &&
            text[prefix.size()] == '[' && text.back() == ']') {
            return text.substr(prefix.size() + 1, text.size() - prefix.size() - 2);
        }
        return std::nullopt;
    };
    if (auto body = bracketed("Invalid")) {
        return Invalid{parse_failure_reason(*body)};
    }
    if (auto body = bracketed("Inappropriate")) {
        Inappropriate result;
        for (std::string_view item : text_util::split(*body, ' ')) {
            if (item.empty()) {
                continue;
            }
            if (item.starts_with("moderation:")) {
                result.flags.emplace_back(ModerationFlagged{parse_int(item.substr(11))});
            } else if (item.starts_with("repetitive:")) {
                std::string_view pair = item.substr(11);
                const auto dash = pair.find('-');
                if (dash == std::string_view::npos) {
                    throw std::invalid_argument("malformed repetitive flag: " + std::string(item));
                }
                result.flags.emplace_back(
                    RepetitiveVisuals{parse_int(pair.substr(0, dash)), parse_int(pair.substr(dash + 1))});
            } else {
                throw std::invalid_argument("unknown inappropriate flag: " + std::string(item));
            }
        }
        if (result.flags.empty()) {
            throw std::invalid_argument("Inappropriate outcome without flags");
        }
        return result;
    }
    throw std::invalid_argument("unknown outcome: " + std::string(text));
}

bool RunMetrics::valid() const {
    return communicate_time_ms >= 0 && total_time_ms >= 0 && cost >= Usd{} &&
           communicate_time_ms <= total_time_ms;
}

int count_words(std::string_view text) {
    int words = 0;
    bool have_previous = false;
    bool pending_join = false;
    for (std::string_view token : text_util::split_whitespace(text)) {
        if (text_util::is_all_dashes(token)) {
            pending_join = have_previous;
            continue;
        }
        if (!pending_join) {
            ++words;
        }
        have_previous = true;
        pending_join = false;
    }
    return words;
}

LengthClass classify_prompt_length(std::string_view text, LengthThresholds thresholds) {
    if (thresholds.short_max >= thresholds.long_min) {
        throw std::invalid_argument("short_max must be below long_min");
    }
    const int words = count_words(text);
    if (words == 0) {
        throw EmptyPrompt{};
    }
    if (words <= thresholds.short_max) {
        return LengthClass::Short;
    }
    if (words >= thresholds.long_min) {
        return LengthClass::Long;
    }
    return LengthClass::Medium;
}

Outcome classify_outcome(TerminalState terminal_state, std::span<const InappropriateFlag> flags) {
    switch (terminal_state) {
        case TerminalState::AbortedNetwork:
            return Invalid{FailureReason::NetworkInstability};
        case TerminalState::AbortedConfusion:
            return Invalid{FailureReason::CharacterConfusion};
        case TerminalState::AbortedLoopCap:
            return Invalid{FailureReason::InfiniteLoop};
        case TerminalState::Completed:
            break;
    }
    if (flags.empty()) {
        return Appropriate{};
    }
    return Inappropriate{{flags.begin(), flags.end()}};
}

RunMetrics merge_metrics(std::span<const RunMetrics> parts) {
    RunMetrics total;
    for (const auto& part : parts) {
        total.total_loops += part.total_loops;
        total.total_token_length += part.total_token_length;
        total.communicate_time_ms += part.communicate_time_ms;
        total.total_time_ms += part.total_time_ms;
        total.cost += part.cost;
    }
    return total;
}

}  // namespace storyreel
