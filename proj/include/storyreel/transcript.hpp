#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "storyreel/chat_tower.hpp"
#include "storyreel/redact.hpp"

namespace storyreel {

class TranscriptFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kNormalizedWallTime = "1970-01-01T00:00:00.000Z";

/// JSON Lines: one object per message, then one summary object carrying the
/// terminal state, outcome, metrics and media calls.
std::string transcript_to_jsonl(const Transcript& transcript);
Transcript parse_transcript_jsonl(std::string_view text);

void write_transcript(const std::filesystem::path& path, const Transcript& transcript);
Transcript read_transcript(const std::filesystem::path& path);

/// Replaces every wall_time with kNormalizedWallTime.
Transcript normalize_wall_time(Transcript transcript);

/// Masks secrets in every text field.
Transcript redact_transcript(Transcript transcript, const Redactor& redactor);

/// SHA-256 of the wall-time-normalized JSONL.
std::string transcript_digest(const Transcript& transcript);

/// Loops, token length, communicate time and cost recomputed from the
/// messages and media calls alone. total_time is carried over from the summary.
RunMetrics recompute_metrics(const Transcript& transcript, const PricingTable& pricing);

/// Number of (request, reply) chat pairs.
std::size_t chat_pair_count(const Transcript& transcript);

/// Approved-caption blocks seen by painter and composer requests must be
/// byte-identical. Returns a description of the first violation.
std::optional<std::string> check_caption_sharing(const Transcript& transcript);

/// The user prompt must enter only through the director: the first message is
/// a director request with a user-authored part holding the prompt, and any
/// other occurrence is in director-authored text.
std::optional<std::string> check_prompt_provenance(const Transcript& transcript);

/// Ordering rules: no agent message before its directive, no media call
/// before the third approval, chat pairs within `exchange_cap`.
std::optional<std::string> check_ordering(const Transcript& transcript, int exchange_cap);

}  // namespace storyreel
