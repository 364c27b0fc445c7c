#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "storyreel/assembly.hpp"
#include "storyreel/backends.hpp"
#include "storyreel/core_model.hpp"
#include "storyreel/role_engine.hpp"

namespace storyreel {

enum class Direction { Request, Reply };

std::string_view to_string(Direction direction);
Direction parse_direction(std::string_view text);

/// One logged chat message. Requests keep their full context as `parts`
/// (with per-part provenance) and the flattened text as `content`.
struct Message {
    int seq = 0;
    RoleId agent = RoleId::Director;
    Direction direction = Direction::Request;
    std::string stage;
    int round = 0;
    std::string content;
    std::vector<ChatTurn> parts;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    std::int64_t latency_ms = 0;
    std::vector<std::int64_t> failed_attempt_latency_ms;
    std::string wall_time;

    bool operator==(const Message&) const = default;
};

/// Flattens request parts into the logged `content` text.
std::string flatten_parts(const std::vector<ChatTurn>& parts);

enum class ArtifactKind { Scenes, Images, Music };

std::string_view to_string(ArtifactKind kind);

template <typename T>
struct ApprovedArtifact {
    T value;
    int seq = 0;
};

struct DraftRecord {
    ArtifactKind kind;
    int round = 0;
    int seq = 0;
    std::string text;
};

struct FeedbackRecord {
    ArtifactKind kind;
    int round = 0;
    int seq = 0;
    std::string feedback;
};

/// Append-only record of a run: every message plus an index of directives,
/// drafts, feedback and approved artifacts, each pointing at the seq of the
/// reply it came from.
class MemoryStream {
public:
    explicit MemoryStream(UserPrompt prompt) : prompt_(std::move(prompt)) {}

    const UserPrompt& user_prompt() const { return prompt_; }
    const std::vector<Message>& messages() const { return messages_; }

    /// Assigns the next seq and appends. Returns the seq.
    int append(Message message);

    void record_directive(Directive directive, int seq);
    void record_draft(ArtifactKind kind, int round, int seq, std::string text);
    void record_feedback(ArtifactKind kind, int round, int seq, std::string feedback);
    void approve_scenes(SceneSet scenes, int seq);
    void approve_images(ImagePromptSet prompts, int seq);
    void approve_music(MusicPrompt music, int seq);

    const std::optional<ApprovedArtifact<Directive>>& directive_for(RoleId role) const;
    const std::vector<DraftRecord>& drafts() const { return drafts_; }
    const std::vector<FeedbackRecord>& feedback() const { return feedback_; }
    const std::optional<ApprovedArtifact<SceneSet>>& approved_scenes() const { return scenes_; }
    const std::optional<ApprovedArtifact<ImagePromptSet>>& approved_images() const { return images_; }
    const std::optional<ApprovedArtifact<MusicPrompt>>& approved_music() const { return music_; }

private:
    UserPrompt prompt_;
    std::vector<Message> messages_;
    std::optional<ApprovedArtifact<Directive>> directives_[4];
    std::vector<DraftRecord> drafts_;
    std::vector<FeedbackRecord> feedback_;
    std::optional<ApprovedArtifact<SceneSet>> scenes_;
    std::optional<ApprovedArtifact<ImagePromptSet>> images_;
    std::optional<ApprovedArtifact<MusicPrompt>> music_;
};

class MissingArtifact : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-run approval rounds exhausted for one artifact, or the global exchange cap hit.
class LoopCapExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An agent kept misreading its role after the re-ask budget.
class CharacterConfusion : public std::runtime_error {
public:
    CharacterConfusion(RoleId role, const std::string& what) : std::runtime_error(what), role_(role) {}
    RoleId role() const { return role_; }

private:
    RoleId role_;
};

/// Fully built system prompts for the four roles, indexed by RoleId.
struct RolePrompts {
    std::string system[4];
    const std::string& of(RoleId role) const { return system[static_cast<int>(role)]; }
};

RolePrompts build_role_prompts(const std::vector<RoleSpec>& specs, std::string_view project_context);

/// Ordered request messages for a role. Editor, painter and composer contexts
/// are implied by the role; the director's depends on `stage` (which directive
/// to issue or which artifact to review). Throws MissingArtifact when an
/// upstream artifact the role needs is absent.
std::vector<ChatTurn> render_context(const MemoryStream& memory, RoleId for_role, const RolePrompts& prompts,
                                     std::string_view stage = {});

/// Running totals maintained by record_exchange.
struct ExchangeCounters {
    std::uint64_t loops = 0;
    std::uint64_t token_length = 0;
    std::int64_t communicate_time_ms = 0;
    bool operator==(const ExchangeCounters&) const = default;
};

/// Appends the request and reply, adding one loop, prompt+completion tokens
/// and the reply latency. Returns the reply's seq.
int record_exchange(MemoryStream& memory, ExchangeCounters& counters, Message request, Message reply,
                    const Usage& usage, std::int64_t latency_ms);

template <typename A>
struct Produced {
    A value;
    int seq = 0;
    std::string text;
};

struct Reviewed {
    ApprovalVerdict verdict;
    int seq = 0;
};

template <typename A>
struct LoopResult {
    A artifact;
    int seq = 0;
    int rounds_used = 0;
};

/// Alternates produce/review until approval. Drafts and revision feedback are
/// recorded in memory so the next produce step sees them. Throws
/// LoopCapExceeded after `max_rounds` non-approvals.
template <typename A>
LoopResult<A> approval_loop(const std::function<Produced<A>(int round)>& produce,
                            const std::function<Reviewed(const Produced<A>&, int round)>& review,
                            MemoryStream& memory, ArtifactKind kind, int max_rounds) {
    if (max_rounds < 1) {
        throw std::invalid_argument("max_rounds must be >= 1");
    }
    for (int round = 1; round <= max_rounds; ++round) {
        Produced<A> produced = produce(round);
        memory.record_draft(kind, round, produced.seq, produced.text);
        Reviewed reviewed = review(produced, round);
        if (std::holds_alternative<Approved>(reviewed.verdict)) {
            return {std::move(produced.value), produced.seq, round};
        }
        memory.record_feedback(kind, round, reviewed.seq, std::get<RevisionRequested>(reviewed.verdict).feedback);
    }
    throw LoopCapExceeded(std::string(to_string(kind)) + " not approved after " + std::to_string(max_rounds) +
                          " rounds");
}

struct PipelineConfig {
    int scene_count = 5;
    int approval_max_rounds = 3;
    int exchange_cap = 60;
    int reask_max = 2;
    std::string model_id = "mock-chat";
    double temperature = 0.7;
    std::vector<std::string> refusal_patterns = default_refusal_patterns();
    double repetitive_threshold = 0.8;
    Padding padding;
    std::int64_t fade_out_ms = 2000;

    /// Fewest chat exchanges a run can take: three directives, three drafts, three verdicts.
    static constexpr int kHappyPathExchanges = 9;

    /// Throws std::invalid_argument naming the first bad field.
    void validate() const;
};

/// One creation-phase media call as logged in the transcript.
struct MediaCall {
    MediaKind kind = MediaKind::Image;
    int scene = 0;  // 0 for music
    std::string digest;
    bool moderation_flagged = false;
    bool failed = false;
    std::int64_t duration_ms = 0;
    std::int64_t latency_ms = 0;
    std::vector<std::int64_t> failed_attempt_latency_ms;
    bool operator==(const MediaCall&) const = default;
};

struct Transcript {
    std::string run_id;
    std::string model_id;
    std::string prompt;
    std::vector<Message> messages;
    std::vector<MediaCall> media_calls;
    TerminalState terminal_state = TerminalState::Completed;
    Outcome outcome;
    RunMetrics metrics;
    bool operator==(const Transcript&) const = default;
};

struct PipelineResult {
    Transcript transcript;
    std::optional<SceneSet> scene_set;
    std::optional<ImagePromptSet> image_prompts;
    std::optional<MusicPrompt> music_prompt;
    std::optional<AssetBundle> assets;
    RunMetrics metrics;
    Outcome outcome;
    /// Final memory stream, kept for inspection.
    MemoryStream memory;
};

/// Runs the full director -> editor -> painter -> composer sequence and the
/// creation phase. Taxonomy failures become Invalid outcomes; only invalid
/// configuration (and authentication failures) throw.
PipelineResult run_pipeline(const UserPrompt& prompt, const PipelineConfig& config, const RolePrompts& roles,
                            BackendSet& backends, const std::string& run_id);

/// Project context appended to every system prompt.
std::string project_context(const PipelineConfig& config);

}  // namespace storyreel
