#include "storyreel/chat_tower.hpp"

#include <algorithm>
#include <memory>

#include "storyreel/stages.hpp"

namespace storyreel {

namespace {

ChatTurn system_turn(const RolePrompts& prompts, RoleId role) {
    return ChatTurn{"system", "tower", prompts.of(role)};
}

ChatTurn tower_turn(std::string text) { return ChatTurn{"user", "tower", std::move(text)}; }

const DraftRecord* latest_draft(const MemoryStream& memory, ArtifactKind kind) {
    const DraftRecord* found = nullptr;
    for (const auto& draft : memory.drafts()) {
        if (draft.kind == kind) {
            found = &draft;
        }
    }
    return found;
}

ArtifactKind kind_for_role(RoleId role) {
    switch (role) {
        case RoleId::Editor:
            return ArtifactKind::Scenes;
        case RoleId::Painter:
            return ArtifactKind::Images;
        default:
            return ArtifactKind::Music;
    }
}

RoleId producer_of(ArtifactKind kind) {
    switch (kind) {
        case ArtifactKind::Scenes:
            return RoleId::Editor;
        case ArtifactKind::Images:
            return RoleId::Painter;
        case ArtifactKind::Music:
            return RoleId::Composer;
    }
    return RoleId::Editor;
}

std::string first_draft_instruction(RoleId role) {
    switch (role) {
        case RoleId::Editor:
            return "Write the script now. Use exactly the SCENE <i>: / CAPTION: / NARRATION: format, one block "
                   "per scene.";
        case RoleId::Painter:
            return "Write the image prompts now, one IMAGE <i>: line per approved caption, in caption order.";
        default:
            return "Describe the background music now with one MUSIC: line and an optional MOOD: line.";
    }
}

constexpr std::string_view kRevisionInstruction =
    "Revise your latest draft to address the director's feedback above. Reply with the complete "
    "deliverable in the same format.";

/// Draft and feedback history for one artifact, in seq order.
void append_history(std::vector<ChatTurn>& turns, const MemoryStream& memory, ArtifactKind kind) {
    struct Item {
        int seq;
        ChatTurn turn;
    };
    std::vector<Item> items;
    const std::string author(role_key(producer_of(kind)));
    for (const auto& draft : memory.drafts()) {
        if (draft.kind == kind) {
            items.push_back({draft.seq, ChatTurn{"assistant", author, draft.text}});
        }
    }
    for (const auto& feedback : memory.feedback()) {
        if (feedback.kind == kind) {
            items.push_back({feedback.seq, ChatTurn{"user", "director", feedback.feedback}});
        }
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.seq < b.seq; });
    for (auto& item : items) {
        turns.push_back(std::move(item.turn));
    }
}

bool has_feedback(const MemoryStream& memory, ArtifactKind kind) {
    return std::any_of(memory.feedback().begin(), memory.feedback().end(),
                       [&](const FeedbackRecord& f) { return f.kind == kind; });
}

const SceneSet& require_scenes(const MemoryStream& memory, RoleId for_role) {
    if (!memory.approved_scenes()) {
        throw MissingArtifact(std::string(to_string(for_role)) + " context needs the approved script");
    }
    return memory.approved_scenes()->value;
}

}  // namespace

std::string_view to_string(Direction direction) {
    return direction == Direction::Request ? "request" : "reply";
}

Direction parse_direction(std::string_view text) {
    if (text == "request") {
        return Direction::Request;
    }
    if (text == "reply") {
        return Direction::Reply;
    }
    throw std::invalid_argument("unknown direction: " + std::string(text));
}

std::string flatten_parts(const std::vector<ChatTurn>& parts) {
    std::string out;
    for (const auto& part : parts) {
        if (!out.empty()) {
            out += "\n\n";
        }
        out += "[" + part.role + "/" + part.author + "]\n";
        out += part.content;
    }
    return out;
}

std::string_view to_string(ArtifactKind kind) {
    switch (kind) {
        case ArtifactKind::Scenes:
            return "scenes";
        case ArtifactKind::Images:
            return "images";
        case ArtifactKind::Music:
            return "music";
    }
    return "?";
}

int MemoryStream::append(Message message) {
    message.seq = static_cast<int>(messages_.size()) + 1;
    messages_.push_back(std::move(message));
    return messages_.back().seq;
}

void MemoryStream::record_directive(Directive directive, int seq) {
    auto& slot = directives_[static_cast<int>(directive.to)];
    if (slot) {
        throw std::logic_error("directive for " + std::string(to_string(directive.to)) + " already recorded");
    }
    slot = ApprovedArtifact<Directive>{std::move(directive), seq};
}

void MemoryStream::record_draft(ArtifactKind kind, int round, int seq, std::string text) {
    drafts_.push_back(DraftRecord{kind, round, seq, std::move(text)});
}

void MemoryStream::record_feedback(ArtifactKind kind, int round, int seq, std::string feedback) {
    feedback_.push_back(FeedbackRecord{kind, round, seq, std::move(feedback)});
}

void MemoryStream::approve_scenes(SceneSet scenes, int seq) {
    if (scenes_) {
        throw std::logic_error("script already approved");
    }
    scenes_ = ApprovedArtifact<SceneSet>{std::move(scenes), seq};
}

void MemoryStream::approve_images(ImagePromptSet prompts, int seq) {
    if (images_) {
        throw std::logic_error("image prompts already approved");
    }
    images_ = ApprovedArtifact<ImagePromptSet>{std::move(prompts), seq};
}

void MemoryStream::approve_music(MusicPrompt music, int seq) {
    if (music_) {
        throw std::logic_error("music prompt already approved");
    }
    music_ = ApprovedArtifact<MusicPrompt>{std::move(music), seq};
}

const std::optional<ApprovedArtifact<Directive>>& MemoryStream::directive_for(RoleId role) const {
    return directives_[static_cast<int>(role)];
}

RolePrompts build_role_prompts(const std::vector<RoleSpec>& specs, std::string_view context) {
    RolePrompts prompts;
    bool seen[4] = {false, false, false, false};
    for (const auto& spec : specs) {
        prompts.system[static_cast<int>(spec.role)] = build_system_prompt(spec, context);
        seen[static_cast<int>(spec.role)] = true;
    }
    for (RoleId role : kAllRoles) {
        if (!seen[static_cast<int>(role)]) {
            throw std::invalid_argument("no role spec for " + std::string(to_string(role)));
        }
    }
    return prompts;
}

std::vector<ChatTurn> render_context(const MemoryStream& memory, RoleId for_role, const RolePrompts& prompts,
                                     std::string_view stage) {
    std::vector<ChatTurn> turns;
    turns.push_back(system_turn(prompts, for_role));

    if (for_role != RoleId::Director) {
        const auto& directive = memory.directive_for(for_role);
        if (!directive) {
            throw MissingArtifact(std::string(to_string(for_role)) + " has no directive yet");
        }
        const SceneSet* scenes = nullptr;
        if (for_role != RoleId::Editor) {
            scenes = &require_scenes(memory, for_role);
        }
        turns.push_back(ChatTurn{"user", "director", directive->value.content});
        if (scenes != nullptr) {
            turns.push_back(ChatTurn{"user", "editor", caption_block(*scenes)});
        }
        const ArtifactKind kind = kind_for_role(for_role);
        append_history(turns, memory, kind);
        turns.push_back(tower_turn(has_feedback(memory, kind) ? std::string(kRevisionInstruction)
                                                              : first_draft_instruction(for_role)));
        return turns;
    }

    turns.push_back(ChatTurn{"user", "user", memory.user_prompt().text()});
    if (stage == stages::kDirectiveEditor) {
        turns.push_back(tower_turn("Issue your directive for the Editor. Start the reply with DIRECTIVE: "
                                   "and describe the script you want."));
    } else if (stage == stages::kDirectivePainter || stage == stages::kDirectiveComposer) {
        const bool painter = stage == stages::kDirectivePainter;
        const SceneSet& scenes = require_scenes(memory, RoleId::Director);
        turns.push_back(ChatTurn{"user", "editor", caption_block(scenes)});
        turns.push_back(tower_turn(std::string("The script is approved; its captions are above. Issue your "
                                               "directive for the ") +
                                   (painter ? "Painter" : "Composer") + ". Start the reply with DIRECTIVE:."));
    } else if (stage.starts_with("review:")) {
        ArtifactKind kind = ArtifactKind::Scenes;
        if (stage == stages::kReviewImages) {
            kind = ArtifactKind::Images;
        } else if (stage == stages::kReviewMusic) {
            kind = ArtifactKind::Music;
        } else if (stage != stages::kReviewScenes) {
            throw std::invalid_argument("unknown director stage: " + std::string(stage));
        }
        const DraftRecord* draft = latest_draft(memory, kind);
        if (draft == nullptr) {
            throw MissingArtifact("nothing to review for " + std::string(to_string(kind)));
        }
        const RoleId producer = producer_of(kind);
        turns.push_back(ChatTurn{"user", std::string(role_key(producer)), draft->text});
        turns.push_back(tower_turn("Review the " + std::string(to_string(producer)) +
                                   "'s draft above against the user's request. Reply APPROVE, or "
                                   "REVISE: followed by specific, actionable feedback."));
    } else {
        throw std::invalid_argument("unknown director stage: " + std::string(stage));
    }
    return turns;
}

int record_exchange(MemoryStream& memory, ExchangeCounters& counters, Message request, Message reply,
                    const Usage& usage, std::int64_t latency_ms) {
    request.direction = Direction::Request;
    reply.direction = Direction::Reply;
    reply.prompt_tokens = usage.prompt_tokens;
    reply.completion_tokens = usage.completion_tokens;
    reply.latency_ms = latency_ms;
    memory.append(std::move(request));
    const int seq = memory.append(std::move(reply));
    counters.loops += 1;
    counters.token_length += usage.prompt_tokens + usage.completion_tokens;
    counters.communicate_time_ms += latency_ms;
    return seq;
}

void PipelineConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) {
            throw std::invalid_argument(std::string("invalid pipeline config: ") + what);
        }
    };
    require(scene_count >= 1, "scene_count must be >= 1");
    require(approval_max_rounds >= 1, "approval_max_rounds must be >= 1");
    require(reask_max >= 0, "reask_max must be >= 0");
    require(exchange_cap > kHappyPathExchanges, "exchange_cap must exceed the 9-exchange happy path");
    require(!model_id.empty(), "model_id must be set");
    require(!refusal_patterns.empty(), "refusal_patterns must be nonempty");
    require(repetitive_threshold > 0.0 && repetitive_threshold <= 1.0, "repetitive_threshold must be in (0, 1]");
    require(padding.lead_ms >= 0 && padding.tail_ms >= 0, "padding must be non-negative");
    require(fade_out_ms >= 0, "fade_out must be non-negative");
}

std::string project_context(const PipelineConfig& config) {
    return "The video is a slideshow of " + std::to_string(config.scene_count) +
           " scenes: one still image and one narrated passage per scene, with a single background music "
           "track under the whole video. Text you write is turned into images and audio by separate "
           "services. Keep every reply in the exact output format given above.";
}

namespace {

/// State of one pipeline run. Strictly sequential; owns the run's memory.
class TowerRun {
public:
    TowerRun(const UserPrompt& prompt, const PipelineConfig& config, const RolePrompts& roles, BackendSet& backends,
             std::string run_id)
        : config_(config),
          roles_(roles),
          backends_(backends),
          run_id_(std::move(run_id)),
          memory_(prompt),
          clock_(backends.make_clock()) {}

    PipelineResult run();

private:
    struct Exchanged {
        std::string text;
        int seq = 0;
    };

    Exchanged exchange(RoleId agent, std::string_view stage, int round, int reask, const std::vector<ChatTurn>& turns,
                       int expected_items);

    template <typename T, typename Parse>
    Produced<T> ask(RoleId agent, std::string_view stage, int round, std::vector<ChatTurn> turns, int expected_items,
                    Parse parse);

    template <typename T, typename Parse>
    LoopResult<T> approve(ArtifactKind kind, std::string_view draft_stage, std::string_view review_stage,
                          int expected_items, Parse parse);

    void issue_directive(RoleId to, std::string_view stage);

    MediaAsset media_call(MediaKind kind, int scene, std::string_view stage,
                          const std::function<MediaAsset(const CallTag&)>& call,
                          const std::function<MediaAsset(const ModerationRejection&)>& on_rejection = {});

    CallTag next_tag(std::string_view stage, int round, int reask, int expected_items) {
        return CallTag{run_id_, std::string(stage), round, reask, ++call_seq_, 1, expected_items};
    }

    void charge(CallKind kind, const Usage& usage, Usd cost) {
        backends_.ledger->append(LedgerEntry{run_id_, kind, usage, cost});
        run_cost_ += cost;
    }

    const PipelineConfig& config_;
    const RolePrompts& roles_;
    BackendSet& backends_;
    std::string run_id_;
    MemoryStream memory_;
    std::unique_ptr<RunClock> clock_;
    ExchangeCounters counters_;
    std::vector<MediaCall> media_calls_;
    Usd run_cost_{};
    int call_seq_ = 0;
};

TowerRun::Exchanged TowerRun::exchange(RoleId agent, std::string_view stage, int round, int reask,
                                       const std::vector<ChatTurn>& turns, int expected_items) {
    if (counters_.loops >= static_cast<std::uint64_t>(config_.exchange_cap)) {
        throw LoopCapExceeded("exchange cap of " + std::to_string(config_.exchange_cap) + " reached");
    }
    Message request;
    request.agent = agent;
    request.direction = Direction::Request;
    request.stage = std::string(stage);
    request.round = round;
    request.parts = turns;
    request.content = flatten_parts(turns);
    request.wall_time = rfc3339_now();

    ChatRequest chat_request{config_.model_id, turns, config_.temperature, next_tag(stage, round, reask, expected_items)};
    Retried<ChatResponse> retried;
    try {
        retried = with_retry(
            [&](int attempt) {
                ChatRequest attempt_request = chat_request;
                attempt_request.tag.attempt = attempt;
                return backends_.chat->chat_complete(attempt_request);
            },
            backends_.retry, *clock_);
    } catch (const NetworkInstability&) {
        memory_.append(std::move(request));
        throw;
    } catch (const MalformedResponse& e) {
        clock_->account_latency_ms(e.latency_ms());
        memory_.append(std::move(request));
        throw NetworkInstability(e.what(), 1, {e.latency_ms()});
    }
    clock_->account_latency_ms(retried.value.latency_ms);

    Message reply;
    reply.agent = agent;
    reply.stage = std::string(stage);
    reply.round = round;
    reply.content = retried.value.content;
    reply.failed_attempt_latency_ms = retried.failed_latencies_ms;
    reply.wall_time = rfc3339_now();
    const int seq = record_exchange(memory_, counters_, std::move(request), std::move(reply), retried.value.usage,
                                    retried.value.latency_ms);
    charge(CallKind::Chat, retried.value.usage, cost_of(retried.value.usage, config_.model_id, backends_.pricing));
    return {std::move(retried.value.content), seq};
}

template <typename T, typename Parse>
Produced<T> TowerRun::ask(RoleId agent, std::string_view stage, int round, std::vector<ChatTurn> turns,
                          int expected_items, Parse parse) {
    for (int reask = 0;; ++reask) {
        Exchanged reply = exchange(agent, stage, round, reask, turns, expected_items);
        const bool confused = detect_confusion(reply.text, config_.refusal_patterns);
        std::string problem;
        if (!confused) {
            try {
                return Produced<T>{parse(reply.text), reply.seq, reply.text};
            } catch (const SchemaViolation& e) {
                problem = e.what();
            }
        }
        if (reask >= config_.reask_max) {
            throw CharacterConfusion(agent, std::string(to_string(agent)) + " at " + std::string(stage) + ": " +
                                                (confused ? "reply misreads the role" : problem));
        }
        turns.push_back(ChatTurn{"assistant", std::string(role_key(agent)), reply.text});
        if (confused) {
            turns.push_back(tower_turn("You are the " + std::string(to_string(agent)) +
                                       ". You only write text; separate services render images and audio from "
                                       "it. Reply again with your deliverable in the required format."));
        } else {
            turns.push_back(tower_turn("Your reply could not be used: " + problem +
                                       ". Reply again using exactly the required format."));
        }
    }
}

template <typename T, typename Parse>
LoopResult<T> TowerRun::approve(ArtifactKind kind, std::string_view draft_stage, std::string_view review_stage,
                                int expected_items, Parse parse) {
    const RoleId producer = producer_of(kind);
    std::function<Produced<T>(int)> produce = [&](int round) {
        return ask<T>(producer, draft_stage, round, render_context(memory_, producer, roles_), expected_items, parse);
    };
    std::function<Reviewed(const Produced<T>&, int)> review = [&](const Produced<T>&, int round) {
        auto verdict = ask<ApprovalVerdict>(RoleId::Director, review_stage, round,
                                            render_context(memory_, RoleId::Director, roles_, review_stage), 0,
                                            [](std::string_view raw) { return parse_verdict(raw); });
        return Reviewed{std::move(verdict.value), verdict.seq};
    };
    return approval_loop<T>(produce, review, memory_, kind, config_.approval_max_rounds);
}

void TowerRun::issue_directive(RoleId to, std::string_view stage) {
    auto directive = ask<Directive>(RoleId::Director, stage, 1, render_context(memory_, RoleId::Director, roles_, stage),
                                    config_.scene_count, [to](std::string_view raw) { return parse_directive(raw, to); });
    memory_.record_directive(std::move(directive.value), directive.seq);
}

MediaAsset TowerRun::media_call(MediaKind kind, int scene, std::string_view stage,
                                const std::function<MediaAsset(const CallTag&)>& call,
                                const std::function<MediaAsset(const ModerationRejection&)>& on_rejection) {
    const CallTag tag = next_tag(stage, 0, 0, 0);
    MediaCall logged;
    logged.kind = kind;
    logged.scene = scene;
    MediaAsset asset;
    try {
        auto retried = with_retry(
            [&](int attempt) {
                CallTag attempt_tag = tag;
                attempt_tag.attempt = attempt;
                try {
                    return call(attempt_tag);
                } catch (const ModerationRejection& e) {
                    if (!on_rejection) {
                        throw;
                    }
                    return on_rejection(e);
                }
            },
            backends_.retry, *clock_);
        asset = std::move(retried.value);
        logged.failed_attempt_latency_ms = std::move(retried.failed_latencies_ms);
    } catch (const NetworkInstability& e) {
        logged.failed = true;
        logged.failed_attempt_latency_ms = e.failed_latencies_ms();
        media_calls_.push_back(std::move(logged));
        throw;
    } catch (const MalformedResponse& e) {
        clock_->account_latency_ms(e.latency_ms());
        logged.failed = true;
        logged.failed_attempt_latency_ms = {e.latency_ms()};
        media_calls_.push_back(std::move(logged));
        throw NetworkInstability(e.what(), 1, {e.latency_ms()});
    }
    clock_->account_latency_ms(asset.latency_ms);
    logged.digest = asset.digest;
    logged.moderation_flagged = asset.moderation_flagged;
    logged.duration_ms = asset.duration_ms;
    logged.latency_ms = asset.latency_ms;
    media_calls_.push_back(std::move(logged));
    charge(call_kind_for(kind), Usage{}, cost_of(kind, backends_.pricing));
    return asset;
}

PipelineResult TowerRun::run() {
    TerminalState terminal = TerminalState::Completed;
    std::vector<InappropriateFlag> flags;
    std::optional<AssetBundle> assets;
    const int n = config_.scene_count;

    try {
        issue_directive(RoleId::Editor, stages::kDirectiveEditor);
        auto scenes = approve<SceneSet>(ArtifactKind::Scenes, stages::kDraftScenes, stages::kReviewScenes, n,
                                        [n](std::string_view raw) { return parse_scene_set(raw, n); });
        memory_.approve_scenes(std::move(scenes.artifact), scenes.seq);

        issue_directive(RoleId::Painter, stages::kDirectivePainter);
        auto images = approve<ImagePromptSet>(ArtifactKind::Images, stages::kDraftImages, stages::kReviewImages, n,
                                              [n](std::string_view raw) { return parse_image_prompts(raw, n); });
        memory_.approve_images(std::move(images.artifact), images.seq);
        flags = detect_repetitive_visuals(memory_.approved_images()->value, config_.repetitive_threshold);

        issue_directive(RoleId::Composer, stages::kDirectiveComposer);
        auto music = approve<MusicPrompt>(ArtifactKind::Music, stages::kDraftMusic, stages::kReviewMusic, 1,
                                          [](std::string_view raw) { return parse_music_prompt(raw); });
        memory_.approve_music(std::move(music.artifact), music.seq);

        // Creation phase: only after all three approvals.
        const SceneSet& approved_scenes = memory_.approved_scenes()->value;
        const ImagePromptSet& approved_images = memory_.approved_images()->value;
        AssetBundle bundle;
        for (std::size_t i = 0; i < approved_scenes.scenes.size(); ++i) {
            const Scene& scene = approved_scenes.scenes[i];
            const std::string& prompt = approved_images.prompts[i];
            MediaAsset image = media_call(
                MediaKind::Image, scene.index, stages::kMediaImage,
                [&](const CallTag& tag) { return backends_.image->generate_image(prompt, tag); },
                [&](const ModerationRejection& e) {
                    return MediaAsset::make(MediaKind::Image, make_ppm("moderated|" + prompt), "ppm", 0, true,
                                            e.latency_ms());
                });
            if (image.moderation_flagged) {
                flags.emplace_back(ModerationFlagged{scene.index});
            }
            bundle.images.push_back(std::move(image));
            bundle.narrations.push_back(media_call(MediaKind::Narration, scene.index, stages::kMediaNarration,
                                                   [&](const CallTag& tag) {
                                                       return backends_.speech->synthesize_speech(scene.narration, tag);
                                                   }));
        }
        const std::int64_t target = timeline_duration_ms(bundle.narrations, config_.padding);
        const MusicPrompt& approved_music = memory_.approved_music()->value;
        bundle.music = media_call(MediaKind::Music, 0, stages::kMediaMusic, [&](const CallTag& tag) {
            return backends_.music->compose_music(approved_music, target, tag);
        });
        assets = std::move(bundle);
    } catch (const LoopCapExceeded&) {
        terminal = TerminalState::AbortedLoopCap;
    } catch (const CharacterConfusion&) {
        terminal = TerminalState::AbortedConfusion;
    } catch (const NetworkInstability&) {
        terminal = TerminalState::AbortedNetwork;
    }
    if (terminal != TerminalState::Completed) {
        assets.reset();
    }

    RunMetrics metrics;
    metrics.total_loops = counters_.loops;
    metrics.total_token_length = counters_.token_length;
    metrics.communicate_time_ms = counters_.communicate_time_ms;
    metrics.total_time_ms = clock_->elapsed_ms();
    metrics.cost = run_cost_;
    const Outcome outcome = classify_outcome(terminal, flags);

    Transcript transcript;
    transcript.run_id = run_id_;
    transcript.model_id = config_.model_id;
    transcript.prompt = memory_.user_prompt().text();
    transcript.messages = memory_.messages();
    transcript.media_calls = media_calls_;
    transcript.terminal_state = terminal;
    transcript.outcome = outcome;
    transcript.metrics = metrics;

    PipelineResult result{std::move(transcript),
                          std::nullopt,
                          std::nullopt,
                          std::nullopt,
                          std::move(assets),
                          metrics,
                          outcome,
                          memory_};
    if (memory_.approved_scenes()) {
        result.scene_set = memory_.approved_scenes()->value;
    }
    if (memory_.approved_images()) {
        result.image_prompts = memory_.approved_images()->value;
    }
    if (memory_.approved_music()) {
        result.music_prompt = memory_.approved_music()->value;
    }
    return result;
}

}  // namespace

PipelineResult run_pipeline(const UserPrompt& prompt, const PipelineConfig& config, const RolePrompts& roles,
                            BackendSet& backends, const std::string& run_id) {
    config.validate();
    if (!backends.chat || !backends.image || !backends.speech || !backends.music || !backends.ledger) {
        throw std::invalid_argument("backend set is incomplete");
    }
    if (!backends.pricing.covers_model(config.model_id)) {
        throw UnknownModel(config.model_id);
    }
    TowerRun run(prompt, config, roles, backends, run_id);
    return run.run();
}

}  // namespace storyreel
