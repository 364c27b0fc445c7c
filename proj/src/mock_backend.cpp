#include "storyreel/mock_backend.hpp"

#include <array>
#include <cmath>
#include <set>

#include "storyreel/stages.hpp"
#include "storyreel/text_util.hpp"

namespace storyreel {

namespace {

std::uint64_t fnv1a(std::uint64_t h, std::string_view bytes) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    // field separator so ("ab","c") and ("a","bc") differ
    h ^= 0xff;
    h *= 0x100000001b3ULL;
    return h;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::int64_t round10(double ms) { return static_cast<std::int64_t>(std::llround(ms / 10.0)) * 10; }

const std::set<std::string, std::less<>>& stop_words() {
    static const std::set<std::string, std::less<>> words{
        "a",    "an",   "the",  "of",   "in",   "on",    "at",   "to",    "and",  "or",   "for",  "with",
        "from", "by",   "is",   "are",  "do",   "does",  "why",  "how",   "what", "your", "my",   "our",
        "its",  "it",   "s",    "this", "that", "these", "both", "about", "into", "here", "time", "one"};
    return words;
}

/// Lowercase content words of the user prompt, used as the video's theme.
std::string theme_of(std::string_view prompt) {
    std::string theme;
    for (const auto& token : text_util::word_tokens(prompt)) {
        if (stop_words().contains(token)) {
            continue;
        }
        if (!theme.empty()) {
            theme += ' ';
        }
        theme += token;
    }
    return theme.empty() ? "the requested subject" : theme;
}

std::string quoted_text(std::string_view text) {
    const auto open = text.find('"');
    if (open == std::string_view::npos) {
        return {};
    }
    const auto close = text.find('"', open + 1);
    if (close == std::string_view::npos) {
        return {};
    }
    return std::string(text.substr(open + 1, close - open - 1));
}

const ChatTurn* find_turn(const ChatRequest& request, std::string_view author) {
    for (const auto& turn : request.messages) {
        if (turn.author == author) {
            return &turn;
        }
    }
    return nullptr;
}

std::vector<std::string> captions_in(const ChatRequest& request) {
    std::vector<std::string> captions;
    for (const auto& turn : request.messages) {
        if (turn.author != "editor") {
            continue;
        }
        for (auto line : text_util::lines(turn.content)) {
            line = text_util::trim(line);
            if (!line.starts_with("CAPTION ")) {
                continue;
            }
            const auto colon = line.find(':');
            if (colon != std::string_view::npos) {
                captions.emplace_back(text_util::trim(line.substr(colon + 1)));
            }
        }
        if (!captions.empty()) {
            break;
        }
    }
    return captions;
}

std::string artifact_of(std::string_view stage) {
    const auto colon = stage.find(':');
    return std::string(colon == std::string_view::npos ? stage : stage.substr(colon + 1));
}

constexpr std::array<std::string_view, 10> kCaptionStems{
    "First light over", "Up close with",   "A closer look at", "In motion:",     "Behind the story of",
    "Changing seasons for", "Small details of", "The turning point for", "A quiet moment with",
    "Last look at"};

constexpr std::array<std::string_view, 24> kNarrationWords{
    "we",       "follow",  "every",    "step",      "as",      "morning", "light",    "reveals",
    "patient",  "rhythms", "hidden",   "beneath",   "ordinary", "days",   "each",     "moment",
    "carries",  "stories", "worth",    "watching",  "closely", "together", "slowly", "unfolding"};

constexpr std::array<std::string_view, 10> kStyles{
    "cinematic",  "documentary", "watercolor", "editorial", "aerial",
    "macro",      "vintage film", "high-contrast", "soft-focus", "panoramic"};

constexpr std::array<std::string_view, 10> kLight{
    "golden hour glow", "overcast diffusion", "blue dusk", "harsh noon sun",  "candlelit warmth",
    "misty dawn",       "neon reflections",   "rim lighting", "dappled shade", "moonlit silver"};

constexpr std::array<std::string_view, 10> kFraming{
    "wide establishing frame", "tight portrait crop", "low angle", "overhead view",  "shallow depth",
    "symmetrical layout",      "rule-of-thirds",      "dutch tilt", "long lens compression", "centered hero"};

constexpr std::array<std::string_view, 4> kFeedback{
    "tighten scene 3 narration to match the pacing",
    "make the captions shorter and more vivid",
    "keep one consistent colour palette across all scenes",
    "lower the tempo so the narration stays audible"};

}  // namespace

double MockBackend::draw(const CallTag& tag, std::string_view purpose) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = fnv1a(h, std::to_string(script_.seed));
    h = fnv1a(h, tag.run_id);
    h = fnv1a(h, tag.stage);
    h = fnv1a(h, std::to_string(tag.round));
    h = fnv1a(h, std::to_string(tag.reask));
    h = fnv1a(h, std::to_string(tag.call_seq));
    h = fnv1a(h, std::to_string(tag.attempt));
    h = fnv1a(h, purpose);
    return static_cast<double>(splitmix(h) >> 11) * 0x1.0p-53;
}

std::int64_t MockBackend::narration_duration_ms(std::string_view text) {
    // words / 2.5 s == words * 400 ms, already a whole number of centiseconds
    return static_cast<std::int64_t>(count_words(text)) * 400;
}

void MockBackend::maybe_fail(const CallTag& tag) const {
    if (script_.p_transport_error > 0.0 && draw(tag, "transport") < script_.p_transport_error) {
        throw TransportError("mock transport failure at " + tag.stage,
                             round10(1000.0 + 4000.0 * draw(tag, "transport-latency")));
    }
}

std::string MockBackend::reply_for(const ChatRequest& request) const {
    const CallTag& tag = request.tag;
    const std::string_view stage = tag.stage;
    const bool drafting = stage.starts_with("draft:");
    if (drafting && script_.p_refusal > 0.0 && draw(tag, "refusal") < script_.p_refusal) {
        return "As a text-based AI, I cannot generate images or audio. I can only describe them in words.";
    }

    if (stage == stages::kDirectiveEditor) {
        const ChatTurn* user = find_turn(request, "user");
        const std::string theme = theme_of(user != nullptr ? user->content : "");
        return "DIRECTIVE: Write a " + std::to_string(tag.expected_items) +
               "-scene narrated slideshow script on the theme \"" + theme +
               "\". Give each scene a short on-screen caption and 20 to 30 words of narration in a warm "
               "documentary voice.\n";
    }
    if (stage == stages::kDirectivePainter) {
        return "DIRECTIVE: Write one photographic image prompt per approved caption. Keep a consistent "
               "palette and vary the composition from scene to scene.\n";
    }
    if (stage == stages::kDirectiveComposer) {
        return "DIRECTIVE: Describe one background music track that fits the approved captions and sits "
               "under the narration without competing with it.\n";
    }

    if (stage == stages::kDraftScenes) {
        const ChatTurn* directive = find_turn(request, "director");
        std::string theme = directive != nullptr ? quoted_text(directive->content) : std::string{};
        if (theme.empty()) {
            theme = "the subject";
        }
        SceneSet scenes;
        for (int i = 1; i <= tag.expected_items; ++i) {
            const std::string purpose = "scene" + std::to_string(i);
            const int words = 20 + static_cast<int>(draw(tag, purpose + "-len") * 11.0);
            std::string narration = "Here " + theme;
            int count = 1 + count_words(theme);
            auto offset = static_cast<std::size_t>(draw(tag, purpose + "-offset") * kNarrationWords.size());
            while (count < words) {
                narration += ' ';
                narration += kNarrationWords[offset++ % kNarrationWords.size()];
                ++count;
            }
            narration += '.';
            const auto stem = kCaptionStems[static_cast<std::size_t>(i - 1) % kCaptionStems.size()];
            scenes.scenes.push_back(Scene{i, std::string(stem) + " " + theme, std::move(narration)});
        }
        return emit_scene_set(scenes);
    }
    if (stage == stages::kDraftImages) {
        auto captions = captions_in(request);
        ImagePromptSet prompts;
        for (int i = 1; i <= tag.expected_items; ++i) {
            const auto k = static_cast<std::size_t>(i - 1);
            const std::string caption =
                k < captions.size() ? text_util::to_lower_ascii(captions[k]) : "scene " + std::to_string(i);
            prompts.prompts.push_back(std::string(kStyles[k % kStyles.size()]) + " photograph, " + caption + ", " +
                                      std::string(kLight[k % kLight.size()]) + ", " +
                                      std::string(kFraming[k % kFraming.size()]));
        }
        if (prompts.prompts.size() >= 2 && script_.p_repetitive > 0.0 &&
            draw(tag, "repetitive") < script_.p_repetitive) {
            prompts.prompts[1] = prompts.prompts[0];
        }
        return emit_image_prompts(prompts);
    }
    if (stage == stages::kDraftMusic) {
        auto captions = captions_in(request);
        const std::string inspiration =
            captions.empty() ? std::string("the story") : text_util::to_lower_ascii(captions.front());
        static constexpr std::array<std::string_view, 4> kInstruments{
            "gentle piano over soft strings", "warm acoustic guitar", "airy synth pads", "light orchestral"};
        static constexpr std::array<std::string_view, 4> kMoods{"warm", "curious", "uplifting", "reflective"};
        const auto pick = static_cast<std::size_t>(draw(tag, "music") * 4.0);
        return emit_music_prompt(MusicPrompt{std::string(kInstruments[pick]) + " inspired by " + inspiration,
                                             std::string(kMoods[pick])});
    }

    if (stage.starts_with("review:")) {
        const std::string artifact = artifact_of(stage);
        bool approve = true;
        if (script_.never_approve) {
            approve = false;
        } else if (auto it = script_.verdicts.find(artifact);
                   it != script_.verdicts.end() && tag.round >= 1 &&
                   static_cast<std::size_t>(tag.round) <= it->second.size()) {
            approve = it->second[static_cast<std::size_t>(tag.round - 1)] == "APPROVE";
        } else if (script_.p_revise > 0.0) {
            approve = draw(tag, "verdict") >= script_.p_revise;
        }
        if (approve) {
            return emit_verdict(Approved{});
        }
        const auto pick = static_cast<std::size_t>(draw(tag, "feedback") * kFeedback.size());
        return emit_verdict(RevisionRequested{std::string(kFeedback[pick])});
    }
    return "I am not sure what you are asking.";
}

ChatResponse MockBackend::chat_complete(const ChatRequest& request) {
    if (request.messages.empty()) {
        throw std::invalid_argument("chat request has no messages");
    }
    maybe_fail(request.tag);
    ChatResponse response;
    response.content = reply_for(request);
    std::uint64_t prompt_bytes = 0;
    for (const auto& turn : request.messages) {
        prompt_bytes += turn.content.size();
    }
    response.usage.prompt_tokens = (prompt_bytes + 3) / 4 + 4 * request.messages.size();
    response.usage.completion_tokens = (response.content.size() + 3) / 4;
    response.latency_ms = round10(600.0 + 12.0 * static_cast<double>(response.usage.completion_tokens) +
                                  1500.0 * draw(request.tag, "latency"));
    return response;
}

MediaAsset MockBackend::generate_image(std::string_view prompt, const CallTag& tag) {
    if (text_util::trim(prompt).empty()) {
        throw std::invalid_argument("image prompt must be nonempty");
    }
    maybe_fail(tag);
    bool flagged = script_.p_moderation > 0.0 && draw(tag, "moderation") < script_.p_moderation;
    const auto tokens = text_util::word_tokens(prompt);
    for (const auto& keyword : script_.moderation_keywords) {
        const std::string lower = text_util::to_lower_ascii(keyword);
        for (const auto& token : tokens) {
            flagged = flagged || token == lower;
        }
    }
    return MediaAsset::make(MediaKind::Image, make_ppm(prompt), "ppm", 0, flagged,
                            round10(2000.0 + 3000.0 * draw(tag, "latency")));
}

MediaAsset MockBackend::synthesize_speech(std::string_view text, const CallTag& tag) {
    if (text_util::trim(text).empty()) {
        throw std::invalid_argument("narration text must be nonempty");
    }
    maybe_fail(tag);
    const std::int64_t duration = narration_duration_ms(text);
    return MediaAsset::make(MediaKind::Narration, make_wav(duration, text), "wav", duration, false,
                            round10(500.0 + 20.0 * static_cast<double>(count_words(text)) +
                                    500.0 * draw(tag, "latency")));
}

MediaAsset MockBackend::compose_music(const MusicPrompt& prompt, std::int64_t target_duration_ms,
                                      const CallTag& tag) {
    if (target_duration_ms <= 0) {
        throw std::invalid_argument("music target duration must be positive");
    }
    if (prompt.description.empty()) {
        throw std::invalid_argument("music description must be nonempty");
    }
    maybe_fail(tag);
    return MediaAsset::make(MediaKind::Music, make_wav(target_duration_ms, prompt.description + "|" + prompt.mood),
                            "wav", target_duration_ms, false, round10(4000.0 + 4000.0 * draw(tag, "latency")));
}

BackendSet make_mock_backends(MockScript script, PricingTable pricing, RetryPolicy retry) {
    auto mock = std::make_shared<MockBackend>(std::move(script));
    BackendSet set;
    set.chat = mock;
    set.image = mock;
    set.speech = mock;
    set.music = mock;
    set.pricing = std::move(pricing);
    set.retry = retry;
    set.make_clock = [] { return std::make_unique<SimulatedRunClock>(); };
    return set;
}

double transport_rate_for_run_failure(double run_failure, int calls, int attempts) {
    if (run_failure <= 0.0) {
        return 0.0;
    }
    const double per_call = 1.0 - std::pow(1.0 - run_failure, 1.0 / calls);
    return std::pow(per_call, 1.0 / attempts);
}

}  // namespace storyreel
