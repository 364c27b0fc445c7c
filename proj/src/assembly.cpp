#include "storyreel/assembly.hpp"

#include <spawn.h>
#include <sys/wait.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <set>

#include "storyreel/text_util.hpp"

extern char** environ;

namespace storyreel {

namespace {

std::string seconds(std::int64_t ms) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld.%03lld", static_cast<long long>(ms / 1000),
                  static_cast<long long>(ms % 1000));
    return buf;
}

std::int64_t parse_timestamp(std::string_view text) {
    // HH:MM:SS,mmm
    if (text.size() < 12 || text[text.size() - 4] != ',' || text[text.size() - 7] != ':' ||
        text[text.size() - 10] != ':') {
        throw std::invalid_argument("malformed SubRip timestamp: " + std::string(text));
    }
    auto number = [&](std::string_view part) {
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc{} || p != part.data() + part.size()) {
            throw std::invalid_argument("malformed SubRip timestamp: " + std::string(text));
        }
        return v;
    };
    const std::size_t n = text.size();
    const std::int64_t hours = number(text.substr(0, n - 10));
    const std::int64_t minutes = number(text.substr(n - 9, 2));
    const std::int64_t secs = number(text.substr(n - 6, 2));
    const std::int64_t millis = number(text.substr(n - 3, 3));
    if (minutes > 59 || secs > 59) {
        throw std::invalid_argument("malformed SubRip timestamp: " + std::string(text));
    }
    return ((hours * 60 + minutes) * 60 + secs) * 1000 + millis;
}

constexpr std::string_view kListInputs = "{inputs}";
constexpr std::string_view kListNarrations = "{narration_inputs}";

std::string filter_graph(const Timeline& timeline) {
    const std::size_t n = timeline.slides.size();
    const std::size_t music_index = n;
    const std::size_t narration_base = n + 2;
    std::string graph;
    for (std::size_t i = 0; i < n; ++i) {
        graph += "[" + std::to_string(i) +
                 ":v]scale=1280:720:force_original_aspect_ratio=decrease,pad=1280:720:(ow-iw)/2:(oh-ih)/2,"
                 "setsar=1,fps=25,format=yuv420p[v" +
                 std::to_string(i) + "];";
    }
    for (std::size_t i = 0; i < n; ++i) {
        graph += "[v" + std::to_string(i) + "]";
    }
    graph += "concat=n=" + std::to_string(n) + ":v=1:a=0[v];";
    graph += "[" + std::to_string(music_index) + ":a]afade=t=out:st=" +
             seconds(timeline.total_duration_ms - timeline.fade_out_ms) + ":d=" + seconds(timeline.fade_out_ms) +
             ",volume=0.3[bg];";
    for (std::size_t i = 0; i < n; ++i) {
        const std::string delay = std::to_string(timeline.slides[i].start_ms + timeline.padding.lead_ms);
        graph += "[" + std::to_string(narration_base + i) + ":a]adelay=" + delay + "|" + delay + "[n" +
                 std::to_string(i) + "];";
    }
    graph += "[bg]";
    for (std::size_t i = 0; i < n; ++i) {
        graph += "[n" + std::to_string(i) + "]";
    }
    graph += "amix=inputs=" + std::to_string(n + 1) + ":duration=first:normalize=0[a]";
    return graph;
}

/// Replaces every `{name}` in `token` using `values`; unknown names throw.
std::string substitute(std::string_view token, const std::map<std::string, std::string, std::less<>>& values) {
    std::string out;
    std::size_t pos = 0;
    while (pos < token.size()) {
        const auto open = token.find('{', pos);
        if (open == std::string_view::npos) {
            out += token.substr(pos);
            break;
        }
        const auto close = token.find('}', open);
        if (close == std::string_view::npos) {
            out += token.substr(pos);
            break;
        }
        out += token.substr(pos, open - pos);
        const std::string_view name = token.substr(open, close - open + 1);
        auto it = values.find(name);
        if (it == values.end()) {
            if (name == kListInputs || name == kListNarrations) {
                throw TemplateError(std::string(name),
                                    "list placeholder " + std::string(name) + " must be a whole argument");
            }
            throw TemplateError(std::string(name), "unknown template placeholder " + std::string(name));
        }
        out += it->second;
        pos = close + 1;
    }
    return out;
}

/// Every `{...}` span in a token.
std::vector<std::string> placeholders_in(std::string_view token) {
    std::vector<std::string> found;
    std::size_t pos = 0;
    while (true) {
        const auto open = token.find('{', pos);
        if (open == std::string_view::npos) {
            break;
        }
        const auto close = token.find('}', open);
        if (close == std::string_view::npos) {
            break;
        }
        found.emplace_back(token.substr(open, close - open + 1));
        pos = close + 1;
    }
    return found;
}

}  // namespace

std::int64_t timeline_duration_ms(std::span<const MediaAsset> narrations, Padding padding) {
    std::int64_t total = 0;
    for (const auto& narration : narrations) {
        total += padding.lead_ms + narration.duration_ms + padding.tail_ms;
    }
    return total;
}

Timeline build_timeline(const SceneSet& scenes, const AssetBundle& assets, Padding padding, std::int64_t fade_out_ms) {
    if (padding.lead_ms < 0 || padding.tail_ms < 0) {
        throw std::invalid_argument("padding must be non-negative");
    }
    Timeline timeline;
    timeline.padding = padding;
    std::int64_t cursor = 0;
    for (std::size_t i = 0; i < scenes.scenes.size(); ++i) {
        const Scene& scene = scenes.scenes[i];
        if (i >= assets.images.size() || assets.images[i].kind != MediaKind::Image) {
            throw MissingAsset(scene.index, "image");
        }
        if (i >= assets.narrations.size() || assets.narrations[i].kind != MediaKind::Narration ||
            assets.narrations[i].duration_ms <= 0) {
            throw MissingAsset(scene.index, "narration");
        }
        Slide slide;
        slide.scene_index = scene.index;
        slide.image_digest = assets.images[i].digest;
        slide.narration_digest = assets.narrations[i].digest;
        slide.caption = scene.caption;
        slide.start_ms = cursor;
        cursor += padding.lead_ms + assets.narrations[i].duration_ms + padding.tail_ms;
        slide.end_ms = cursor;
        timeline.slides.push_back(std::move(slide));
    }
    timeline.total_duration_ms = cursor;
    timeline.fade_out_ms = std::min(std::max<std::int64_t>(fade_out_ms, 0), cursor / 2);
    if (assets.music) {
        timeline.music_digest = assets.music->digest;
        timeline.music_duration_ms = assets.music->duration_ms;
    }
    return timeline;
}

std::vector<SubtitleCue> subtitle_cues(const Timeline& timeline) {
    std::vector<SubtitleCue> cues;
    int index = 1;
    for (const auto& slide : timeline.slides) {
        cues.push_back(SubtitleCue{index++, slide.start_ms + timeline.padding.lead_ms,
                                   slide.end_ms - timeline.padding.tail_ms, slide.caption});
    }
    return cues;
}

std::string srt_timestamp(std::int64_t ms) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld,%03lld", static_cast<long long>(ms / 3'600'000),
                  static_cast<long long>((ms / 60'000) % 60), static_cast<long long>((ms / 1000) % 60),
                  static_cast<long long>(ms % 1000));
    return buf;
}

std::string emit_subtitles(const Timeline& timeline) {
    std::string out;
    for (const auto& cue : subtitle_cues(timeline)) {
        out += std::to_string(cue.index) + "\n";
        out += srt_timestamp(cue.start_ms) + " --> " + srt_timestamp(cue.end_ms) + "\n";
        out += cue.text + "\n\n";
    }
    return out;
}

std::vector<SubtitleCue> parse_subrip(std::string_view document) {
    std::vector<SubtitleCue> cues;
    if (document.empty()) {
        return cues;
    }
    auto lines = text_util::split(document, '\n');
    // A well-formed document ends with "\n\n", leaving two empty trailing fields.
    std::size_t i = 0;
    while (i < lines.size()) {
        if (lines[i].empty()) {
            ++i;
            continue;
        }
        if (i + 2 >= lines.size()) {
            throw std::invalid_argument("truncated SubRip block");
        }
        SubtitleCue cue;
        auto [p, ec] = std::from_chars(lines[i].data(), lines[i].data() + lines[i].size(), cue.index);
        if (ec != std::errc{} || p != lines[i].data() + lines[i].size()) {
            throw std::invalid_argument("malformed SubRip index: " + std::string(lines[i]));
        }
        const std::string_view timing = lines[i + 1];
        const auto arrow = timing.find(" --> ");
        if (arrow == std::string_view::npos) {
            throw std::invalid_argument("malformed SubRip timing line: " + std::string(timing));
        }
        cue.start_ms = parse_timestamp(timing.substr(0, arrow));
        cue.end_ms = parse_timestamp(timing.substr(arrow + 5));
        std::size_t j = i + 2;
        std::string text;
        while (j < lines.size() && !lines[j].empty()) {
            if (!text.empty()) {
                text += '\n';
            }
            text += lines[j];
            ++j;
        }
        cue.text = std::move(text);
        cues.push_back(std::move(cue));
        i = j;
    }
    return cues;
}

EncoderTemplate default_encoder_template() {
    return EncoderTemplate{
        "ffmpeg-slideshow",
        {"ffmpeg", "-y", "-hide_banner", "-loglevel", "error", "{inputs}", "-i", "{music}", "-i", "{subtitles}",
         "{narration_inputs}", "-filter_complex", "{filter_graph}", "-map", "[v]", "-map", "[a]", "-map",
         "{subtitles_index}:s", "-c:v", "libx264", "-pix_fmt", "yuv420p", "-r", "25", "-c:a", "aac", "-c:s",
         "mov_text", "-t", "{total}", "{output}"}};
}

const std::vector<std::string>& known_placeholders() {
    static const std::vector<std::string> names{
        "{inputs}",   "{narration_inputs}", "{durations}",     "{music}",      "{subtitles}",
        "{output}",   "{fade_out}",         "{fade_start}",    "{total}",      "{count}",
        "{music_index}", "{subtitles_index}", "{filter_graph}"};
    return names;
}

std::vector<std::string> unknown_placeholders(const std::vector<std::string>& tokens) {
    const auto& known = known_placeholders();
    std::vector<std::string> unknown;
    for (const auto& token : tokens) {
        for (auto& name : placeholders_in(token)) {
            if (std::find(known.begin(), known.end(), name) == known.end() &&
                std::find(unknown.begin(), unknown.end(), name) == unknown.end()) {
                unknown.push_back(std::move(name));
            }
        }
    }
    return unknown;
}

MuxPlan plan_mux(const Timeline& timeline, const AssetPaths& paths, const std::string& output_path,
                 const EncoderTemplate& encoder, bool exact_music) {
    const std::size_t n = timeline.slides.size();
    for (std::size_t i = 0; i < n; ++i) {
        const int scene = timeline.slides[i].scene_index;
        if (i >= paths.images.size() || paths.images[i].empty()) {
            throw MissingAsset(scene, "image");
        }
        if (i >= paths.narrations.size() || paths.narrations[i].empty()) {
            throw MissingAsset(scene, "narration");
        }
    }
    if (paths.music.empty() || timeline.music_digest.empty()) {
        throw MissingAsset(0, "music");
    }
    if (paths.subtitles.empty()) {
        throw MissingAsset(0, "subtitles");
    }
    if (exact_music && timeline.music_duration_ms < timeline.total_duration_ms) {
        throw PlanError("music lasts " + seconds(timeline.music_duration_ms) + " s but the timeline needs " +
                        seconds(timeline.total_duration_ms) + " s");
    }

    std::string durations;
    for (const auto& slide : timeline.slides) {
        if (!durations.empty()) {
            durations += ',';
        }
        durations += seconds(slide.duration_ms());
    }
    const std::map<std::string, std::string, std::less<>> scalars{
        {"{durations}", durations},
        {"{music}", paths.music},
        {"{subtitles}", paths.subtitles},
        {"{output}", output_path},
        {"{fade_out}", seconds(timeline.fade_out_ms)},
        {"{fade_start}", seconds(timeline.total_duration_ms - timeline.fade_out_ms)},
        {"{total}", seconds(timeline.total_duration_ms)},
        {"{count}", std::to_string(n)},
        {"{music_index}", std::to_string(n)},
        {"{subtitles_index}", std::to_string(n + 1)},
        {"{filter_graph}", filter_graph(timeline)},
    };

    MuxPlan plan;
    plan.template_name = encoder.name;
    plan.output = output_path;
    for (std::size_t i = 0; i < n; ++i) {
        plan.inputs.push_back(paths.images[i]);
        plan.narration_inputs.push_back(paths.narrations[i]);
    }
    plan.inputs.push_back(paths.music);
    plan.inputs.push_back(paths.subtitles);

    for (const auto& token : encoder.tokens) {
        if (token == kListInputs) {
            for (std::size_t i = 0; i < n; ++i) {
                plan.args.insert(plan.args.end(), {"-loop", "1", "-t", seconds(timeline.slides[i].duration_ms()),
                                                   "-i", paths.images[i]});
            }
        } else if (token == kListNarrations) {
            for (std::size_t i = 0; i < n; ++i) {
                plan.args.insert(plan.args.end(), {"-i", paths.narrations[i]});
            }
        } else {
            plan.args.push_back(substitute(token, scalars));
        }
    }
    return plan;
}

std::string mux_plan_to_json(const MuxPlan& plan) {
    nlohmann::ordered_json j;
    j["template"] = plan.template_name;
    j["inputs"] = plan.inputs;
    j["narration_inputs"] = plan.narration_inputs;
    j["output"] = plan.output;
    j["args"] = plan.args;
    return j.dump(2) + "\n";
}

int execute_mux_plan(const MuxPlan& plan, const std::filesystem::path& working_dir) {
    if (plan.args.empty()) {
        throw std::invalid_argument("empty mux plan");
    }
    std::vector<char*> argv;
    std::vector<std::string> storage = plan.args;
    for (auto& arg : storage) {
        argv.push_back(arg.data());
    }
    argv.push_back(nullptr);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    const std::string dir = working_dir.string();
    posix_spawn_file_actions_addchdir_np(&actions, dir.c_str());
    pid_t pid = 0;
    const int rc = posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) {
        return 127;
    }
    int status = 0;
    if (waitpid(pid, &status, 0) < 0) {
        return 127;
    }
    return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
}

}  // namespace storyreel
