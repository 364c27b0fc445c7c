#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "storyreel/backends.hpp"
#include "storyreel/role_engine.hpp"

namespace storyreel {

/// Generated media for one run, in scene order.
struct AssetBundle {
    std::vector<MediaAsset> images;
    std::vector<MediaAsset> narrations;
    std::optional<MediaAsset> music;
};

class MissingAsset : public std::runtime_error {
public:
    MissingAsset(int scene, std::string kind)
        : std::runtime_error(scene > 0 ? "missing " + kind + " asset for scene " + std::to_string(scene)
                                       : "missing " + kind + " asset"),
          scene_(scene),
          kind_(std::move(kind)) {}
    int scene() const { return scene_; }
    const std::string& kind() const { return kind_; }

private:
    int scene_;
    std::string kind_;
};

class TemplateError : public std::runtime_error {
public:
    explicit TemplateError(const std::string& placeholder, const std::string& what)
        : std::runtime_error(what), placeholder_(placeholder) {}
    const std::string& placeholder() const { return placeholder_; }

private:
    std::string placeholder_;
};

/// Music shorter than the timeline where exact lengths are required.
class PlanError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Padding {
    std::int64_t lead_ms = 500;
    std::int64_t tail_ms = 500;
};

struct Slide {
    int scene_index = 0;
    std::string image_digest;
    std::string narration_digest;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
    std::string caption;

    std::int64_t duration_ms() const { return end_ms - start_ms; }
    bool operator==(const Slide&) const = default;
};

struct Timeline {
    std::vector<Slide> slides;
    std::string music_digest;
    std::int64_t music_duration_ms = 0;
    std::int64_t total_duration_ms = 0;
    std::int64_t fade_out_ms = 0;
    Padding padding;
};

/// Slide i lasts lead + narration(i) + tail; slides are contiguous from 0.
/// Music is optional here so the music target can be computed before composing.
/// The fade-out is clamped to half the total so it always fits.
Timeline build_timeline(const SceneSet& scenes, const AssetBundle& assets, Padding padding,
                        std::int64_t fade_out_ms = 2000);

/// Sum of lead + narration + tail over all scenes; the music target duration.
std::int64_t timeline_duration_ms(std::span<const MediaAsset> narrations, Padding padding);

struct SubtitleCue {
    int index = 0;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
    std::string text;
    bool operator==(const SubtitleCue&) const = default;
};

std::vector<SubtitleCue> subtitle_cues(const Timeline& timeline);

/// `HH:MM:SS,mmm`.
std::string srt_timestamp(std::int64_t ms);

/// SubRip document: one block per slide, blank-line separated, newline terminated.
std::string emit_subtitles(const Timeline& timeline);

/// Strict SubRip reader for documents produced by emit_subtitles.
std::vector<SubtitleCue> parse_subrip(std::string_view document);

struct EncoderTemplate {
    std::string name = "ffmpeg-slideshow";
    std::vector<std::string> tokens;
};

/// Default template for a stock ffmpeg build.
EncoderTemplate default_encoder_template();

/// Placeholders a template may use.
const std::vector<std::string>& known_placeholders();

/// Placeholders in `tokens` that are not known; empty when the template is usable.
std::vector<std::string> unknown_placeholders(const std::vector<std::string>& tokens);

struct AssetPaths {
    std::vector<std::string> images;
    std::vector<std::string> narrations;
    std::string music;
    std::string subtitles;
};

struct MuxPlan {
    std::string template_name;
    std::vector<std::string> args;
    /// Images in slide order, then music, then subtitles.
    std::vector<std::string> inputs;
    std::vector<std::string> narration_inputs;
    std::string output;
    bool operator==(const MuxPlan&) const = default;
};

/// Renders the encoder argument vector. `exact_music` rejects music shorter
/// than the timeline (mock mode); otherwise the plan trims and fades.
MuxPlan plan_mux(const Timeline& timeline, const AssetPaths& paths, const std::string& output_path,
                 const EncoderTemplate& encoder, bool exact_music = true);

std::string mux_plan_to_json(const MuxPlan& plan);

/// Runs the plan's argument vector without a shell, in `working_dir`.
/// Returns the process exit status.
int execute_mux_plan(const MuxPlan& plan, const std::filesystem::path& working_dir);

}  // namespace storyreel
