#include <doctest.h>

#include <json.hpp>
#include <random>

#include "storyreel/assembly.hpp"
#include "support.hpp"

using namespace storyreel;

namespace {

MediaAsset narration(std::int64_t ms, int n = 0) {
    return MediaAsset::make(MediaKind::Narration, make_wav(ms, "n" + std::to_string(n)), "wav", ms, false, 0);
}

MediaAsset image(int n) { return MediaAsset::make(MediaKind::Image, make_ppm("img" + std::to_string(n)), "ppm", 0, false, 0); }

MediaAsset music(std::int64_t ms) { return MediaAsset::make(MediaKind::Music, make_wav(ms, "m"), "wav", ms, false, 0); }

struct Fixture {
    SceneSet scenes;
    AssetBundle assets;
};

Fixture fixture(const std::vector<std::int64_t>& durations, const std::vector<std::string>& captions,
                std::optional<std::int64_t> music_ms = std::nullopt) {
    Fixture f;
    for (std::size_t i = 0; i < durations.size(); ++i) {
        const int index = static_cast<int>(i) + 1;
        f.scenes.scenes.push_back(Scene{index, captions[i], "Narration " + std::to_string(index)});
        f.assets.images.push_back(image(index));
        f.assets.narrations.push_back(narration(durations[i], index));
    }
    if (music_ms) {
        f.assets.music = music(*music_ms);
    }
    return f;
}

AssetPaths paths_for(std::size_t n) {
    AssetPaths paths;
    for (std::size_t i = 1; i <= n; ++i) {
        paths.images.push_back("assets/image-0" + std::to_string(i) + ".ppm");
        paths.narrations.push_back("assets/narration-0" + std::to_string(i) + ".wav");
    }
    paths.music = "assets/music.wav";
    paths.subtitles = "subtitles.srt";
    return paths;
}

}  // namespace

TEST_CASE("two-scene timeline and its subtitles") {
    const Fixture f = fixture({3200, 4000}, {"Owls at dusk", "Moonlit flight"}, 9200);
    const Timeline timeline = build_timeline(f.scenes, f.assets, Padding{500, 500});
    REQUIRE(timeline.slides.size() == 2);
    CHECK(timeline.slides[0].start_ms == 0);
    CHECK(timeline.slides[0].end_ms == 4200);
    CHECK(timeline.slides[1].start_ms == 4200);
    CHECK(timeline.slides[1].end_ms == 9200);
    CHECK(timeline.total_duration_ms == 9200);
    CHECK(timeline_duration_ms(f.assets.narrations, Padding{500, 500}) == 9200);

    const std::string srt = emit_subtitles(timeline);
    CHECK(srt.starts_with("1\n00:00:00,500 --> 00:00:03,700\nOwls at dusk\n\n"));
    CHECK(srt ==
          "1\n00:00:00,500 --> 00:00:03,700\nOwls at dusk\n\n"
          "2\n00:00:04,700 --> 00:00:08,700\nMoonlit flight\n\n");
    CHECK(parse_subrip(srt) == subtitle_cues(timeline));
}

TEST_CASE("timestamps across minute and hour boundaries") {
    const Fixture f = fixture({58400, 1300}, {"First", "Second"});
    const std::string srt = emit_subtitles(build_timeline(f.scenes, f.assets, Padding{500, 500}));
    CHECK(srt.find("2\n00:00:59,900 --> 00:01:01,200\nSecond\n") != std::string::npos);
    CHECK(srt_timestamp(0) == "00:00:00,000");
    CHECK(srt_timestamp(3'600'000 + 61'001) == "01:01:01,001");
}

TEST_CASE("timeline errors") {
    Fixture f = fixture({1000, 1000}, {"a", "b"});
    f.assets.narrations.pop_back();
    try {
        build_timeline(f.scenes, f.assets, Padding{});
        FAIL("expected MissingAsset");
    } catch (const MissingAsset& e) {
        CHECK(e.scene() == 2);
        CHECK(e.kind() == "narration");
    }
    Fixture g = fixture({1000}, {"a"});
    g.assets.images.clear();
    CHECK_THROWS_AS(build_timeline(g.scenes, g.assets, Padding{}), MissingAsset);
    CHECK_THROWS_AS(build_timeline(g.scenes, g.assets, Padding{-1, 0}), std::invalid_argument);
}

TEST_CASE("fade-out is clamped to half the timeline") {
    const Fixture f = fixture({1000}, {"a"}, 2000);
    CHECK(build_timeline(f.scenes, f.assets, Padding{500, 500}, 5000).fade_out_ms == 1000);
    CHECK(build_timeline(f.scenes, f.assets, Padding{500, 500}, 300).fade_out_ms == 300);
}

TEST_CASE("SubRip parser rejects malformed documents") {
    CHECK(parse_subrip("").empty());
    CHECK_THROWS(parse_subrip("1\n00:00:00,500 -> 00:00:01,000\nx\n\n"));
    CHECK_THROWS(parse_subrip("x\n00:00:00,500 --> 00:00:01,000\nx\n\n"));
    CHECK_THROWS(parse_subrip("1\n00:00:00.500 --> 00:00:01,000\nx\n\n"));
    CHECK_THROWS(parse_subrip("1\n00:61:00,500 --> 00:62:01,000\nx\n\n"));
    CHECK_THROWS(parse_subrip("1\n"));
}

TEST_CASE("mux plan for a two-scene run") {
    const Fixture f = fixture({3200, 4000}, {"Owls at dusk", "Moonlit flight"}, 9200);
    const Timeline timeline = build_timeline(f.scenes, f.assets, Padding{500, 500});
    const MuxPlan plan = plan_mux(timeline, paths_for(2), "video.mp4", default_encoder_template());
    CHECK(plan.inputs == std::vector<std::string>{"assets/image-01.ppm", "assets/image-02.ppm", "assets/music.wav",
                                                 "subtitles.srt"});
    CHECK(plan.narration_inputs ==
          std::vector<std::string>{"assets/narration-01.wav", "assets/narration-02.wav"});
    CHECK(plan.output == "video.mp4");
    CHECK(plan.args.front() == "ffmpeg");
    CHECK(plan.args.back() == "video.mp4");
    for (const auto& arg : plan.args) {
        CHECK(unknown_placeholders({arg}).empty());
        CHECK(arg.find('{') == std::string::npos);
    }
    const auto t = std::find(plan.args.begin(), plan.args.end(), "-t");
    REQUIRE(t != plan.args.end());
    CHECK(*(t + 1) == "4.200");

    const auto parsed = nlohmann::json::parse(mux_plan_to_json(plan));
    CHECK(parsed["inputs"].size() == 4);
    CHECK(parsed["args"].get<std::vector<std::string>>() == plan.args);
}

TEST_CASE("mux plan errors") {
    const Fixture f = fixture({3200, 4000}, {"a", "b"}, 9000);
    const Timeline timeline = build_timeline(f.scenes, f.assets, Padding{500, 500});
    CHECK_THROWS_AS(plan_mux(timeline, paths_for(2), "video.mp4", default_encoder_template(), true), PlanError);
    CHECK_NOTHROW(plan_mux(timeline, paths_for(2), "video.mp4", default_encoder_template(), false));

    EncoderTemplate bad = default_encoder_template();
    bad.tokens.push_back("{bitrate}");
    CHECK(unknown_placeholders(bad.tokens) == std::vector<std::string>{"{bitrate}"});
    try {
        plan_mux(timeline, paths_for(2), "video.mp4", bad, false);
        FAIL("expected TemplateError");
    } catch (const TemplateError& e) {
        CHECK(e.placeholder() == "{bitrate}");
    }

    AssetPaths missing = paths_for(2);
    missing.narrations.pop_back();
    CHECK_THROWS_AS(plan_mux(timeline, missing, "video.mp4", default_encoder_template(), false), MissingAsset);
    const Fixture no_music = fixture({1000}, {"a"});
    CHECK_THROWS_AS(plan_mux(build_timeline(no_music.scenes, no_music.assets, Padding{}), paths_for(1), "v.mp4",
                             default_encoder_template(), false),
                    MissingAsset);
    CHECK_THROWS(execute_mux_plan(MuxPlan{}, std::filesystem::temp_directory_path()));
}

TEST_CASE("random timelines keep their invariants") {
    std::mt19937_64 rng(20240611);
    std::uniform_int_distribution<int> count(1, 8);
    std::uniform_int_distribution<std::int64_t> millis(1, 120'000);
    std::uniform_int_distribution<std::int64_t> pad(0, 1500);
    const std::vector<std::string> words{"owl", "moon", "river", "Ünïcödé", "fox, den", "night"};
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = count(rng);
        std::vector<std::int64_t> durations;
        std::vector<std::string> captions;
        std::int64_t sum = 0;
        for (int i = 0; i < n; ++i) {
            durations.push_back(millis(rng));
            sum += durations.back();
            captions.push_back(words[static_cast<std::size_t>(rng() % words.size())] + " " + std::to_string(i));
        }
        const Padding padding{pad(rng), pad(rng)};
        const Fixture f = fixture(durations, captions);
        const Timeline timeline = build_timeline(f.scenes, f.assets, padding);
        CHECK(timeline.total_duration_ms == sum + n * (padding.lead_ms + padding.tail_ms));
        std::int64_t cursor = 0;
        for (int i = 0; i < n; ++i) {
            const Slide& slide = timeline.slides[static_cast<std::size_t>(i)];
            CHECK(slide.start_ms == cursor);
            CHECK(slide.duration_ms() == padding.lead_ms + durations[static_cast<std::size_t>(i)] + padding.tail_ms);
            cursor = slide.end_ms;
        }
        const auto cues = parse_subrip(emit_subtitles(timeline));
        REQUIRE(cues.size() == static_cast<std::size_t>(n));
        CHECK(cues == subtitle_cues(timeline));
        for (std::size_t i = 0; i < cues.size(); ++i) {
            CHECK(cues[i].start_ms < cues[i].end_ms);
            if (i > 0) {
                CHECK(cues[i - 1].end_ms <= cues[i].start_ms);
            }
        }
    }
}
