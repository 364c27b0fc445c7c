#include <doctest.h>

#include <random>

#include "storyreel/role_engine.hpp"
#include "support.hpp"

using namespace storyreel;

namespace {

const char* kSpec =
    "# Editor\n\n## Task Objectives\nWrite the script.\n\n## Input and Output Requirements\n"
    "Reply with:\n    SCENE 1:\n    CAPTION: <text>\n    NARRATION: <text>\n\n"
    "## Performance Standards\nBe concise.\n";

std::size_t occurrences(const std::string& text, const std::string& needle) {
    std::size_t count = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) {
        ++count;
    }
    return count;
}

std::string random_text(std::mt19937& rng, std::size_t max_len) {
    static const std::string alphabet = "SCENE CAPTION NARRATION IMAGE MUSIC MOOD APPROVE REVISE:0123456789 \n\t:-ab\xE2\x80\x94";
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    std::string out;
    for (std::size_t n = len(rng); n > 0; --n) {
        out += alphabet[pick(rng)];
    }
    return out;
}

std::string random_field(std::mt19937& rng) {
    static const std::vector<std::string> words{"owl", "dusk", "river", "quiet", "light", "moves", "über",
                                                "café", "slow", "3", "night-time", "\xE2\x80\x94"};
    std::uniform_int_distribution<std::size_t> count(1, 8);
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    std::string out;
    for (std::size_t n = count(rng); n > 0; --n) {
        if (!out.empty()) {
            out += ' ';
        }
        out += words[pick(rng)];
    }
    return out;
}

}  // namespace

TEST_CASE("role names") {
    for (RoleId role : kAllRoles) {
        CHECK(parse_role(role_key(role)) == role);
        CHECK(parse_role(to_string(role)) == role);
    }
    CHECK_THROWS(parse_role("producer"));
}

TEST_CASE("role spec parsing and system prompt construction") {
    const RoleSpec spec = parse_role_spec(kSpec, RoleId::Editor, "editor.md");
    CHECK(spec.task_objectives == "Write the script.");
    const std::string prompt = build_system_prompt(spec, "");
    CHECK(occurrences(prompt, "Task Objectives") == 1);
    CHECK(occurrences(prompt, "Input and Output Requirements") == 1);
    CHECK(occurrences(prompt, "Performance Standards") == 1);
    CHECK(prompt.find("Task Objectives") < prompt.find("Input and Output Requirements"));
    CHECK(prompt.find("Input and Output Requirements") < prompt.find("Performance Standards"));
    CHECK(prompt.find("Performance Standards") < prompt.find("Project Context"));
    CHECK(build_system_prompt(spec, "ctx") == build_system_prompt(spec, "ctx"));
    CHECK(build_system_prompt(spec, "five scenes").find("five scenes") != std::string::npos);
}

TEST_CASE("bundled painter spec embeds its schema line verbatim") {
    const RoleSpec painter = load_role_spec(testing::data_dir() / "roles" / "painter.md", RoleId::Painter);
    CHECK(painter.io_requirements.find("IMAGE 1: <detailed image prompt>") != std::string::npos);
    CHECK(build_system_prompt(painter, "").find("IMAGE 1: <detailed image prompt>") != std::string::npos);
    const auto specs = load_role_specs(testing::data_dir() / "roles");
    REQUIRE(specs.size() == 4);
    CHECK(specs[0].role == RoleId::Director);
    CHECK(specs[3].role == RoleId::Composer);
}

TEST_CASE("role spec validation names the file and the section") {
    const std::string missing = "## Task Objectives\nx\n## Input and Output Requirements\ny\n";
    try {
        parse_role_spec(missing, RoleId::Editor, "editor.md");
        FAIL("expected RoleSpecError");
    } catch (const RoleSpecError& e) {
        CHECK(e.source() == "editor.md");
        CHECK(e.section() == "Performance Standards");
        CHECK(std::string(e.what()).find("Performance Standards") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_role_spec("## Task Objectives\n\n## Input and Output Requirements\ny\n"
                                    "## Performance Standards\nz\n",
                                    RoleId::Editor, "e.md"),
                    RoleSpecError);
    CHECK_THROWS_AS(parse_role_spec(std::string(kSpec) + "## Task Objectives\nagain\n", RoleId::Editor, "e.md"),
                    RoleSpecError);
    CHECK_THROWS_AS(load_role_spec("/nonexistent/editor.md", RoleId::Editor), RoleSpecError);
}

TEST_CASE("parse_scene_set examples") {
    const std::string two = "SCENE 1:\nCAPTION: Owls at dusk\nNARRATION: The owl wakes.\n\n"
                            "SCENE 2:\nCAPTION: The hunt\nNARRATION: It glides low.\n";
    const SceneSet scenes = parse_scene_set(two, 2);
    REQUIRE(scenes.scenes.size() == 2);
    CHECK(scenes.scenes[0] == Scene{1, "Owls at dusk", "The owl wakes."});
    CHECK(scenes.scenes[1].caption == "The hunt");
    CHECK_THROWS_AS(parse_scene_set(two, 3), SchemaViolation);

    const std::string missing = "SCENE 1:\nCAPTION: a\nNARRATION: b\nSCENE 2:\nCAPTION: c\n";
    try {
        parse_scene_set(missing, 2);
        FAIL("expected SchemaViolation");
    } catch (const SchemaViolation& e) {
        CHECK(e.scene() == 2);
        CHECK(std::string(e.what()).find("scene 2") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_scene_set("SCENE 1:\nCAPTION: a\nNARRATION: b\nSCENE 1:\nCAPTION: c\nNARRATION: d\n", 2),
                    SchemaViolation);
    CHECK_THROWS_AS(parse_scene_set(two, 0), std::invalid_argument);
}

TEST_CASE("parse_image_prompts examples") {
    const auto prompts = parse_image_prompts("IMAGE 1: owl\nIMAGE 2: river\nIMAGE 3: moon\n", 3);
    CHECK(prompts.prompts == std::vector<std::string>{"owl", "river", "moon"});
    CHECK_THROWS_AS(parse_image_prompts("IMAGE 1: a\nIMAGE 2: b\nIMAGE 2: c\n", 3), SchemaViolation);
    CHECK_THROWS_AS(parse_image_prompts("IMAGE 1:\nIMAGE 2: b\n", 2), SchemaViolation);
}

TEST_CASE("parse_music_prompt examples") {
    CHECK(parse_music_prompt("MUSIC: gentle piano over soft strings\nMOOD: warm") ==
          MusicPrompt{"gentle piano over soft strings", "warm"});
    CHECK(parse_music_prompt("MUSIC: upbeat brass") == MusicPrompt{"upbeat brass", ""});
    CHECK_THROWS_AS(parse_music_prompt("here is some music"), SchemaViolation);
    CHECK_THROWS_AS(parse_music_prompt("MUSIC:   "), SchemaViolation);
}

TEST_CASE("parse_verdict examples") {
    CHECK(std::holds_alternative<Approved>(parse_verdict("APPROVE")));
    CHECK(std::holds_alternative<Approved>(parse_verdict("\n  APPROVE\nGreat work.")));
    CHECK(parse_verdict("REVISE: tighten scene 3 narration to match the pacing") ==
          ApprovalVerdict{RevisionRequested{"tighten scene 3 narration to match the pacing"}});
    CHECK_THROWS_AS(parse_verdict("Looks good to me"), SchemaViolation);
    CHECK_THROWS_AS(parse_verdict("REVISE:"), SchemaViolation);
    const ApprovalVerdict revise = RevisionRequested{"make scene 2 brighter"};
    CHECK(parse_verdict(emit_verdict(revise)) == revise);
    CHECK(parse_verdict(emit_verdict(Approved{})) == ApprovalVerdict{Approved{}});
}

TEST_CASE("parse_directive") {
    const Directive d = parse_directive("DIRECTIVE: write five scenes\nkeep it warm", RoleId::Editor);
    CHECK(d.from == RoleId::Director);
    CHECK(d.to == RoleId::Editor);
    CHECK(parse_directive(emit_directive(d), RoleId::Editor) == d);
    CHECK_THROWS_AS(parse_directive("Sure, here is the plan", RoleId::Editor), SchemaViolation);
    CHECK_THROWS(parse_directive("DIRECTIVE: x", RoleId::Director));
}

TEST_CASE("emit/parse round-trips over generated artifacts") {
    std::mt19937 rng(42);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 8);
        SceneSet scenes;
        ImagePromptSet images;
        for (int i = 1; i <= n; ++i) {
            scenes.scenes.push_back(Scene{i, random_field(rng), random_field(rng)});
            images.prompts.push_back(random_field(rng));
        }
        CHECK(parse_scene_set(emit_scene_set(scenes), n) == scenes);
        CHECK(parse_image_prompts(emit_image_prompts(images), n) == images);
        const MusicPrompt music{random_field(rng), rng() % 2 ? random_field(rng) : ""};
        CHECK(parse_music_prompt(emit_music_prompt(music)) == music);
    }
}

TEST_CASE("parsers never fail with anything but SchemaViolation") {
    std::mt19937 rng(7);
    int parsed = 0;
    for (int trial = 0; trial < 3000; ++trial) {
        const std::string text = random_text(rng, 160);
        auto attempt = [&](auto&& fn) {
            try {
                fn();
                ++parsed;
            } catch (const SchemaViolation&) {
            }
        };
        attempt([&] { parse_scene_set(text, 1 + trial % 3); });
        attempt([&] { parse_image_prompts(text, 1 + trial % 3); });
        attempt([&] { parse_music_prompt(text); });
        attempt([&] { parse_verdict(text); });
        attempt([&] { parse_directive(text, RoleId::Painter); });
    }
    CHECK(parsed >= 0);
}

TEST_CASE("detect_confusion examples") {
    const auto patterns = default_refusal_patterns();
    CHECK(detect_confusion("As a text-based AI, I cannot generate images.", patterns));
    CHECK_FALSE(detect_confusion("SCENE 1:\nCAPTION: Owls at dusk\nNARRATION: ...", patterns));
    CHECK_FALSE(detect_confusion("The AI cannot be blamed for the owl's stare", patterns));
}

TEST_CASE("confusion window counts characters, not bytes") {
    const std::vector<std::string> patterns{"i cannot"};
    std::string prefix;
    for (int i = 0; i < 180; ++i) {
        prefix += "é";  // two bytes each
    }
    CHECK(detect_confusion(prefix + " I cannot do that", patterns));
    CHECK_FALSE(detect_confusion(prefix + std::string(30, ' ') + "I cannot do that", patterns));
    CHECK(detect_confusion(std::string(191, 'x') + " I cannot", patterns));
    CHECK_FALSE(detect_confusion(std::string(192, 'x') + " I cannot", patterns));
}

TEST_CASE("detect_confusion against hand-built benign and refusal replies") {
    const auto patterns = default_refusal_patterns();
    const std::vector<std::string> refusals{
        "I cannot create images, but here is a description.",
        "As an AI language model, I can't draw pictures.",
        "i am a text-based model and cannot produce audio",
        "Sorry, I am unable to generate images.",
        "As a text-based AI, I cannot generate images or audio.",
        "Unfortunately I cannot compose music files.",
        "AS AN AI, I do not have the ability to paint.",
        "\n\nI cannot fulfil this request.",
        "Note: I am a text model, so I cannot render sound.",
        "I'm sorry, but as an AI I cannot perform that task.",
    };
    const std::vector<std::string> benign{
        "SCENE 1:\nCAPTION: Owls at dusk\nNARRATION: The owl turns its head.",
        "The AI cannot be blamed for the owl's stare",
        "IMAGE 1: cinematic photograph, owls at dusk, golden hour",
        "MUSIC: gentle piano\nMOOD: warm",
        "APPROVE",
        "REVISE: tighten scene 3 narration to match the pacing",
        "DIRECTIVE: Write a 5-scene script on the theme \"cats stare\".",
        "SCENE 1:\nCAPTION: Robots\nNARRATION: Engineers wonder what an AI cannot see, and the camera shows it.",
        std::string(220, 'x') + " I cannot generate images.",
        "IMAGE 1: a mosaic of a caiman, cannot-miss detail, macro lens",
    };
    for (const auto& reply : refusals) {
        CHECK_MESSAGE(detect_confusion(reply, patterns), reply);
    }
    for (const auto& reply : benign) {
        CHECK_MESSAGE(!detect_confusion(reply, patterns), reply);
    }
}

TEST_CASE("detect_confusion is monotone in the pattern list") {
    std::vector<std::string> patterns{"as an ai"};
    const std::vector<std::string> replies{"As an AI I cannot", "I cannot", "fine", "i am a text bot"};
    std::vector<bool> before;
    for (const auto& reply : replies) {
        before.push_back(detect_confusion(reply, patterns));
    }
    patterns.push_back("i cannot");
    for (std::size_t i = 0; i < replies.size(); ++i) {
        if (before[i]) {
            CHECK(detect_confusion(replies[i], patterns));
        }
    }
}

TEST_CASE("repetitive visuals use token-set overlap") {
    CHECK(token_set_overlap("owl at dusk", "Owl, at DUSK!") == doctest::Approx(1.0));
    CHECK(token_set_overlap("a b", "c d") == doctest::Approx(0.0));
    const ImagePromptSet prompts{{"cinematic photo of an owl at dusk", "river at noon",
                                  "cinematic photo of an owl at dusk, again"}};
    const auto flags = detect_repetitive_visuals(prompts, 0.8);
    REQUIRE(flags.size() == 1);
    CHECK(flags[0] == InappropriateFlag{RepetitiveVisuals{1, 3}});
    CHECK(detect_repetitive_visuals(ImagePromptSet{{"a b c", "d e f"}}, 0.8).empty());
}

TEST_CASE("caption block lists every caption") {
    const SceneSet scenes{{Scene{1, "Owls at dusk", "n"}, Scene{2, "The hunt", "m"}}};
    CHECK(caption_block(scenes) == "CAPTION 1: Owls at dusk\nCAPTION 2: The hunt\n");
}
