#include "storyreel/role_engine.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "storyreel/text_util.hpp"

namespace storyreel {

namespace {

std::optional<std::string_view> after_keyword(std::string_view line, std::string_view keyword) {
    if (line.size() > keyword.size() && line.substr(0, keyword.size()) == keyword &&
        line[keyword.size()] == ':') {
        return text_util::trim(line.substr(keyword.size() + 1));
    }
    return std::nullopt;
}

struct IndexedLine {
    int index = 0;
    std::string_view rest;
};

/// Matches `<KEYWORD> <digits>:<rest>`.
std::optional<IndexedLine> indexed_keyword(std::string_view line, std::string_view keyword) {
    if (line.size() < keyword.size() + 3 || line.substr(0, keyword.size()) != keyword ||
        line[keyword.size()] != ' ') {
        return std::nullopt;
    }
    std::string_view tail = line.substr(keyword.size() + 1);
    int value = 0;
    auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), value);
    if (ec != std::errc{} || ptr == tail.data() || ptr == tail.data() + tail.size() || *ptr != ':') {
        return std::nullopt;
    }
    const auto consumed = static_cast<std::size_t>(ptr - tail.data()) + 1;
    return IndexedLine{value, text_util::trim(tail.substr(consumed))};
}

void require_contiguous(const std::set<int>& seen, int expected_count, std::string_view what) {
    if (static_cast<int>(seen.size()) != expected_count) {
        throw SchemaViolation("expected " + std::to_string(expected_count) + " " + std::string(what) +
                              " entries, found " + std::to_string(seen.size()));
    }
    int want = 1;
    for (int index : seen) {
        if (index != want) {
            throw SchemaViolation(std::string(what) + " indices must run 1.." + std::to_string(expected_count) +
                                      ", missing " + std::to_string(want),
                                  want);
        }
        ++want;
    }
}

std::string_view first_nonblank_line(std::string_view raw, std::size_t& next_line) {
    auto all = text_util::lines(raw);
    for (std::size_t i = 0; i < all.size(); ++i) {
        auto t = text_util::trim(all[i]);
        if (!t.empty()) {
            next_line = i + 1;
            return t;
        }
    }
    next_line = all.size();
    return {};
}

bool is_word_byte(char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

}  // namespace

std::string_view to_string(RoleId role) {
    switch (role) {
        case RoleId::Director:
            return "Director";
        case RoleId::Editor:
            return "Editor";
        case RoleId::Painter:
            return "Painter";
        case RoleId::Composer:
            return "Composer";
    }
    return "?";
}

std::string_view role_key(RoleId role) {
    switch (role) {
        case RoleId::Director:
            return "director";
        case RoleId::Editor:
            return "editor";
        case RoleId::Painter:
            return "painter";
        case RoleId::Composer:
            return "composer";
    }
    return "?";
}

RoleId parse_role(std::string_view text) {
    const std::string lower = text_util::to_lower_ascii(text);
    for (RoleId role : kAllRoles) {
        if (role_key(role) == lower) {
            return role;
        }
    }
    throw std::invalid_argument("unknown role: " + std::string(text));
}

RoleSpec parse_role_spec(std::string_view text, RoleId role, std::string_view source) {
    std::map<std::string, std::string, std::less<>> sections;
    std::string* current = nullptr;
    for (std::string_view line : text_util::lines(text)) {
        std::string_view t = text_util::trim(line);
        if (t.starts_with("## ")) {
            std::string label(text_util::trim(t.substr(3)));
            if (sections.contains(label)) {
                throw RoleSpecError(std::string(source), label,
                                    std::string(source) + ": duplicate section \"" + label + "\"");
            }
            current = &sections[label];
            continue;
        }
        if (current != nullptr) {
            *current += line;
            *current += '\n';
        }
    }
    RoleSpec spec;
    spec.role = role;
    auto take = [&](std::string_view label, std::string& into) {
        auto it = sections.find(label);
        if (it == sections.end() || text_util::trim(it->second).empty()) {
            throw RoleSpecError(std::string(source), std::string(label),
                                std::string(source) + ": missing section \"" + std::string(label) + "\"");
        }
        into = std::string(text_util::trim(it->second));
    };
    take(kTaskObjectivesLabel, spec.task_objectives);
    take(kIoRequirementsLabel, spec.io_requirements);
    take(kPerformanceStandardsLabel, spec.performance_standards);
    return spec;
}

RoleSpec load_role_spec(const std::filesystem::path& path, RoleId role) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw RoleSpecError(path.string(), "", "cannot read role spec file " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_role_spec(buffer.str(), role, path.string());
}

std::vector<RoleSpec> load_role_specs(const std::filesystem::path& dir) {
    std::vector<RoleSpec> specs;
    for (RoleId role : kAllRoles) {
        specs.push_back(load_role_spec(dir / (std::string(role_key(role)) + ".md"), role));
    }
    return specs;
}

std::string build_system_prompt(const RoleSpec& spec, std::string_view project_context) {
    std::string out;
    out += "You are the ";
    out += to_string(spec.role);
    out += " agent of a slideshow storytelling video team.\n\n";
    auto section = [&](std::string_view label, std::string_view body) {
        out += "## ";
        out += label;
        out += '\n';
        out += body;
        out += "\n\n";
    };
    section(kTaskObjectivesLabel, spec.task_objectives);
    section(kIoRequirementsLabel, spec.io_requirements);
    section(kPerformanceStandardsLabel, spec.performance_standards);
    const auto context = text_util::trim(project_context);
    section(kProjectContextLabel, context.empty() ? std::string_view{"(none)"} : context);
    out.pop_back();
    return out;
}

Directive parse_directive(std::string_view raw, RoleId to) {
    std::size_t next = 0;
    std::string_view first = first_nonblank_line(raw, next);
    auto body = after_keyword(first, "DIRECTIVE");
    if (!body) {
        throw SchemaViolation("reply must start with a DIRECTIVE: line");
    }
    std::string content(*body);
    auto all = text_util::lines(raw);
    for (std::size_t i = next; i < all.size(); ++i) {
        content += '\n';
        content += all[i];
    }
    content = std::string(text_util::trim(content));
    if (content.empty()) {
        throw SchemaViolation("DIRECTIVE: line is empty");
    }
    if (to == RoleId::Director) {
        throw std::invalid_argument("directives target downstream roles only");
    }
    return Directive{RoleId::Director, to, std::move(content)};
}

SceneSet parse_scene_set(std::string_view raw, int expected_count) {
    if (expected_count < 1) {
        throw std::invalid_argument("expected_count must be >= 1");
    }
    struct Partial {
        std::optional<std::string> caption;
        std::optional<std::string> narration;
    };
    std::map<int, Partial> scenes;
    int current = 0;
    std::string* last_field = nullptr;
    for (std::string_view line : text_util::lines(raw)) {
        std::string_view t = text_util::trim(line);
        if (t.empty()) {
            last_field = nullptr;
            continue;
        }
        if (auto header = indexed_keyword(t, "SCENE")) {
            if (scenes.contains(header->index)) {
                throw SchemaViolation("duplicate SCENE " + std::to_string(header->index), header->index);
            }
            current = header->index;
            scenes[current];
            last_field = nullptr;
            continue;
        }
        auto caption = after_keyword(t, "CAPTION");
        auto narration = after_keyword(t, "NARRATION");
        if (caption || narration) {
            if (current == 0) {
                throw SchemaViolation("field appears before any SCENE header");
            }
            auto& slot = caption ? scenes[current].caption : scenes[current].narration;
            if (slot) {
                throw SchemaViolation(std::string(caption ? "duplicate CAPTION" : "duplicate NARRATION") +
                                          " in scene " + std::to_string(current),
                                      current);
            }
            slot = std::string(caption ? *caption : *narration);
            last_field = &*slot;
            continue;
        }
        if (last_field != nullptr) {
            *last_field += ' ';
            *last_field += t;
        }
    }
    std::set<int> indices;
    for (const auto& [index, partial] : scenes) {
        indices.insert(index);
    }
    for (const auto& [index, partial] : scenes) {
        if (!partial.caption || partial.caption->empty()) {
            throw SchemaViolation("scene " + std::to_string(index) + " is missing CAPTION", index);
        }
        if (!partial.narration || partial.narration->empty()) {
            throw SchemaViolation("scene " + std::to_string(index) + " is missing NARRATION", index);
        }
    }
    require_contiguous(indices, expected_count, "SCENE");
    SceneSet out;
    for (auto& [index, partial] : scenes) {
        out.scenes.push_back(Scene{index, std::move(*partial.caption), std::move(*partial.narration)});
    }
    return out;
}

ImagePromptSet parse_image_prompts(std::string_view raw, int expected_count) {
    if (expected_count < 1) {
        throw std::invalid_argument("expected_count must be >= 1");
    }
    std::map<int, std::string> prompts;
    for (std::string_view line : text_util::lines(raw)) {
        auto entry = indexed_keyword(text_util::trim(line), "IMAGE");
        if (!entry) {
            continue;
        }
        if (prompts.contains(entry->index)) {
            throw SchemaViolation("duplicate IMAGE " + std::to_string(entry->index), entry->index);
        }
        if (entry->rest.empty()) {
            throw SchemaViolation("IMAGE " + std::to_string(entry->index) + " has an empty prompt", entry->index);
        }
        prompts.emplace(entry->index, std::string(entry->rest));
    }
    std::set<int> indices;
    for (const auto& [index, p] : prompts) {
        indices.insert(index);
    }
    require_contiguous(indices, expected_count, "IMAGE");
    ImagePromptSet out;
    for (auto& [index, p] : prompts) {
        out.prompts.push_back(std::move(p));
    }
    return out;
}

MusicPrompt parse_music_prompt(std::string_view raw) {
    std::optional<std::string> description;
    std::optional<std::string> mood;
    for (std::string_view line : text_util::lines(raw)) {
        std::string_view t = text_util::trim(line);
        if (auto d = after_keyword(t, "MUSIC")) {
            if (description) {
                throw SchemaViolation("duplicate MUSIC line");
            }
            description = std::string(*d);
        } else if (auto m = after_keyword(t, "MOOD")) {
            if (mood) {
                throw SchemaViolation("duplicate MOOD line");
            }
            mood = std::string(*m);
        }
    }
    if (!description || description->empty()) {
        throw SchemaViolation("reply has no nonempty MUSIC: line");
    }
    return MusicPrompt{std::move(*description), mood.value_or("")};
}

ApprovalVerdict parse_verdict(std::string_view raw) {
    std::size_t next = 0;
    std::string_view first = first_nonblank_line(raw, next);
    if (first == "APPROVE") {
        return Approved{};
    }
    if (auto feedback = after_keyword(first, "REVISE"); feedback && !feedback->empty()) {
        return RevisionRequested{std::string(*feedback)};
    }
    throw SchemaViolation("verdict must be APPROVE or REVISE: <feedback>");
}

std::string emit_directive(const Directive& directive) { return "DIRECTIVE: " + directive.content + "\n"; }

std::string emit_scene_set(const SceneSet& scenes) {
    std::string out;
    for (const auto& scene : scenes.scenes) {
        if (!out.empty()) {
            out += '\n';
        }
        out += "SCENE " + std::to_string(scene.index) + ":\n";
        out += "CAPTION: " + scene.caption + "\n";
        out += "NARRATION: " + scene.narration + "\n";
    }
    return out;
}

std::string emit_image_prompts(const ImagePromptSet& prompts) {
    std::string out;
    for (std::size_t i = 0; i < prompts.prompts.size(); ++i) {
        out += "IMAGE " + std::to_string(i + 1) + ": " + prompts.prompts[i] + "\n";
    }
    return out;
}

std::string emit_music_prompt(const MusicPrompt& music) {
    std::string out = "MUSIC: " + music.description + "\n";
    if (!music.mood.empty()) {
        out += "MOOD: " + music.mood + "\n";
    }
    return out;
}

std::string emit_verdict(const ApprovalVerdict& verdict) {
    if (const auto* revise = std::get_if<RevisionRequested>(&verdict)) {
        return "REVISE: " + revise->feedback + "\n";
    }
    return "APPROVE\n";
}

std::string caption_block(const SceneSet& scenes) {
    std::string out;
    for (const auto& scene : scenes.scenes) {
        out += "CAPTION " + std::to_string(scene.index) + ": " + scene.caption + "\n";
    }
    return out;
}

std::vector<std::string> default_refusal_patterns() {
    return {
        "i cannot",
        "i can't",
        "i can not",
        "as an ai",
        "as a text-based ai",
        "as a language model",
        "unable to generate images",
        "unable to create images",
        "i am a text",
        "i'm a text",
        "i am unable",
        "i'm unable",
        "i'm sorry, but",
    };
}

bool detect_confusion(std::string_view raw, std::span<const std::string> patterns) {
    // Window end: byte offset just past the kConfusionWindow-th UTF-8 code point.
    std::size_t end_byte = 0;
    for (std::size_t chars = 0; end_byte < raw.size(); ++end_byte) {
        if ((static_cast<unsigned char>(raw[end_byte]) & 0xC0) != 0x80 && chars++ == kConfusionWindow) {
            break;
        }
    }
    const std::string window = text_util::to_lower_ascii(raw.substr(0, end_byte));
    for (const auto& pattern : patterns) {
        const std::string needle = text_util::to_lower_ascii(pattern);
        if (needle.empty()) {
            continue;
        }
        for (auto at = window.find(needle); at != std::string::npos; at = window.find(needle, at + 1)) {
            const bool start_ok = at == 0 || !is_word_byte(window[at - 1]) || !is_word_byte(needle.front());
            const std::size_t end = at + needle.size();
            const bool end_ok = end >= window.size() || !is_word_byte(window[end]) || !is_word_byte(needle.back());
            if (start_ok && end_ok) {
                return true;
            }
        }
    }
    return false;
}

double token_set_overlap(std::string_view a, std::string_view b) {
    const auto ta = text_util::word_tokens(a);
    const auto tb = text_util::word_tokens(b);
    const std::set<std::string> sa(ta.begin(), ta.end());
    const std::set<std::string> sb(tb.begin(), tb.end());
    if (sa.empty() && sb.empty()) {
        return 1.0;
    }
    std::size_t common = 0;
    for (const auto& token : sa) {
        common += sb.count(token);
    }
    const std::size_t unioned = sa.size() + sb.size() - common;
    return static_cast<double>(common) / static_cast<double>(unioned);
}

std::vector<InappropriateFlag> detect_repetitive_visuals(const ImagePromptSet& prompts, double threshold) {
    std::vector<InappropriateFlag> flags;
    for (std::size_t i = 0; i < prompts.prompts.size(); ++i) {
        for (std::size_t j = i + 1; j < prompts.prompts.size(); ++j) {
            if (token_set_overlap(prompts.prompts[i], prompts.prompts[j]) >= threshold) {
                flags.emplace_back(RepetitiveVisuals{static_cast<int>(i + 1), static_cast<int>(j + 1)});
            }
        }
    }
    return flags;
}

}  // namespace storyreel
