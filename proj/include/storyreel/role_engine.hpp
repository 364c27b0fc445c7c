#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "storyreel/core_model.hpp"

namespace storyreel {

enum class RoleId { Director, Editor, Painter, Composer };

inline constexpr RoleId kAllRoles[] = {RoleId::Director, RoleId::Editor, RoleId::Painter, RoleId::Composer};

std::string_view to_string(RoleId role);
/// Lowercase file/wire name ("director", "editor", ...).
std::string_view role_key(RoleId role);
RoleId parse_role(std::string_view text);

/// Agent output did not follow the role's line schema. Recoverable by re-asking.
class SchemaViolation : public std::runtime_error {
public:
    explicit SchemaViolation(const std::string& what, std::optional<int> scene = std::nullopt)
        : std::runtime_error(what), scene_(scene) {}

    std::optional<int> scene() const { return scene_; }

private:
    std::optional<int> scene_;
};

/// A role spec file is missing a section or cannot be read.
class RoleSpecError : public std::runtime_error {
public:
    RoleSpecError(std::string source, std::string section, const std::string& what)
        : std::runtime_error(what), source_(std::move(source)), section_(std::move(section)) {}

    const std::string& source() const { return source_; }
    const std::string& section() const { return section_; }

private:
    std::string source_;
    std::string section_;
};

inline constexpr std::string_view kTaskObjectivesLabel = "Task Objectives";
inline constexpr std::string_view kIoRequirementsLabel = "Input and Output Requirements";
inline constexpr std::string_view kPerformanceStandardsLabel = "Performance Standards";
inline constexpr std::string_view kProjectContextLabel = "Project Context";

struct RoleSpec {
    RoleId role = RoleId::Director;
    std::string task_objectives;
    std::string io_requirements;
    std::string performance_standards;
};

/// Parses a role spec document: `## <label>` headings for the three sections.
/// `source` names the file in error messages.
RoleSpec parse_role_spec(std::string_view text, RoleId role, std::string_view source);
RoleSpec load_role_spec(const std::filesystem::path& path, RoleId role);

/// Loads `<dir>/<role>.md` for all four roles, in RoleId order.
std::vector<RoleSpec> load_role_specs(const std::filesystem::path& dir);

std::string build_system_prompt(const RoleSpec& spec, std::string_view project_context);

struct Directive {
    RoleId from = RoleId::Director;
    RoleId to = RoleId::Editor;
    std::string content;
    bool operator==(const Directive&) const = default;
};

struct Scene {
    int index = 0;
    std::string caption;
    std::string narration;
    bool operator==(const Scene&) const = default;
};

struct SceneSet {
    std::vector<Scene> scenes;
    bool operator==(const SceneSet&) const = default;
};

struct ImagePromptSet {
    std::vector<std::string> prompts;
    bool operator==(const ImagePromptSet&) const = default;
};

struct MusicPrompt {
    std::string description;
    std::string mood;
    bool operator==(const MusicPrompt&) const = default;
};

struct Approved {
    bool operator==(const Approved&) const = default;
};

struct RevisionRequested {
    std::string feedback;
    bool operator==(const RevisionRequested&) const = default;
};

using ApprovalVerdict = std::variant<Approved, RevisionRequested>;

// Parsers. Every one returns a valid value or throws SchemaViolation.
Directive parse_directive(std::string_view raw, RoleId to);
SceneSet parse_scene_set(std::string_view raw, int expected_count);
ImagePromptSet parse_image_prompts(std::string_view raw, int expected_count);
MusicPrompt parse_music_prompt(std::string_view raw);
ApprovalVerdict parse_verdict(std::string_view raw);

// Canonical emitters; parse(emit(x)) == x for valid single-line field values.
std::string emit_directive(const Directive& directive);
std::string emit_scene_set(const SceneSet& scenes);
std::string emit_image_prompts(const ImagePromptSet& prompts);
std::string emit_music_prompt(const MusicPrompt& music);
std::string emit_verdict(const ApprovalVerdict& verdict);

/// Caption block shared with painter and composer: one `CAPTION <i>: <text>` line per scene.
std::string caption_block(const SceneSet& scenes);

std::vector<std::string> default_refusal_patterns();

/// Number of leading characters inspected by detect_confusion.
inline constexpr std::size_t kConfusionWindow = 200;

/// True iff any pattern occurs case-insensitively, on word boundaries, within
/// the first kConfusionWindow characters (UTF-8 code points) of the reply.
bool detect_confusion(std::string_view raw, std::span<const std::string> patterns);

/// Jaccard overlap of the lowercase word-token sets of two prompts.
double token_set_overlap(std::string_view a, std::string_view b);

/// Flags every 1-based pair (i < j) whose overlap is >= threshold.
std::vector<InappropriateFlag> detect_repetitive_visuals(const ImagePromptSet& prompts, double threshold);

}  // namespace storyreel
