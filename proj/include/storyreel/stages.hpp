#pragma once

#include <string_view>

/// Stage names carried in CallTag::stage. The tower sets them; mocks and logs read them.
namespace storyreel::stages {

inline constexpr std::string_view kDirectiveEditor = "directive:editor";
inline constexpr std::string_view kDraftScenes = "draft:scenes";
inline constexpr std::string_view kReviewScenes = "review:scenes";
inline constexpr std::string_view kDirectivePainter = "directive:painter";
inline constexpr std::string_view kDraftImages = "draft:images";
inline constexpr std::string_view kReviewImages = "review:images";
inline constexpr std::string_view kDirectiveComposer = "directive:composer";
inline constexpr std::string_view kDraftMusic = "draft:music";
inline constexpr std::string_view kReviewMusic = "review:music";

inline constexpr std::string_view kMediaImage = "media:image";
inline constexpr std::string_view kMediaNarration = "media:narration";
inline constexpr std::string_view kMediaMusic = "media:music";

}  // namespace storyreel::stages
