#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace storyreel {

inline constexpr std::string_view kRedacted = "[REDACTED]";

/// Masks secret values (API keys read from the environment) in anything the
/// program writes or prints.
class Redactor {
public:
    Redactor() = default;
    /// Empty values are ignored; longer secrets are matched first.
    explicit Redactor(std::vector<std::string> secrets);

    bool empty() const { return secrets_.empty(); }
    const std::vector<std::string>& secrets() const { return secrets_; }

    /// Replaces each occurrence with kRedacted.
    std::string text(std::string_view in) const;
    /// Overwrites each occurrence with '*' so binary layouts keep their size.
    std::string bytes(std::string in) const;
    bool contains_secret(std::string_view in) const;

private:
    std::vector<std::string> secrets_;
};

}  // namespace storyreel
