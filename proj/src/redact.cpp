#include "storyreel/redact.hpp"

#include <algorithm>

namespace storyreel {

Redactor::Redactor(std::vector<std::string> secrets) {
    for (auto& secret : secrets) {
        if (!secret.empty() && std::find(secrets_.begin(), secrets_.end(), secret) == secrets_.end()) {
            secrets_.push_back(std::move(secret));
        }
    }
    std::stable_sort(secrets_.begin(), secrets_.end(),
                     [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
}

std::string Redactor::text(std::string_view in) const {
    std::string out(in);
    for (const auto& secret : secrets_) {
        std::size_t pos = 0;
        while ((pos = out.find(secret, pos)) != std::string::npos) {
            out.replace(pos, secret.size(), kRedacted);
            pos += kRedacted.size();
        }
    }
    return out;
}

std::string Redactor::bytes(std::string in) const {
    for (const auto& secret : secrets_) {
        std::size_t pos = 0;
        while ((pos = in.find(secret, pos)) != std::string::npos) {
            std::fill_n(in.begin() + static_cast<std::ptrdiff_t>(pos), secret.size(), '*');
            pos += secret.size();
        }
    }
    return in;
}

bool Redactor::contains_secret(std::string_view in) const {
    return std::any_of(secrets_.begin(), secrets_.end(),
                       [&](const std::string& s) { return in.find(s) != std::string_view::npos; });
}

}  // namespace storyreel
