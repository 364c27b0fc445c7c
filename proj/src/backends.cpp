#include "storyreel/backends.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <ctime>
#include <thread>

#include "storyreel/text_util.hpp"

namespace storyreel {

namespace {

void put_le(std::string& out, std::uint32_t value, int bytes) {
    for (int i = 0; i < bytes; ++i) {
        out += static_cast<char>((value >> (8 * i)) & 0xFF);
    }
}

std::uint32_t get_le(std::string_view in, std::size_t at, int bytes) {
    std::uint32_t value = 0;
    for (int i = bytes - 1; i >= 0; --i) {
        value = (value << 8) | static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)]);
    }
    return value;
}

/// tokens * rate_pico / 1e6 with half-even rounding; exact whenever the
/// per-million rate has at most six fractional digits.
Usd scale_rate(std::uint64_t tokens, Usd per_million) {
    const __int128 numerator = static_cast<__int128>(tokens) * per_million.pico();
    constexpr __int128 kMillion = 1'000'000;
    __int128 q = numerator / kMillion;
    const __int128 r = numerator % kMillion;
    if (2 * r > kMillion || (2 * r == kMillion && (q % 2 != 0))) {
        ++q;
    }
    return Usd::from_pico(static_cast<std::int64_t>(q));
}

}  // namespace

std::string_view to_string(MediaKind kind) {
    switch (kind) {
        case MediaKind::Image:
            return "image";
        case MediaKind::Narration:
            return "narration";
        case MediaKind::Music:
            return "music";
    }
    return "?";
}

MediaKind parse_media_kind(std::string_view text) {
    if (text == "image") {
        return MediaKind::Image;
    }
    if (text == "narration" || text == "speech") {
        return MediaKind::Narration;
    }
    if (text == "music") {
        return MediaKind::Music;
    }
    throw std::invalid_argument("unknown media kind: " + std::string(text));
}

MediaAsset MediaAsset::make(MediaKind kind, std::string bytes, std::string extension, std::int64_t duration_ms,
                            bool moderation_flagged, std::int64_t latency_ms) {
    MediaAsset asset;
    asset.kind = kind;
    asset.digest = text_util::sha256_hex(bytes);
    asset.bytes = std::move(bytes);
    asset.extension = std::move(extension);
    asset.duration_ms = duration_ms;
    asset.moderation_flagged = moderation_flagged;
    asset.latency_ms = latency_ms;
    return asset;
}

std::int64_t SteadyRunClock::elapsed_ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_)
        .count();
}

void SteadyRunClock::sleep_ms(std::int64_t ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); }

std::string rfc3339_now() {
    const auto now = std::chrono::system_clock::now();
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
    const std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms % 1000));
    return buf;
}

std::int64_t RetryPolicy::delay_after_attempt(int failed_attempt) const {
    return std::llround(static_cast<double>(base_delay_ms) * std::pow(backoff_factor, failed_attempt - 1));
}

bool RetryPolicy::valid() const {
    return max_attempts >= 1 && base_delay_ms >= 0 && backoff_factor >= 1.0 && per_attempt_timeout_ms > 0;
}

Usd cost_of(const Usage& usage, std::string_view model_id, const PricingTable& pricing) {
    auto it = pricing.models.find(model_id);
    if (it == pricing.models.end()) {
        throw UnknownModel(std::string(model_id));
    }
    return scale_rate(usage.prompt_tokens, it->second.prompt_per_million) +
           scale_rate(usage.completion_tokens, it->second.completion_per_million);
}

Usd cost_of(MediaKind kind, const PricingTable& pricing) {
    auto it = pricing.media.find(kind);
    if (it == pricing.media.end()) {
        throw UnknownModel("media:" + std::string(to_string(kind)));
    }
    return it->second;
}

std::string_view to_string(CallKind kind) {
    switch (kind) {
        case CallKind::Chat:
            return "chat";
        case CallKind::Image:
            return "image";
        case CallKind::Narration:
            return "narration";
        case CallKind::Music:
            return "music";
    }
    return "?";
}

CallKind call_kind_for(MediaKind kind) {
    switch (kind) {
        case MediaKind::Image:
            return CallKind::Image;
        case MediaKind::Narration:
            return CallKind::Narration;
        case MediaKind::Music:
            return CallKind::Music;
    }
    return CallKind::Image;
}

void CostLedger::append(LedgerEntry entry) {
    std::lock_guard lock(mutex_);
    entries_.push_back(std::move(entry));
}

std::vector<LedgerEntry> CostLedger::entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
}

Usd CostLedger::total() const {
    std::lock_guard lock(mutex_);
    Usd sum{};
    for (const auto& e : entries_) {
        sum += e.cost;
    }
    return sum;
}

Usd CostLedger::total_for(std::string_view run_id) const {
    std::lock_guard lock(mutex_);
    Usd sum{};
    for (const auto& e : entries_) {
        if (e.run_id == run_id) {
            sum += e.cost;
        }
    }
    return sum;
}

std::size_t CostLedger::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::string make_wav(std::int64_t duration_ms, std::string_view seed_text, int sample_rate) {
    const auto samples = static_cast<std::uint32_t>(duration_ms * sample_rate / 1000);
    const std::string seed = text_util::sha256_hex(seed_text);
    const int half_period = 2 + (seed[0] % 13);
    std::string out;
    out.reserve(44 + samples);
    out += "RIFF";
    put_le(out, 36 + samples, 4);
    out += "WAVEfmt ";
    put_le(out, 16, 4);
    put_le(out, 1, 2);  // PCM
    put_le(out, 1, 2);  // mono
    put_le(out, static_cast<std::uint32_t>(sample_rate), 4);
    put_le(out, static_cast<std::uint32_t>(sample_rate), 4);  // byte rate
    put_le(out, 1, 2);  // block align
    put_le(out, 8, 2);  // bits per sample
    out += "data";
    put_le(out, samples, 4);
    for (std::uint32_t i = 0; i < samples; ++i) {
        out += static_cast<char>(((i / static_cast<std::uint32_t>(half_period)) % 2 == 0) ? 140 : 116);
    }
    return out;
}

std::int64_t wav_duration_ms(std::string_view bytes) {
    if (bytes.size() < 12 || bytes.substr(0, 4) != "RIFF" || bytes.substr(8, 4) != "WAVE") {
        throw MalformedResponse("audio payload is not a WAV file");
    }
    std::uint32_t byte_rate = 0;
    std::size_t at = 12;
    while (at + 8 <= bytes.size()) {
        const std::string_view id = bytes.substr(at, 4);
        const std::uint32_t size = get_le(bytes, at + 4, 4);
        if (id == "fmt " && at + 20 <= bytes.size()) {
            byte_rate = get_le(bytes, at + 8 + 8, 4);
        } else if (id == "data") {
            if (byte_rate == 0) {
                throw MalformedResponse("WAV data chunk precedes fmt chunk");
            }
            const std::uint64_t available = std::min<std::uint64_t>(size, bytes.size() - (at + 8));
            return static_cast<std::int64_t>((available * 1000 + byte_rate / 2) / byte_rate);
        }
        at += 8 + size + (size % 2);
    }
    throw MalformedResponse("WAV file has no data chunk");
}

std::string make_ppm(std::string_view seed_text, int width, int height) {
    const std::string seed = text_util::sha256_hex(seed_text);
    auto channel = [&](int i) { return static_cast<unsigned char>(std::stoi(seed.substr(2 * i, 2), nullptr, 16)); };
    const unsigned char top[3] = {channel(0), channel(1), channel(2)};
    const unsigned char bottom[3] = {channel(3), channel(4), channel(5)};
    std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const int blend = (top[c] * (height - 1 - y) + bottom[c] * y) / std::max(1, height - 1);
                out += static_cast<char>(blend);
            }
        }
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    std::string clean;
    for (char c : text) {
        if (c != '\n' && c != '\r' && c != ' ') {
            clean += c;
        }
    }
    if (clean.size() % 4 != 0) {
        throw MalformedResponse("base64 payload has invalid length");
    }
    std::string out(clean.size() / 4 * 3, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(clean.data()), static_cast<int>(clean.size()));
    if (n < 0) {
        throw MalformedResponse("base64 payload is malformed");
    }
    std::size_t padding = 0;
    if (!clean.empty() && clean.back() == '=') {
        ++padding;
        if (clean.size() > 1 && clean[clean.size() - 2] == '=') {
            ++padding;
        }
    }
    out.resize(static_cast<std::size_t>(n) - padding);
    return out;
}

}  // namespace storyreel
