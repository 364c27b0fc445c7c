#include "storyreel/transcript.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

#include "storyreel/stages.hpp"
#include "storyreel/text_util.hpp"

namespace storyreel {

namespace {

using ojson = nlohmann::ordered_json;

std::string dump(const ojson& value) { return value.dump(-1, ' ', false, ojson::error_handler_t::replace); }

ojson message_json(const std::string& run_id, const Message& m) {
    ojson parts = ojson::array();
    for (const auto& part : m.parts) {
        parts.push_back(ojson{{"role", part.role}, {"author", part.author}, {"content", part.content}});
    }
    return ojson{{"type", "message"},
                 {"run_id", run_id},
                 {"seq", m.seq},
                 {"agent", role_key(m.agent)},
                 {"direction", to_string(m.direction)},
                 {"stage", m.stage},
                 {"round", m.round},
                 {"content", m.content},
                 {"parts", parts},
                 {"prompt_tokens", m.prompt_tokens},
                 {"completion_tokens", m.completion_tokens},
                 {"latency_ms", m.latency_ms},
                 {"failed_attempt_latency_ms", m.failed_attempt_latency_ms},
                 {"wall_time", m.wall_time}};
}

ojson media_call_json(const MediaCall& call) {
    return ojson{{"kind", to_string(call.kind)},
                 {"scene", call.scene},
                 {"digest", call.digest},
                 {"moderation_flagged", call.moderation_flagged},
                 {"failed", call.failed},
                 {"duration_ms", call.duration_ms},
                 {"latency_ms", call.latency_ms},
                 {"failed_attempt_latency_ms", call.failed_attempt_latency_ms}};
}

ojson metrics_json(const RunMetrics& metrics) {
    return ojson{{"total_loops", metrics.total_loops},
                 {"total_token_length", metrics.total_token_length},
                 {"communicate_time_ms", metrics.communicate_time_ms},
                 {"total_time_ms", metrics.total_time_ms},
                 {"cost_usd", metrics.cost.to_string()}};
}

template <typename T>
T field(const ojson& object, const char* key) {
    if (!object.contains(key)) {
        throw TranscriptFormatError(std::string("missing field \"") + key + "\"");
    }
    try {
        return object.at(key).get<T>();
    } catch (const ojson::exception& e) {
        throw TranscriptFormatError(std::string("bad field \"") + key + "\": " + e.what());
    }
}

Message parse_message(const ojson& line) {
    Message m;
    m.seq = field<int>(line, "seq");
    m.agent = parse_role(field<std::string>(line, "agent"));
    m.direction = parse_direction(field<std::string>(line, "direction"));
    m.stage = field<std::string>(line, "stage");
    m.round = field<int>(line, "round");
    m.content = field<std::string>(line, "content");
    for (const auto& part : field<ojson>(line, "parts")) {
        m.parts.push_back(ChatTurn{field<std::string>(part, "role"), field<std::string>(part, "author"),
                                   field<std::string>(part, "content")});
    }
    m.prompt_tokens = field<std::uint64_t>(line, "prompt_tokens");
    m.completion_tokens = field<std::uint64_t>(line, "completion_tokens");
    m.latency_ms = field<std::int64_t>(line, "latency_ms");
    m.failed_attempt_latency_ms = field<std::vector<std::int64_t>>(line, "failed_attempt_latency_ms");
    m.wall_time = field<std::string>(line, "wall_time");
    return m;
}

MediaCall parse_media_call(const ojson& item) {
    MediaCall call;
    call.kind = parse_media_kind(field<std::string>(item, "kind"));
    call.scene = field<int>(item, "scene");
    call.digest = field<std::string>(item, "digest");
    call.moderation_flagged = field<bool>(item, "moderation_flagged");
    call.failed = field<bool>(item, "failed");
    call.duration_ms = field<std::int64_t>(item, "duration_ms");
    call.latency_ms = field<std::int64_t>(item, "latency_ms");
    call.failed_attempt_latency_ms = field<std::vector<std::int64_t>>(item, "failed_attempt_latency_ms");
    return call;
}

RunMetrics parse_metrics(const ojson& item) {
    RunMetrics metrics;
    metrics.total_loops = field<std::uint64_t>(item, "total_loops");
    metrics.total_token_length = field<std::uint64_t>(item, "total_token_length");
    metrics.communicate_time_ms = field<std::int64_t>(item, "communicate_time_ms");
    metrics.total_time_ms = field<std::int64_t>(item, "total_time_ms");
    metrics.cost = Usd::parse(field<std::string>(item, "cost_usd"));
    return metrics;
}

bool is_approval(const Message& m, std::string_view review_stage) {
    if (m.agent != RoleId::Director || m.direction != Direction::Reply || m.stage != review_stage) {
        return false;
    }
    try {
        return std::holds_alternative<Approved>(parse_verdict(m.content));
    } catch (const SchemaViolation&) {
        return false;
    }
}

}  // namespace

std::string transcript_to_jsonl(const Transcript& transcript) {
    std::string out;
    for (const auto& message : transcript.messages) {
        out += dump(message_json(transcript.run_id, message));
        out += '\n';
    }
    ojson calls = ojson::array();
    for (const auto& call : transcript.media_calls) {
        calls.push_back(media_call_json(call));
    }
    const ojson summary{{"type", "summary"},
                        {"run_id", transcript.run_id},
                        {"model_id", transcript.model_id},
                        {"prompt", transcript.prompt},
                        {"terminal_state", to_string(transcript.terminal_state)},
                        {"outcome", outcome_to_string(transcript.outcome)},
                        {"metrics", metrics_json(transcript.metrics)},
                        {"media_calls", calls}};
    out += dump(summary);
    out += '\n';
    return out;
}

Transcript parse_transcript_jsonl(std::string_view text) {
    Transcript transcript;
    bool have_summary = false;
    int line_no = 0;
    for (const auto& raw : text_util::lines(text)) {
        ++line_no;
        if (text_util::trim(raw).empty()) {
            continue;
        }
        if (have_summary) {
            throw TranscriptFormatError("line " + std::to_string(line_no) + ": content after summary line");
        }
        ojson line;
        try {
            line = ojson::parse(raw);
        } catch (const ojson::exception& e) {
            throw TranscriptFormatError("line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            const auto type = field<std::string>(line, "type");
            const auto run_id = field<std::string>(line, "run_id");
            if (transcript.run_id.empty()) {
                transcript.run_id = run_id;
            } else if (run_id != transcript.run_id) {
                throw TranscriptFormatError("mixed run ids");
            }
            if (type == "message") {
                Message m = parse_message(line);
                if (m.seq != static_cast<int>(transcript.messages.size()) + 1) {
                    throw TranscriptFormatError("seq values are not contiguous from 1");
                }
                transcript.messages.push_back(std::move(m));
            } else if (type == "summary") {
                transcript.model_id = field<std::string>(line, "model_id");
                transcript.prompt = field<std::string>(line, "prompt");
                transcript.terminal_state = parse_terminal_state(field<std::string>(line, "terminal_state"));
                transcript.outcome = parse_outcome(field<std::string>(line, "outcome"));
                transcript.metrics = parse_metrics(field<ojson>(line, "metrics"));
                for (const auto& item : field<ojson>(line, "media_calls")) {
                    transcript.media_calls.push_back(parse_media_call(item));
                }
                have_summary = true;
            } else {
                throw TranscriptFormatError("unknown line type \"" + type + "\"");
            }
        } catch (const TranscriptFormatError& e) {
            throw TranscriptFormatError("line " + std::to_string(line_no) + ": " + e.what());
        } catch (const std::invalid_argument& e) {
            throw TranscriptFormatError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!have_summary) {
        throw TranscriptFormatError("transcript has no summary line");
    }
    return transcript;
}

void write_transcript(const std::filesystem::path& path, const Transcript& transcript) {
    std::ofstream out(path, std::ios::binary);
    out << transcript_to_jsonl(transcript);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

Transcript read_transcript(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_transcript_jsonl(buffer.str());
}

Transcript normalize_wall_time(Transcript transcript) {
    for (auto& message : transcript.messages) {
        message.wall_time = std::string(kNormalizedWallTime);
    }
    return transcript;
}

Transcript redact_transcript(Transcript transcript, const Redactor& redactor) {
    if (redactor.empty()) {
        return transcript;
    }
    transcript.prompt = redactor.text(transcript.prompt);
    for (auto& m : transcript.messages) {
        m.content = redactor.text(m.content);
        for (auto& part : m.parts) {
            part.content = redactor.text(part.content);
        }
    }
    return transcript;
}

std::string transcript_digest(const Transcript& transcript) {
    return text_util::sha256_hex(transcript_to_jsonl(normalize_wall_time(transcript)));
}

RunMetrics recompute_metrics(const Transcript& transcript, const PricingTable& pricing) {
    RunMetrics metrics;
    for (const auto& m : transcript.messages) {
        if (m.direction != Direction::Reply) {
            continue;
        }
        metrics.total_loops += 1;
        metrics.total_token_length += m.prompt_tokens + m.completion_tokens;
        metrics.communicate_time_ms += m.latency_ms;
        metrics.cost += cost_of(Usage{m.prompt_tokens, m.completion_tokens}, transcript.model_id, pricing);
    }
    for (const auto& call : transcript.media_calls) {
        if (!call.failed) {
            metrics.cost += cost_of(call.kind, pricing);
        }
    }
    metrics.total_time_ms = transcript.metrics.total_time_ms;
    return metrics;
}

std::size_t chat_pair_count(const Transcript& transcript) {
    std::size_t pairs = 0;
    for (std::size_t i = 0; i + 1 < transcript.messages.size(); ++i) {
        const auto& a = transcript.messages[i];
        const auto& b = transcript.messages[i + 1];
        if (a.direction == Direction::Request && b.direction == Direction::Reply && a.agent == b.agent) {
            ++pairs;
        }
    }
    return pairs;
}

std::optional<std::string> check_caption_sharing(const Transcript& transcript) {
    std::optional<std::string> reference;
    for (const auto& m : transcript.messages) {
        if (m.direction != Direction::Request || (m.agent != RoleId::Painter && m.agent != RoleId::Composer)) {
            continue;
        }
        int blocks = 0;
        for (const auto& part : m.parts) {
            if (part.author != "editor") {
                continue;
            }
            ++blocks;
            if (!reference) {
                reference = part.content;
            } else if (part.content != *reference) {
                return "seq " + std::to_string(m.seq) + ": caption block differs from the first one shared";
            }
        }
        if (blocks != 1) {
            return "seq " + std::to_string(m.seq) + ": expected one caption block, found " + std::to_string(blocks);
        }
    }
    return std::nullopt;
}

std::optional<std::string> check_prompt_provenance(const Transcript& transcript) {
    const std::string& prompt = transcript.prompt;
    if (transcript.messages.empty()) {
        return std::nullopt;
    }
    const Message& first = transcript.messages.front();
    const bool first_ok = first.agent == RoleId::Director && first.direction == Direction::Request &&
                          std::any_of(first.parts.begin(), first.parts.end(), [&](const ChatTurn& part) {
                              return part.author == "user" && part.content == prompt;
                          });
    if (!first_ok) {
        return std::string("first message is not a director request carrying the user prompt");
    }
    for (const auto& m : transcript.messages) {
        const std::string where = "seq " + std::to_string(m.seq);
        if (m.direction == Direction::Reply) {
            if (m.agent != RoleId::Director && m.content.find(prompt) != std::string::npos) {
                return where + ": user prompt appears in a " + std::string(role_key(m.agent)) + " reply";
            }
            continue;
        }
        for (const auto& part : m.parts) {
            if (part.author == "user") {
                if (m.agent != RoleId::Director) {
                    return where + ": user-authored text sent to the " + std::string(role_key(m.agent));
                }
                continue;
            }
            if (part.author != "director" && part.content.find(prompt) != std::string::npos) {
                return where + ": user prompt appears in " + part.author + "-authored text";
            }
        }
    }
    return std::nullopt;
}

std::optional<std::string> check_ordering(const Transcript& transcript, int exchange_cap) {
    const std::size_t pairs = chat_pair_count(transcript);
    if (pairs > static_cast<std::size_t>(exchange_cap)) {
        return "transcript has " + std::to_string(pairs) + " chat pairs, cap is " + std::to_string(exchange_cap);
    }
    bool directed[4] = {true, false, false, false};
    bool music_approved = false;
    for (const auto& m : transcript.messages) {
        if (!directed[static_cast<int>(m.agent)]) {
            return "seq " + std::to_string(m.seq) + ": " + std::string(role_key(m.agent)) +
                   " message precedes its directive";
        }
        if (m.agent == RoleId::Director && m.direction == Direction::Reply) {
            if (m.stage == stages::kDirectiveEditor) {
                directed[static_cast<int>(RoleId::Editor)] = true;
            } else if (m.stage == stages::kDirectivePainter) {
                directed[static_cast<int>(RoleId::Painter)] = true;
            } else if (m.stage == stages::kDirectiveComposer) {
                directed[static_cast<int>(RoleId::Composer)] = true;
            }
        }
        music_approved = music_approved || is_approval(m, stages::kReviewMusic);
    }
    if (!transcript.media_calls.empty() && !music_approved) {
        return std::string("media calls logged without the third approval");
    }
    return std::nullopt;
}

}  // namespace storyreel
