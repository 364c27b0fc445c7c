#include "storyreel/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "storyreel/text_util.hpp"
#include "storyreel/transcript.hpp"

namespace storyreel {

namespace fs = std::filesystem;

namespace {

using ojson = nlohmann::ordered_json;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoFailure("cannot read " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoFailure("cannot write " + path.string());
    }
}

std::string dump(const ojson& value, int indent = 2) {
    return value.dump(indent, ' ', false, ojson::error_handler_t::replace) + "\n";
}

ojson optional_usd(const std::optional<Usd>& value) {
    return value ? ojson(value->to_string()) : ojson(nullptr);
}

ojson metrics_json(const RunMetrics& m) {
    return ojson{{"total_loops", m.total_loops},
                 {"total_token_length", m.total_token_length},
                 {"communicate_time_s", format_seconds_2dp(m.communicate_time_ms)},
                 {"total_time_s", format_seconds_2dp(m.total_time_ms)},
                 {"communicate_time_ms", m.communicate_time_ms},
                 {"total_time_ms", m.total_time_ms},
                 {"cost_usd", m.cost.to_string()}};
}

std::uint64_t metric_value_raw(const RunRow& row, Metric metric) {
    switch (metric) {
        case Metric::TokenLength:
            return row.metrics.total_token_length;
        case Metric::Loops:
            return row.metrics.total_loops;
        case Metric::CommunicateTime:
            return static_cast<std::uint64_t>(row.metrics.communicate_time_ms);
        case Metric::TotalTime:
            return static_cast<std::uint64_t>(row.metrics.total_time_ms);
    }
    return 0;
}

double metric_value(const RunRow& row, Metric metric) {
    const double raw = static_cast<double>(metric_value_raw(row, metric));
    return metric == Metric::CommunicateTime || metric == Metric::TotalTime ? raw / 1000.0 : raw;
}

std::string group_key(const RunRow& row, GroupBy group_by) {
    switch (group_by) {
        case GroupBy::Model:
            return "model:" + row.model;
        case GroupBy::Length:
            return "length:" + std::string(to_string(row.length_class));
        case GroupBy::Overall:
            return "overall";
    }
    return "overall";
}

GroupStats stats_for(std::string key, const std::vector<const RunRow*>& rows) {
    GroupStats g;
    g.key = std::move(key);
    g.n = rows.size();
    std::uint64_t loops = 0;
    std::uint64_t tokens = 0;
    std::int64_t comm_ms = 0;
    std::int64_t total_ms = 0;
    for (const RunRow* row : rows) {
        loops += row->metrics.total_loops;
        tokens += row->metrics.total_token_length;
        comm_ms += row->metrics.communicate_time_ms;
        total_ms += row->metrics.total_time_ms;
        g.total_cost += row->metrics.cost;
        const auto category = outcome_category(row->outcome);
        if (category == "Appropriate") {
            ++g.appropriate;
        } else if (category == "Inappropriate") {
            ++g.inappropriate;
        } else {
            ++g.invalid;
        }
    }
    const double n = static_cast<double>(g.n);
    g.mean_loops = static_cast<double>(loops) / n;
    g.mean_token_length = static_cast<double>(tokens) / n;
    g.mean_communicate_time_s = static_cast<double>(comm_ms) / (n * 1000.0);
    g.mean_total_time_s = static_cast<double>(total_ms) / (n * 1000.0);
    g.fraction_appropriate = static_cast<double>(g.appropriate) / n;
    g.fraction_inappropriate = static_cast<double>(g.inappropriate) / n;
    g.fraction_invalid = static_cast<double>(g.invalid) / n;
    g.mean_cost = mean_cost_per_video(g.total_cost, g.appropriate + g.inappropriate);
    return g;
}

ojson group_json(const GroupStats& g) {
    return ojson{{"key", g.key},
                 {"n", g.n},
                 {"mean_token_length", g.mean_token_length},
                 {"mean_loops", g.mean_loops},
                 {"mean_communicate_time_s", g.mean_communicate_time_s},
                 {"mean_total_time_s", g.mean_total_time_s},
                 {"appropriate", g.appropriate},
                 {"inappropriate", g.inappropriate},
                 {"invalid", g.invalid},
                 {"fraction_appropriate", g.fraction_appropriate},
                 {"fraction_inappropriate", g.fraction_inappropriate},
                 {"fraction_invalid", g.fraction_invalid},
                 {"total_cost_usd", g.total_cost.to_string()},
                 {"mean_cost_usd", optional_usd(g.mean_cost)}};
}

ojson histogram_json(const HistogramBuckets& h) {
    ojson buckets = ojson::array();
    for (const auto& [start, count] : h.buckets) {
        buckets.push_back(ojson{{"start", start}, {"end", start + h.width}, {"count", count}});
    }
    return ojson{{"metric", to_string(h.metric)}, {"width", h.width}, {"buckets", buckets}};
}

std::string numbered(std::string_view stem, int index, std::string_view ext) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d", index);
    return std::string(stem) + "-" + buf + "." + std::string(ext);
}

}  // namespace

// ---------------------------------------------------------------------------
// CSV

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool quoted = false;
    bool any = false;
    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        quoted = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(record));
        record.clear();
        any = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        any = true;
        if (c == '"') {
            if (!field.empty() || quoted) {
                throw std::invalid_argument("stray quote in CSV field");
            }
            in_quotes = true;
            quoted = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
            continue;
        } else if (c == '\n') {
            end_record();
        } else {
            if (quoted) {
                throw std::invalid_argument("text after closing quote in CSV field");
            }
            field += c;
        }
    }
    if (in_quotes) {
        throw std::invalid_argument("unterminated quoted CSV field");
    }
    if (any || !field.empty() || !record.empty()) {
        end_record();
    }
    return records;
}

std::string csv_field(std::string_view value) {
    if (value.find_first_of(",\"\r\n") == std::string_view::npos) {
        return std::string(value);
    }
    std::string out = "\"";
    for (char c : value) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

// ---------------------------------------------------------------------------
// Prompt sets

PromptSet parse_prompt_set(std::string_view csv, std::string provenance) {
    const auto records = parse_csv(csv);
    if (records.empty() || records.front() != std::vector<std::string>{"text", "topic_class", "intended_length_class"}) {
        throw std::invalid_argument("prompt set header must be text,topic_class,intended_length_class");
    }
    PromptSet set;
    set.provenance = std::move(provenance);
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.size() == 1 && r[0].empty()) {
            continue;
        }
        if (r.size() != 3) {
            throw std::invalid_argument("prompt set line " + std::to_string(i + 1) + " needs 3 fields");
        }
        const TopicClass topic = parse_topic_class(r[1]);
        set.entries.push_back(PromptEntry{UserPrompt(r[0], topic), topic, parse_length_class(r[2])});
    }
    return set;
}

PromptSet load_prompt_set(const fs::path& path) {
    return parse_prompt_set(read_file(path), path.filename().string());
}

// ---------------------------------------------------------------------------
// Statistics

std::vector<GroupStats> aggregate(const std::vector<RunRow>& rows, GroupBy group_by) {
    if (rows.empty()) {
        throw EmptyInput("aggregate needs at least one row");
    }
    std::map<std::string, std::vector<const RunRow*>> groups;
    for (const auto& row : rows) {
        groups[group_key(row, group_by)].push_back(&row);
    }
    std::vector<GroupStats> out;
    for (const auto& [key, members] : groups) {
        out.push_back(stats_for(key, members));
    }
    return out;
}

std::string_view to_string(Metric metric) {
    switch (metric) {
        case Metric::TokenLength:
            return "token_length";
        case Metric::Loops:
            return "loops";
        case Metric::CommunicateTime:
            return "communicate_time";
        case Metric::TotalTime:
            return "total_time";
    }
    return "?";
}

Metric parse_metric(std::string_view text) {
    for (Metric m : {Metric::TokenLength, Metric::Loops, Metric::CommunicateTime, Metric::TotalTime}) {
        if (to_string(m) == text) {
            return m;
        }
    }
    throw std::invalid_argument("unknown metric: " + std::string(text));
}

HistogramBuckets bucket_histogram(const std::vector<RunRow>& rows, Metric metric, double width) {
    if (!(width > 0.0)) {
        throw std::invalid_argument("histogram width must be positive");
    }
    HistogramBuckets h{metric, width, {}};
    if (rows.empty()) {
        return h;
    }
    std::map<std::int64_t, std::size_t> counts;
    for (const auto& row : rows) {
        counts[static_cast<std::int64_t>(std::floor(metric_value(row, metric) / width))] += 1;
    }
    const std::int64_t lo = counts.begin()->first;
    const std::int64_t hi = counts.rbegin()->first;
    for (std::int64_t b = lo; b <= hi; ++b) {
        const auto it = counts.find(b);
        h.buckets.emplace_back(static_cast<double>(b) * width, it == counts.end() ? 0 : it->second);
    }
    return h;
}

std::optional<Usd> mean_cost_per_video(Usd total, std::size_t generated) {
    if (generated == 0) {
        return std::nullopt;
    }
    return total.divided_by(static_cast<std::int64_t>(generated));
}

BatchReport build_report(std::vector<RunRow> rows, std::string model_id, std::uint64_t seed) {
    std::sort(rows.begin(), rows.end(), [](const RunRow& a, const RunRow& b) { return a.run_id < b.run_id; });
    BatchReport report;
    report.model_id = std::move(model_id);
    report.seed = seed;
    report.rows = std::move(rows);
    std::size_t generated = 0;
    for (const auto& row : report.rows) {
        report.total_cost += row.metrics.cost;
        generated += is_invalid(row.outcome) ? 0 : 1;
    }
    report.mean_cost = mean_cost_per_video(report.total_cost, generated);
    if (!report.rows.empty()) {
        for (GroupBy by : {GroupBy::Model, GroupBy::Length, GroupBy::Overall}) {
            auto groups = aggregate(report.rows, by);
            report.groups.insert(report.groups.end(), groups.begin(), groups.end());
        }
    }
    report.histograms = {bucket_histogram(report.rows, Metric::TokenLength, 100.0),
                         bucket_histogram(report.rows, Metric::Loops, 5.0),
                         bucket_histogram(report.rows, Metric::CommunicateTime, 30.0),
                         bucket_histogram(report.rows, Metric::TotalTime, 30.0)};
    return report;
}

// ---------------------------------------------------------------------------
// Export

std::string format_seconds_2dp(std::int64_t ms) {
    if (ms < 0) {
        throw std::invalid_argument("negative duration");
    }
    std::int64_t centis = ms / 10;
    const std::int64_t rest = ms % 10;
    if (rest > 5 || (rest == 5 && centis % 2 == 1)) {
        ++centis;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld.%02lld", static_cast<long long>(centis / 100),
                  static_cast<long long>(centis % 100));
    return buf;
}

std::int64_t parse_seconds_2dp(std::string_view text) {
    const auto dot = text.find('.');
    const std::string_view whole = text.substr(0, dot);
    const std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
    auto digits = [](std::string_view s) {
        return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
    };
    if (!digits(whole) || (dot != std::string_view::npos && (!digits(frac) || frac.size() > 3))) {
        throw std::invalid_argument("bad seconds value: " + std::string(text));
    }
    std::int64_t ms = std::stoll(std::string(whole)) * 1000;
    std::string padded(frac);
    padded.resize(3, '0');
    return ms + std::stoll(padded);
}

std::string report_csv(const std::vector<RunRow>& rows) {
    std::string out(kReportCsvHeader);
    out += '\n';
    for (const auto& row : rows) {
        out += csv_field(row.user_input) + ',' + csv_field(row.model) + ',' +
               std::string(to_string(row.length_class)) + ',' + csv_field(outcome_to_string(row.outcome)) + ',' +
               std::to_string(row.metrics.total_loops) + ',' + std::to_string(row.metrics.total_token_length) + ',' +
               format_seconds_2dp(row.metrics.communicate_time_ms) + ',' +
               format_seconds_2dp(row.metrics.total_time_ms) + ',' + row.metrics.cost.to_string() + '\n';
    }
    return out;
}

std::vector<RunRow> parse_report_csv(std::string_view text) {
    const auto records = parse_csv(text);
    if (records.empty()) {
        throw std::invalid_argument("report CSV is empty");
    }
    std::string header;
    for (std::size_t i = 0; i < records.front().size(); ++i) {
        header += (i ? "," : "") + records.front()[i];
    }
    if (header != kReportCsvHeader) {
        throw std::invalid_argument("unexpected report CSV header");
    }
    std::vector<RunRow> rows;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.size() != 9) {
            throw std::invalid_argument("report CSV line " + std::to_string(i + 1) + " needs 9 fields");
        }
        RunRow row;
        row.user_input = r[0];
        row.model = r[1];
        row.length_class = parse_length_class(r[2]);
        row.outcome = parse_outcome(r[3]);
        row.metrics.total_loops = std::stoull(r[4]);
        row.metrics.total_token_length = std::stoull(r[5]);
        row.metrics.communicate_time_ms = parse_seconds_2dp(r[6]);
        row.metrics.total_time_ms = parse_seconds_2dp(r[7]);
        row.metrics.cost = Usd::parse(r[8]);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string report_json(const BatchReport& report) {
    ojson rows = ojson::array();
    for (const auto& row : report.rows) {
        rows.push_back(ojson{{"run_id", row.run_id},
                             {"user_input", row.user_input},
                             {"model", row.model},
                             {"length_class", to_string(row.length_class)},
                             {"outcome", outcome_to_string(row.outcome)},
                             {"metrics", metrics_json(row.metrics)}});
    }
    ojson groups = ojson::array();
    for (const auto& g : report.groups) {
        groups.push_back(group_json(g));
    }
    ojson histograms = ojson::array();
    for (const auto& h : report.histograms) {
        histograms.push_back(histogram_json(h));
    }
    return dump(ojson{{"model_id", report.model_id},
                      {"seed", report.seed},
                      {"runs", report.rows.size()},
                      {"total_cost_usd", report.total_cost.to_string()},
                      {"mean_cost_usd", optional_usd(report.mean_cost)},
                      {"groups", groups},
                      {"histograms", histograms},
                      {"rows", rows}});
}

std::string histograms_json(const BatchReport& report) {
    ojson histograms = ojson::array();
    for (const auto& h : report.histograms) {
        histograms.push_back(histogram_json(h));
    }
    return dump(histograms);
}

void export_report(const BatchReport& report, const fs::path& dir, const Redactor& redactor) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoFailure("cannot create " + dir.string() + ": " + ec.message());
    }
    write_file(dir / "report.csv", redactor.text(report_csv(report.rows)));
    write_file(dir / "report.json", redactor.text(report_json(report)));
    write_file(dir / "histograms.json", redactor.text(histograms_json(report)));
}

// ---------------------------------------------------------------------------
// Runs

std::string run_id_for(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "run-%04zu", index + 1);
    return buf;
}

RunRow make_row(const PipelineResult& result, const LengthThresholds& thresholds) {
    const Transcript& t = result.transcript;
    return RunRow{t.run_id, t.prompt, t.model_id, classify_prompt_length(t.prompt, thresholds), result.outcome,
                  result.metrics};
}

std::string run_report_json(const PipelineResult& result, const RunContext& context) {
    const Transcript t = redact_transcript(result.transcript, context.redactor);
    ojson assets = nullptr;
    if (result.assets) {
        ojson images = ojson::array();
        ojson narrations = ojson::array();
        for (const auto& a : result.assets->images) {
            images.push_back(a.digest);
        }
        for (const auto& a : result.assets->narrations) {
            narrations.push_back(a.digest);
        }
        assets = ojson{{"images", images},
                       {"narrations", narrations},
                       {"music", result.assets->music ? ojson(result.assets->music->digest) : ojson(nullptr)}};
    }
    return context.redactor.text(dump(ojson{{"run_id", t.run_id},
                      {"model", t.model_id},
                      {"mock", context.mock},
                      {"seed", context.seed},
                      {"prompt", t.prompt},
                      {"length_class", to_string(classify_prompt_length(t.prompt, context.thresholds))},
                      {"terminal_state", to_string(t.terminal_state)},
                      {"outcome", outcome_to_string(result.outcome)},
                      {"metrics", metrics_json(result.metrics)},
                      {"transcript_digest", transcript_digest(t)},
                      {"assets", assets}}));
}

RunFiles write_run_directory(const fs::path& dir, const PipelineResult& result, const RunContext& context) {
    std::error_code ec;
    fs::create_directories(dir / "assets", ec);
    if (ec) {
        throw IoFailure("cannot create " + dir.string() + ": " + ec.message());
    }
    RunFiles files{dir, std::nullopt};
    const Redactor& redactor = context.redactor;
    write_file(dir / "transcript.jsonl",
               redactor.text(transcript_to_jsonl(redact_transcript(result.transcript, redactor))));
    if (result.assets && result.scene_set) {
        const AssetBundle& assets = *result.assets;
        AssetPaths paths;
        for (std::size_t i = 0; i < assets.images.size(); ++i) {
            const int scene = static_cast<int>(i) + 1;
            const std::string image = "assets/" + numbered("image", scene, assets.images[i].extension);
            const std::string narration = "assets/" + numbered("narration", scene, assets.narrations[i].extension);
            write_file(dir / image, redactor.bytes(assets.images[i].bytes));
            write_file(dir / narration, redactor.bytes(assets.narrations[i].bytes));
            paths.images.push_back(image);
            paths.narrations.push_back(narration);
        }
        if (assets.music) {
            paths.music = "assets/music." + assets.music->extension;
            write_file(dir / paths.music, redactor.bytes(assets.music->bytes));
        }
        paths.subtitles = "subtitles.srt";
        const Timeline timeline = build_timeline(*result.scene_set, assets, context.padding, context.fade_out_ms);
        write_file(dir / paths.subtitles, redactor.text(emit_subtitles(timeline)));
        MuxPlan plan = plan_mux(timeline, paths, "video.mp4", context.encoder, context.mock);
        write_file(dir / "mux_plan.json", redactor.text(mux_plan_to_json(plan)));
        files.mux_plan = std::move(plan);
    }
    write_file(dir / "report.json", run_report_json(result, context));
    return files;
}

BatchReport run_batch(const PromptSet& prompts, const PipelineConfig& config, const RolePrompts& roles,
                      BackendSet& backends, int parallelism, const RunContext& context,
                      const std::optional<fs::path>& runs_dir) {
    if (parallelism < 1) {
        throw std::invalid_argument("parallelism must be >= 1");
    }
    config.validate();
    const std::size_t n = prompts.entries.size();
    std::vector<std::optional<RunRow>> rows(n);
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) {
                return;
            }
            {
                std::lock_guard lock(error_mutex);
                if (error) {
                    return;
                }
            }
            try {
                const std::string run_id = run_id_for(i);
                PipelineResult result = run_pipeline(prompts.entries[i].prompt, config, roles, backends, run_id);
                if (runs_dir) {
                    write_run_directory(*runs_dir / run_id, result, context);
                }
                rows[i] = make_row(result, context.thresholds);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
            }
        }
    };

    const int workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(parallelism), std::max<std::size_t>(n, 1)));
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& thread : pool) {
        thread.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
    std::vector<RunRow> done;
    done.reserve(n);
    for (auto& row : rows) {
        done.push_back(std::move(*row));
    }
    return build_report(std::move(done), config.model_id, context.seed);
}

std::vector<RunRow> rows_from_runs(const fs::path& runs_dir, const LengthThresholds& thresholds) {
    if (!fs::is_directory(runs_dir)) {
        throw IoFailure("not a directory: " + runs_dir.string());
    }
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(runs_dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "transcript.jsonl")) {
            dirs.push_back(entry.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<RunRow> rows;
    for (const auto& dir : dirs) {
        const Transcript t = read_transcript(dir / "transcript.jsonl");
        rows.push_back(RunRow{t.run_id, t.prompt, t.model_id, classify_prompt_length(t.prompt, thresholds), t.outcome,
                              t.metrics});
    }
    return rows;
}

std::string format_group_table(const std::vector<GroupStats>& groups) {
    std::string out;
    char line[512];
    std::snprintf(line, sizeof line, "%-28s %5s %8s %10s %10s %10s %6s %6s %6s %12s\n", "group", "n", "loops",
                  "tokens", "comm_s", "total_s", "appr", "inapp", "inval", "mean_cost");
    out += line;
    for (const auto& g : groups) {
        const std::string cost = g.mean_cost ? g.mean_cost->to_string() : "-";
        std::snprintf(line, sizeof line, "%-28s %5zu %8.2f %10.2f %10.2f %10.2f %6.3f %6.3f %6.3f %12s\n",
                      g.key.c_str(), g.n, g.mean_loops, g.mean_token_length, g.mean_communicate_time_s,
                      g.mean_total_time_s, g.fraction_appropriate, g.fraction_inappropriate, g.fraction_invalid,
                      cost.c_str());
        out += line;
    }
    return out;
}

}  // namespace storyreel
