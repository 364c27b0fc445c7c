#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "storyreel/assembly.hpp"
#include "storyreel/chat_tower.hpp"
#include "storyreel/core_model.hpp"
#include "storyreel/redact.hpp"

namespace storyreel {

class EmptyInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IoFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// CSV (RFC 4180)

std::vector<std::vector<std::string>> parse_csv(std::string_view text);
std::string csv_field(std::string_view value);

// ---------------------------------------------------------------------------
// Prompt sets

struct PromptEntry {
    UserPrompt prompt;
    TopicClass topic = TopicClass::Animal;
    LengthClass intended_length = LengthClass::Short;
};

struct PromptSet {
    std::vector<PromptEntry> entries;
    std::string provenance;
};

/// CSV with header `text,topic_class,intended_length_class`.
PromptSet parse_prompt_set(std::string_view csv, std::string provenance);
PromptSet load_prompt_set(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Rows and statistics

/// One report row: the four per-run metrics plus model, length class, outcome and cost.
struct RunRow {
    std::string run_id;
    std::string user_input;
    std::string model;
    LengthClass length_class = LengthClass::Short;
    Outcome outcome;
    RunMetrics metrics;
    bool operator==(const RunRow&) const = default;
};

enum class GroupBy { Model, Length, Overall };

struct GroupStats {
    std::string key;  // "model:<id>", "length:<class>" or "overall"
    std::size_t n = 0;
    double mean_token_length = 0.0;
    double mean_loops = 0.0;
    double mean_communicate_time_s = 0.0;
    double mean_total_time_s = 0.0;
    std::size_t appropriate = 0;
    std::size_t inappropriate = 0;
    std::size_t invalid = 0;
    double fraction_appropriate = 0.0;
    double fraction_inappropriate = 0.0;
    double fraction_invalid = 0.0;
    Usd total_cost{};
    /// Total cost over non-Invalid runs; absent when every run was Invalid.
    std::optional<Usd> mean_cost;
};

/// Exact per-group means, groups in sorted key order. Throws EmptyInput on no rows.
std::vector<GroupStats> aggregate(const std::vector<RunRow>& rows, GroupBy group_by);

enum class Metric { TokenLength, Loops, CommunicateTime, TotalTime };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view text);

struct HistogramBuckets {
    Metric metric = Metric::TotalTime;
    double width = 1.0;
    /// (interval start, count), contiguous from the lowest occupied bucket.
    std::vector<std::pair<double, std::size_t>> buckets;
};

/// Value v (seconds for times) lands in bucket floor(v / width); buckets are half-open.
HistogramBuckets bucket_histogram(const std::vector<RunRow>& rows, Metric metric, double width);

struct BatchReport {
    std::string model_id;
    std::uint64_t seed = 0;
    std::vector<RunRow> rows;
    std::vector<GroupStats> groups;
    std::vector<HistogramBuckets> histograms;
    Usd total_cost{};
    std::optional<Usd> mean_cost;
};

/// Groups (model, length, overall), default histograms and cost totals over sorted rows.
BatchReport build_report(std::vector<RunRow> rows, std::string model_id, std::uint64_t seed);

/// Mean cost per generated (non-Invalid) video.
std::optional<Usd> mean_cost_per_video(Usd total, std::size_t generated);

// ---------------------------------------------------------------------------
// Export

inline constexpr std::string_view kReportCsvHeader =
    "user_input,model,length_class,outcome,total_loops,total_token_length,communicate_time_s,total_time_s,cost_usd";

/// Milliseconds as seconds with two decimals (half-even on the dropped digit).
std::string format_seconds_2dp(std::int64_t ms);
std::int64_t parse_seconds_2dp(std::string_view text);

std::string report_csv(const std::vector<RunRow>& rows);
/// Rows read back from report_csv output (run_id is not part of the CSV).
std::vector<RunRow> parse_report_csv(std::string_view text);

std::string report_json(const BatchReport& report);
std::string histograms_json(const BatchReport& report);

/// Writes report.csv, report.json and histograms.json into `dir`.
void export_report(const BatchReport& report, const std::filesystem::path& dir, const Redactor& redactor = {});

// ---------------------------------------------------------------------------
// Runs

struct RunContext {
    std::string model_id;
    std::uint64_t seed = 0;
    bool mock = true;
    LengthThresholds thresholds;
    EncoderTemplate encoder = default_encoder_template();
    Padding padding;
    std::int64_t fade_out_ms = 2000;
    /// Applied to every file written for the run.
    Redactor redactor;
};

/// Row for a finished run; length class is measured on the prompt.
RunRow make_row(const PipelineResult& result, const LengthThresholds& thresholds);

struct RunFiles {
    std::filesystem::path dir;
    std::optional<MuxPlan> mux_plan;
};

/// Writes `dir`/transcript.jsonl, report.json, and for non-Invalid runs
/// assets/, subtitles.srt and mux_plan.json.
RunFiles write_run_directory(const std::filesystem::path& dir, const PipelineResult& result, const RunContext& context);

std::string run_report_json(const PipelineResult& result, const RunContext& context);

/// Runs every prompt in a pool of `parallelism` workers. Run ids are
/// "run-0001".. in prompt order; rows are sorted by run id. When `runs_dir`
/// is set every run directory is written there.
BatchReport run_batch(const PromptSet& prompts, const PipelineConfig& config, const RolePrompts& roles,
                      BackendSet& backends, int parallelism, const RunContext& context,
                      const std::optional<std::filesystem::path>& runs_dir);

std::string run_id_for(std::size_t index);

/// Rows rebuilt from the transcripts under `runs_dir` (one subdirectory per run).
std::vector<RunRow> rows_from_runs(const std::filesystem::path& runs_dir, const LengthThresholds& thresholds);

/// Plain-text table of group statistics.
std::string format_group_table(const std::vector<GroupStats>& groups);

}  // namespace storyreel
