#include "storyreel/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <optional>
#include <random>
#include <sstream>

#include "storyreel/config.hpp"
#include "storyreel/harness.hpp"

namespace storyreel {

namespace fs = std::filesystem;

namespace {

struct GenerateArgs {
    std::string prompt;
    std::string config;
    std::optional<std::uint64_t> seed;
    bool mock = false;
    bool execute_mux = false;
    std::string out = "runs";
    std::string run_id = "run-0001";
};

struct BatchArgs {
    std::string prompts;
    std::string config;
    std::optional<std::uint64_t> seed;
    bool mock = false;
    int parallelism = 1;
    std::string out = "batch";
};

struct ReportArgs {
    std::string runs;
    int short_max = 5;
    int long_min = 11;
};

struct ValidateArgs {
    std::string config;
    bool mock = false;
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed, bool mock) {
    if (seed) {
        return *seed;
    }
    if (mock) {
        throw UsageError("--seed is required in mock mode");
    }
    std::random_device device;
    return (static_cast<std::uint64_t>(device()) << 32) | device();
}

RunContext context_for(const AppConfig& config, bool mock, std::uint64_t seed, const Redactor& redactor) {
    RunContext context;
    context.model_id = config.pipeline.model_id;
    context.seed = seed;
    context.mock = mock;
    context.thresholds = config.thresholds;
    context.encoder = config.encoder;
    context.padding = config.pipeline.padding;
    context.fade_out_ms = config.pipeline.fade_out_ms;
    context.redactor = redactor;
    return context;
}

void require_pricing(const AppConfig& config) {
    if (!config.pricing.covers_model(config.pipeline.model_id)) {
        throw UnknownModel(config.pipeline.model_id);
    }
}

int cmd_generate(const GenerateArgs& args, std::ostream& out, Redactor& redactor) {
    const AppConfig config = load_config(args.config);
    redactor = Redactor(configured_secret_values(config));
    const bool mock = args.mock || config.mock_mode;
    const std::uint64_t seed = resolve_seed(args.seed, mock);
    const UserPrompt prompt(args.prompt);
    require_pricing(config);
    const RolePrompts roles = load_role_prompts(config);
    BackendSet backends = make_backends(config, mock, seed);
    const RunContext context = context_for(config, mock, seed, redactor);

    const PipelineResult result = run_pipeline(prompt, config.pipeline, roles, backends, args.run_id);
    const fs::path dir = fs::path(args.out) / args.run_id;
    const RunFiles files = write_run_directory(dir, result, context);

    const RunMetrics& m = result.metrics;
    out << "run_id: " << args.run_id << "\n";
    out << "outcome: " << outcome_to_string(result.outcome) << "\n";
    out << "loops: " << m.total_loops << "  tokens: " << m.total_token_length
        << "  communicate_time_s: " << format_seconds_2dp(m.communicate_time_ms)
        << "  total_time_s: " << format_seconds_2dp(m.total_time_ms) << "  cost_usd: " << m.cost.to_string() << "\n";
    out << "run directory: " << dir.string() << "\n";

    if (args.execute_mux) {
        if (!files.mux_plan) {
            out << "no mux plan for an invalid run; encoder not started\n";
        } else {
            const int status = execute_mux_plan(*files.mux_plan, dir);
            if (status != 0) {
                throw std::runtime_error("encoder exited with status " + std::to_string(status));
            }
            out << "video: " << (dir / files.mux_plan->output).string() << "\n";
        }
    }
    return is_invalid(result.outcome) ? kExitInvalid : kExitOk;
}

int cmd_batch(const BatchArgs& args, std::ostream& out, Redactor& redactor) {
    const AppConfig config = load_config(args.config);
    redactor = Redactor(configured_secret_values(config));
    const bool mock = args.mock || config.mock_mode;
    const std::uint64_t seed = resolve_seed(args.seed, mock);
    const PromptSet prompts = load_prompt_set(args.prompts);
    require_pricing(config);
    const RolePrompts roles = load_role_prompts(config);
    BackendSet backends = make_backends(config, mock, seed);
    const RunContext context = context_for(config, mock, seed, redactor);

    const fs::path dir(args.out);
    const BatchReport report =
        run_batch(prompts, config.pipeline, roles, backends, args.parallelism, context, dir / "runs");
    export_report(report, dir, redactor);
    out << "runs: " << report.rows.size() << "  total_cost_usd: " << report.total_cost.to_string()
        << "  mean_cost_usd: " << (report.mean_cost ? report.mean_cost->to_string() : "-") << "\n";
    out << format_group_table(report.groups);
    out << "reports written to " << dir.string() << "\n";
    return kExitOk;
}

int cmd_report(const ReportArgs& args, std::ostream& out) {
    fs::path runs(args.runs);
    if (fs::is_directory(runs / "runs")) {
        runs /= "runs";
    }
    if (!fs::is_directory(runs)) {
        throw UsageError("runs directory not found: " + runs.string());
    }
    LengthThresholds thresholds{args.short_max, args.long_min};
    std::vector<RunRow> rows = rows_from_runs(runs, thresholds);
    if (rows.empty()) {
        throw UsageError("no runs found under " + runs.string());
    }
    const BatchReport report = build_report(std::move(rows), "", 0);
    for (const auto& row : report.rows) {
        out << row.run_id << "  " << outcome_to_string(row.outcome) << "  loops=" << row.metrics.total_loops
            << " tokens=" << row.metrics.total_token_length
            << " comm_s=" << format_seconds_2dp(row.metrics.communicate_time_ms)
            << " total_s=" << format_seconds_2dp(row.metrics.total_time_ms) << " cost=" << row.metrics.cost.to_string()
            << "\n";
    }
    out << format_group_table(report.groups);
    return kExitOk;
}

int cmd_validate(const ValidateArgs& args, std::ostream& out) {
    const auto items = validate_config(args.config, args.mock);
    bool ok = true;
    for (const auto& item : items) {
        out << (item.ok ? "[ok]   " : "[FAIL] ") << item.name << ": " << item.detail << "\n";
        ok = ok && item.ok;
    }
    return ok ? kExitOk : kExitUsage;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Slideshow storytelling video pipeline", "storyreel"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "Run the pipeline for one prompt");
    generate->add_option("--prompt", gen.prompt, "Prompt text")->required();
    generate->add_option("--config", gen.config, "Config file")->required();
    generate->add_option("--seed", gen.seed, "Seed (required with mock backends)");
    generate->add_flag("--mock", gen.mock, "Use the deterministic mock backends");
    generate->add_flag("--execute-mux", gen.execute_mux, "Run the encoder on the mux plan");
    generate->add_option("--out", gen.out, "Parent directory for run directories")->capture_default_str();
    generate->add_option("--run-id", gen.run_id, "Run id")->capture_default_str();

    BatchArgs batch;
    auto* batch_cmd = app.add_subcommand("batch", "Run the pipeline over a prompt set");
    batch_cmd->add_option("--prompts", batch.prompts, "Prompt set CSV")->required();
    batch_cmd->add_option("--config", batch.config, "Config file")->required();
    batch_cmd->add_option("--seed", batch.seed, "Seed (required with mock backends)");
    batch_cmd->add_flag("--mock", batch.mock, "Use the deterministic mock backends");
    batch_cmd->add_option("--parallelism", batch.parallelism, "Concurrent runs")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    batch_cmd->add_option("--out", batch.out, "Output directory")->capture_default_str();

    ReportArgs report;
    auto* report_cmd = app.add_subcommand("report", "Summarize persisted runs");
    report_cmd->add_option("--runs", report.runs, "Runs or batch directory")->required();
    report_cmd->add_option("--short-max", report.short_max, "Longest Short prompt in words")->capture_default_str();
    report_cmd->add_option("--long-min", report.long_min, "Shortest Long prompt in words")->capture_default_str();

    ValidateArgs validate;
    auto* validate_cmd = app.add_subcommand("validate", "Check a config file");
    validate_cmd->add_option("--config", validate.config, "Config file")->required();
    validate_cmd->add_flag("--mock", validate.mock, "Skip key environment variable checks");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    // Command output is buffered so configured secrets can be masked before printing.
    std::ostringstream buffer;
    Redactor redactor;
    int code = kExitUsage;
    std::string error;
    try {
        if (*generate) {
            code = cmd_generate(gen, buffer, redactor);
        } else if (*batch_cmd) {
            code = cmd_batch(batch, buffer, redactor);
        } else if (*report_cmd) {
            code = cmd_report(report, buffer);
        } else {
            code = cmd_validate(validate, buffer);
        }
    } catch (const std::exception& e) {
        error = e.what();
        code = kExitUsage;
    }
    out << redactor.text(buffer.str());
    if (!error.empty()) {
        err << "error: " << redactor.text(error) << "\n";
    }
    return code;
}

}  // namespace storyreel
