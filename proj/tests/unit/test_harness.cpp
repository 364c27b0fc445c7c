#include <doctest.h>

#include <json.hpp>

#include "storyreel/harness.hpp"
#include "storyreel/transcript.hpp"
#include "support.hpp"
#include "table_fixture.hpp"

using namespace storyreel;
using testing::published_rows;

namespace {

RunRow row_with(std::string id, std::int64_t total_ms, Outcome outcome = Appropriate{}, std::string model = "m") {
    RunRow row;
    row.run_id = std::move(id);
    row.user_input = "x";
    row.model = std::move(model);
    row.outcome = std::move(outcome);
    row.metrics.total_time_ms = total_ms;
    row.metrics.communicate_time_ms = total_ms / 2;
    return row;
}

PromptSet small_set(std::size_t n) {
    PromptSet all = load_prompt_set(testing::data_dir() / "prompts.csv");
    all.entries.erase(all.entries.begin() + static_cast<std::ptrdiff_t>(n), all.entries.end());
    return all;
}

}  // namespace

TEST_CASE("published rows aggregate to the oracle means") {
    const auto groups = aggregate(published_rows(), GroupBy::Overall);
    REQUIRE(groups.size() == 1);
    const GroupStats& g = groups[0];
    CHECK(g.key == "overall");
    CHECK(g.n == 10);
    CHECK(g.mean_loops == doctest::Approx(26.0).epsilon(1e-12));
    CHECK(g.mean_token_length == doctest::Approx(571.4).epsilon(1e-12));
    CHECK(std::abs(g.mean_communicate_time_s - 272.043) < 1e-9);
    CHECK(std::abs(g.mean_total_time_s - 386.062) < 1e-9);
    CHECK(g.fraction_appropriate == 1.0);
}

TEST_CASE("aggregate edge cases") {
    CHECK_THROWS_AS(aggregate({}, GroupBy::Overall), EmptyInput);

    const auto one = aggregate({published_rows()[0]}, GroupBy::Overall)[0];
    CHECK(one.mean_loops == 22.0);
    CHECK(one.mean_total_time_s == 275.97);

    std::vector<RunRow> same(7, published_rows()[3]);
    const auto seven = aggregate(same, GroupBy::Overall)[0];
    CHECK(seven.mean_token_length == 1078.0);
    CHECK(seven.mean_communicate_time_s == 203.11);

    std::vector<RunRow> mixed{row_with("a", 1000, Appropriate{}, "m1"),
                              row_with("b", 3000, Invalid{FailureReason::InfiniteLoop}, "m2"),
                              row_with("c", 2000, Inappropriate{{ModerationFlagged{1}}}, "m1")};
    mixed[0].metrics.cost = Usd::parse("0.30");
    mixed[2].metrics.cost = Usd::parse("0.10");
    mixed[1].metrics.cost = Usd::parse("0.05");
    const auto by_model = aggregate(mixed, GroupBy::Model);
    REQUIRE(by_model.size() == 2);
    CHECK(by_model[0].key == "model:m1");
    CHECK(by_model[0].n == 2);
    CHECK(by_model[0].mean_cost == Usd::parse("0.20"));
    CHECK(by_model[1].mean_cost == std::nullopt);
    CHECK(by_model[1].fraction_invalid == 1.0);
    const auto overall = aggregate(mixed, GroupBy::Overall)[0];
    CHECK(overall.total_cost == Usd::parse("0.45"));
    CHECK(overall.mean_cost == Usd::parse("0.225"));
    CHECK(overall.appropriate + overall.inappropriate + overall.invalid == overall.n);
}

TEST_CASE("length grouping uses measured classes") {
    const auto groups = aggregate(published_rows(), GroupBy::Length);
    std::size_t total = 0;
    for (const auto& g : groups) {
        CHECK(g.key.starts_with("length:"));
        total += g.n;
    }
    CHECK(total == 10);
    CHECK(groups.front().key == "length:Long");
}

TEST_CASE("histograms") {
    const std::vector<RunRow> rows{row_with("a", 10'000), row_with("b", 29'990), row_with("c", 30'000),
                                   row_with("d", 95'000)};
    const auto h = bucket_histogram(rows, Metric::TotalTime, 30.0);
    REQUIRE(h.buckets.size() == 4);
    CHECK(h.buckets[0] == std::pair<double, std::size_t>{0.0, 2});
    CHECK(h.buckets[1] == std::pair<double, std::size_t>{30.0, 1});
    CHECK(h.buckets[2] == std::pair<double, std::size_t>{60.0, 0});
    CHECK(h.buckets[3] == std::pair<double, std::size_t>{90.0, 1});
    CHECK(bucket_histogram({}, Metric::Loops, 5.0).buckets.empty());
    CHECK_THROWS(bucket_histogram(rows, Metric::Loops, 0.0));

    const auto published = bucket_histogram(published_rows(), Metric::TotalTime, 30.0);
    std::size_t count = 0;
    for (const auto& [start, n] : published.buckets) {
        count += n;
    }
    CHECK(count == 10);
    CHECK(published.buckets.front().first == 210.0);
    CHECK(parse_metric(to_string(Metric::CommunicateTime)) == Metric::CommunicateTime);
}

TEST_CASE("report CSV") {
    const auto rows = published_rows();
    const std::string csv = report_csv(rows);
    CHECK(csv.starts_with(std::string(kReportCsvHeader) + "\n"));
    CHECK(csv.find(",22,419,169.42,275.97,") != std::string::npos);
    CHECK(csv.find("\"How dolphins communicate using clicks, whistles, and underwater body language\"") !=
          std::string::npos);
    auto back = parse_report_csv(csv);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        RunRow expected = rows[i];
        expected.run_id.clear();
        CHECK(back[i] == expected);
    }
    CHECK(report_csv({}) == std::string(kReportCsvHeader) + "\n");
    CHECK(parse_report_csv(report_csv({})).empty());
    CHECK_THROWS(parse_report_csv("a,b\n1,2\n"));
}

TEST_CASE("seconds formatting") {
    CHECK(format_seconds_2dp(169420) == "169.42");
    CHECK(format_seconds_2dp(0) == "0.00");
    CHECK(format_seconds_2dp(1005) == "1.00");
    CHECK(format_seconds_2dp(1015) == "1.02");
    CHECK(format_seconds_2dp(1016) == "1.02");
    CHECK(parse_seconds_2dp("275.97") == 275970);
    CHECK(parse_seconds_2dp("3") == 3000);
    CHECK_THROWS(parse_seconds_2dp("abc"));
}

TEST_CASE("CSV reader") {
    const auto records = parse_csv("a,\"b,c\",\"d \"\"q\"\"\"\r\n1,2,3\n");
    REQUIRE(records.size() == 2);
    CHECK(records[0] == std::vector<std::string>{"a", "b,c", "d \"q\""});
    CHECK(records[1] == std::vector<std::string>{"1", "2", "3"});
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK_THROWS(parse_csv("\"open"));
}

TEST_CASE("bundled prompt set") {
    const PromptSet set = load_prompt_set(testing::data_dir() / "prompts.csv");
    CHECK(set.entries.size() == 50);
    int counts[5][3] = {};
    for (const auto& e : set.entries) {
        counts[static_cast<int>(e.topic)][static_cast<int>(e.intended_length)] += 1;
    }
    for (auto& topic : counts) {
        CHECK(topic[static_cast<int>(LengthClass::Short)] == 5);
        CHECK(topic[static_cast<int>(LengthClass::Long)] == 5);
    }
    for (const auto& row : published_rows()) {
        CHECK(std::any_of(set.entries.begin(), set.entries.end(),
                          [&](const PromptEntry& e) { return e.prompt.text() == row.user_input; }));
    }
    CHECK_THROWS(parse_prompt_set("text,topic\nx,Animal\n", "t"));
    CHECK_THROWS(parse_prompt_set("text,topic_class,intended_length_class\nx,Plants,Short\n", "t"));
    CHECK_THROWS_AS(load_prompt_set("/nonexistent/prompts.csv"), IoFailure);
}

TEST_CASE("cost per video") {
    CHECK(mean_cost_per_video(Usd::parse("10.30"), 100) == Usd::parse("0.103"));
    CHECK(mean_cost_per_video(Usd::parse("1"), 0) == std::nullopt);
}

TEST_CASE("batch results do not depend on parallelism") {
    const PromptSet prompts = small_set(12);
    MockScript script = testing::seeded(99);
    script.p_revise = 0.3;
    script.p_transport_error = 0.05;
    RunContext context{"mock-chat", 99};
    PipelineConfig config;
    std::string reference;
    for (int parallelism : {1, 4, 3}) {
        testing::TempDir dir;
        BackendSet backends = testing::mock_set(script);
        const BatchReport report =
            run_batch(prompts, config, testing::bundled_roles(), backends, parallelism, context, dir.path());
        CHECK(report.rows.size() == 12);
        const std::string csv = report_csv(report.rows) + report_json(report) + histograms_json(report);
        if (reference.empty()) {
            reference = csv;
        } else {
            CHECK(csv == reference);
        }
        const auto reread = rows_from_runs(dir.path(), context.thresholds);
        CHECK(reread == report.rows);
    }
}

TEST_CASE("run directories") {
    testing::TempDir dir;
    const PipelineResult result = testing::run_mock("Silent Hunters of Night", testing::seeded(5));
    RunContext context{"mock-chat", 5};
    const RunFiles files = write_run_directory(dir / "run-0001", result, context);
    REQUIRE(files.mux_plan);
    for (const char* name : {"transcript.jsonl", "report.json", "subtitles.srt", "mux_plan.json",
                             "assets/image-01.ppm", "assets/narration-05.wav", "assets/music.wav"}) {
        CHECK_MESSAGE(std::filesystem::exists(dir / "run-0001" / name), name);
    }
    const auto plan = nlohmann::json::parse(testing::slurp(dir / "run-0001" / "mux_plan.json"));
    CHECK(plan["output"] == "video.mp4");
    CHECK(plan["inputs"].size() == 7);
    const auto report = nlohmann::json::parse(testing::slurp(dir / "run-0001" / "report.json"));
    CHECK(report["seed"] == 5);

    MockScript never = testing::seeded(5);
    never.never_approve = true;
    const PipelineResult invalid = testing::run_mock("Silent Hunters of Night", never);
    const RunFiles none = write_run_directory(dir / "run-0002", invalid, context);
    CHECK_FALSE(none.mux_plan);
    CHECK(std::filesystem::exists(dir / "run-0002" / "transcript.jsonl"));
    CHECK_FALSE(std::filesystem::exists(dir / "run-0002" / "subtitles.srt"));
}

TEST_CASE("never approving makes every batch run invalid") {
    MockScript script = testing::seeded(1);
    script.never_approve = true;
    BackendSet backends = testing::mock_set(script);
    const BatchReport report =
        run_batch(small_set(6), PipelineConfig{}, testing::bundled_roles(), backends, 2, RunContext{}, std::nullopt);
    const auto overall = std::find_if(report.groups.begin(), report.groups.end(),
                                      [](const GroupStats& g) { return g.key == "overall"; });
    REQUIRE(overall != report.groups.end());
    CHECK(overall->fraction_invalid == 1.0);
    CHECK(report.mean_cost == std::nullopt);
    CHECK(format_group_table(report.groups).find("overall") != std::string::npos);
}

TEST_CASE("export writes the three report files") {
    testing::TempDir dir;
    const BatchReport report = build_report(published_rows(), "published", 0);
    export_report(report, dir.path());
    CHECK(testing::slurp(dir / "report.csv") == report_csv(report.rows));
    const auto json = nlohmann::json::parse(testing::slurp(dir / "report.json"));
    CHECK(json.contains("groups"));
    CHECK(nlohmann::json::parse(testing::slurp(dir / "histograms.json")).size() >= 1);
}
