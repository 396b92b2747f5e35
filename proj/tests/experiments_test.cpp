#include "canopy/experiments.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace canopy;
using namespace canopy::exp;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    EXPECT_TRUE(in.good()) << "missing " << p;
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
}

double frac_at_most(const std::vector<double>& xs, double bound) {
    if (xs.empty()) return 0;
    std::size_t n = 0;
    for (double x : xs)
        if (x <= bound) ++n;
    return static_cast<double>(n) / static_cast<double>(xs.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// summaries and config

TEST(Summaries, PercentilesNearestRank) {
    std::vector<double> xs;
    for (int i = 1; i <= 100; ++i) xs.push_back(static_cast<double>(i));
    Summary s = summarize(xs);
    EXPECT_EQ(s.count, 100u);
    EXPECT_DOUBLE_EQ(s.mean, 50.5);
    EXPECT_DOUBLE_EQ(s.p50, 50.0);
    EXPECT_DOUBLE_EQ(s.p94, 94.0);
    EXPECT_DOUBLE_EQ(s.p99, 99.0);
    EXPECT_DOUBLE_EQ(s.min, 1.0);
    EXPECT_DOUBLE_EQ(s.max, 100.0);
}

TEST(Summaries, EmptyIsAllZero) {
    Summary s = summarize({});
    EXPECT_EQ(s.count, 0u);
    EXPECT_DOUBLE_EQ(s.mean, 0.0);
}

TEST(Config, JsonRoundTrip) {
    ScenarioConfig c;
    c.seed = 99;
    c.requests = 123;
    c.fog_count = 8;
    c.anomaly_rate = 0.25;
    c.fail_at_ms = 777.0;
    c.deterministic_links = true;
    ScenarioConfig back = ScenarioConfig::from_json(c.to_json());
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.requests, 123);
    EXPECT_EQ(back.fog_count, 8);
    EXPECT_DOUBLE_EQ(back.anomaly_rate, 0.25);
    EXPECT_DOUBLE_EQ(back.fail_at_ms, 777.0);
    EXPECT_TRUE(back.deterministic_links);
}

TEST(Config, PartialJsonKeepsDefaults) {
    ScenarioConfig c = ScenarioConfig::from_json(nlohmann::json{{"seed", 5}});
    EXPECT_EQ(c.seed, 5u);
    EXPECT_EQ(c.requests, 10000);
    EXPECT_EQ(c.devices, 24);
    EXPECT_DOUBLE_EQ(c.service_ms, 50.0);
}

// ---------------------------------------------------------------------------
// turnaround

TEST(Turnaround, FogOnlyMeanNearTenMs) {
    ScenarioConfig cfg;
    cfg.seed = 1;
    cfg.requests = 2000;
    ScenarioResult r = run_turnaround(TurnaroundMode::FogOnly, cfg);
    ASSERT_EQ(r.samples.size(), 2000u);
    Summary s = r.summary();
    EXPECT_GE(s.mean, 9.8);
    EXPECT_LE(s.mean, 10.2);
}

TEST(Turnaround, CloudOnlyMeanNearSixtyMs) {
    ScenarioConfig cfg;
    cfg.seed = 1;
    cfg.requests = 2000;
    Summary s = run_turnaround(TurnaroundMode::CloudOnly, cfg).summary();
    EXPECT_GE(s.mean, 59.0);
    EXPECT_LE(s.mean, 61.0);
}

TEST(Turnaround, FogCloudPaysOneFogRoundTripOverCloudOnly) {
    ScenarioConfig cfg;
    cfg.seed = 7;
    cfg.requests = 2000;
    double via_fog = run_turnaround(TurnaroundMode::FogCloud, cfg).summary().mean;
    double direct = run_turnaround(TurnaroundMode::CloudOnly, cfg).summary().mean;
    EXPECT_GE(via_fog - direct, 8.0);
    EXPECT_LE(via_fog - direct, 12.0);
}

TEST(Turnaround, CacheFirstTouchThenHit) {
    ScenarioConfig cfg;
    cfg.seed = 3;
    cfg.requests = 2;
    cfg.cache_keys = 1;
    cfg.deterministic_links = true;
    ScenarioResult r = run_turnaround(TurnaroundMode::FogCloudCache, cfg);
    ASSERT_EQ(r.samples.size(), 2u);
    EXPECT_DOUBLE_EQ(r.samples[0], 70.0);
    EXPECT_DOUBLE_EQ(r.samples[1], 10.0);
}

TEST(Turnaround, CacheSteadyStateHitsMatchFogOnly) {
    ScenarioConfig cfg;
    cfg.seed = 11;
    cfg.requests = 2000;
    cfg.cache_keys = 8;
    ScenarioResult r = run_turnaround(TurnaroundMode::FogCloudCache, cfg);
    EXPECT_DOUBLE_EQ(r.scalars.at("miss_count"), 8.0);
    EXPECT_DOUBLE_EQ(r.scalars.at("hit_count"), 1992.0);
    EXPECT_GE(r.scalars.at("hit_mean_ms"), 9.8);
    EXPECT_LE(r.scalars.at("hit_mean_ms"), 10.2);
    EXPECT_GT(r.scalars.at("miss_mean_ms"), 60.0);
}

TEST(Turnaround, PlacementOrderingLaw) {
    ScenarioConfig cfg;
    cfg.seed = 5;
    cfg.requests = 1500;
    double fog_only = run_turnaround(TurnaroundMode::FogOnly, cfg).summary().mean;
    ScenarioResult cache = run_turnaround(TurnaroundMode::FogCloudCache, cfg);
    double cache_hits = cache.scalars.at("hit_mean_ms");
    double cloud_only = run_turnaround(TurnaroundMode::CloudOnly, cfg).summary().mean;
    double fog_cloud = run_turnaround(TurnaroundMode::FogCloud, cfg).summary().mean;
    EXPECT_LT(fog_only, cache.summary().mean);  // cache pays the misses
    EXPECT_LT(cache_hits, cloud_only);
    EXPECT_LT(cloud_only, fog_cloud);
}

// ---------------------------------------------------------------------------
// parallel push

TEST(Push, SingleDeviceClosedForm) {
    ScenarioConfig cfg;
    cfg.seed = 2;
    cfg.devices = 1;
    cfg.fog_count = 1;
    cfg.tasks_per_device = 1;
    cfg.service_ms = 50.0;
    cfg.deterministic_links = true;
    ScenarioResult r = run_parallel_push(cfg);
    ASSERT_EQ(r.samples.size(), 1u);
    EXPECT_DOUBLE_EQ(r.samples[0], 55.0);
}

TEST(Push, AllItemsComplete) {
    ScenarioConfig cfg;
    cfg.seed = 4;
    cfg.fog_count = 4;
    ScenarioResult r = run_parallel_push(cfg);
    EXPECT_EQ(r.samples.size(),
              static_cast<std::size_t>(cfg.devices * cfg.tasks_per_device));
}

TEST(Push, MeanCompletionDropsWithMoreFogs) {
    for (std::uint64_t seed : {21u, 22u}) {
        ScenarioConfig cfg;
        cfg.seed = seed;
        cfg.fog_count = 2;
        double t2 = run_parallel_push(cfg).summary().mean;
        cfg.fog_count = 4;
        double t4 = run_parallel_push(cfg).summary().mean;
        cfg.fog_count = 8;
        double t8 = run_parallel_push(cfg).summary().mean;
        EXPECT_LE(t4 / t2, 0.6) << "seed " << seed;
        EXPECT_LE(t8 / t4, 0.6) << "seed " << seed;
    }
}

// ---------------------------------------------------------------------------
// selective logging

TEST(Selective, ReactiveBeatsBatchByOrders) {
    ScenarioConfig cfg;
    cfg.seed = 6;
    cfg.duration_ms = 60000.0;  // one minute is plenty at desk scale
    auto [reactive, batch] = run_selective_logging(cfg);
    ASSERT_GT(reactive.samples.size(), 100u);
    ASSERT_EQ(reactive.samples.size(), batch.samples.size());

    Summary rs = reactive.summary();
    EXPECT_GE(rs.p94, 3.0);
    EXPECT_LE(rs.p94, 8.0);
    EXPECT_GE(frac_at_most(reactive.samples, 10.0), 0.94);

    Summary bs = batch.summary();
    EXPECT_GE(bs.p50, 2000.0);
    EXPECT_LE(bs.p50, 3000.0);

    std::vector<double> sorted = batch.samples;
    std::sort(sorted.begin(), sorted.end());
    double batch_p1 = percentile_sorted(sorted, 0.01);
    EXPECT_LT(rs.p99, batch_p1);
}

TEST(Selective, ZeroAnomalyRateYieldsEmptyResults) {
    ScenarioConfig cfg;
    cfg.seed = 8;
    cfg.duration_ms = 20000.0;
    cfg.anomaly_rate = 0.0;
    auto [reactive, batch] = run_selective_logging(cfg);
    EXPECT_TRUE(reactive.samples.empty());
    EXPECT_TRUE(batch.samples.empty());
    EXPECT_DOUBLE_EQ(batch.scalars.at("records"), 20000.0 / 100.0 * 8);
}

// ---------------------------------------------------------------------------
// fail-over

TEST(Failover, FixedFailureTimeRecovers) {
    ScenarioConfig cfg;
    cfg.seed = 9;
    cfg.fail_at_ms = 800.0;
    cfg.run_ms = 6000.0;
    ScenarioResult r = run_failover(cfg);
    ASSERT_EQ(r.samples.size(), 1u);
    EXPECT_GT(r.scalars.at("resume_ms"), 800.0);
    EXPECT_LT(r.scalars.at("recovery_gap_ms"), 150.0);
    EXPECT_GE(r.scalars.at("first_resumed"), r.scalars.at("checkpoint_at_failure"));
    EXPECT_DOUBLE_EQ(r.scalars.at("lost_records"), 0.0);
    EXPECT_GT(r.scalars.at("final_progress"), r.scalars.at("first_resumed"));
}

TEST(Failover, RandomFailureTimesNeverLoseProgress) {
    for (std::uint64_t seed = 40; seed < 45; ++seed) {
        ScenarioConfig cfg;
        cfg.seed = seed;
        cfg.run_ms = 6000.0;
        ScenarioResult r = run_failover(cfg);
        ASSERT_EQ(r.samples.size(), 1u) << "seed " << seed;
        EXPECT_GE(r.scalars.at("first_resumed"), r.scalars.at("checkpoint_at_failure"))
            << "seed " << seed;
        EXPECT_DOUBLE_EQ(r.scalars.at("lost_records"), 0.0) << "seed " << seed;
        EXPECT_GT(r.scalars.at("recovery_gap_ms"), 0.0) << "seed " << seed;
    }
}

TEST(Failover, NoFailureMeansZeroGap) {
    ScenarioConfig cfg;
    cfg.seed = 10;
    cfg.run_ms = 2000.0;
    cfg.fail_at_ms = 50000.0;  // beyond the run horizon
    ScenarioResult r = run_failover(cfg);
    EXPECT_TRUE(r.samples.empty());
    EXPECT_DOUBLE_EQ(r.scalars.at("recovery_gap_ms"), 0.0);
    EXPECT_DOUBLE_EQ(r.scalars.at("recomputed_ticks"), 0.0);
    EXPECT_DOUBLE_EQ(r.scalars.at("lost_records"), 0.0);
}

// ---------------------------------------------------------------------------
// parking

TEST(Parking, LocalAndEscalatedBands) {
    ScenarioConfig cfg;
    cfg.seed = 12;
    ScenarioResult r = run_parking(cfg);
    EXPECT_DOUBLE_EQ(r.scalars.at("local_count"), 6.0);
    EXPECT_DOUBLE_EQ(r.scalars.at("escalated_count"), 6.0);
    EXPECT_GE(r.scalars.at("local_mean_ms"), 9.0);
    EXPECT_LE(r.scalars.at("local_mean_ms"), 12.0);
    EXPECT_GE(r.scalars.at("escalated_mean_ms"), 65.0);
    EXPECT_LE(r.scalars.at("escalated_mean_ms"), 80.0);
    EXPECT_DOUBLE_EQ(r.scalars.at("escalation_rate"), 0.5);
}

TEST(Parking, ZeroRequestsIsEmptyNotError) {
    ScenarioConfig cfg;
    cfg.seed = 13;
    cfg.parking_requests_per_zone = 0;
    ScenarioResult r = run_parking(cfg);
    EXPECT_TRUE(r.samples.empty());
    EXPECT_DOUBLE_EQ(r.scalars.at("escalation_rate"), 0.0);
}

// ---------------------------------------------------------------------------
// result files

TEST(Emit, FilesAreBytewiseDeterministic) {
    ScenarioConfig cfg;
    cfg.seed = 14;
    cfg.requests = 200;
    auto dir_a = std::filesystem::temp_directory_path() / "canopy_emit_a";
    auto dir_b = std::filesystem::temp_directory_path() / "canopy_emit_b";
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
    emit_results(run_turnaround(TurnaroundMode::FogOnly, cfg), dir_a.string());
    emit_results(run_turnaround(TurnaroundMode::FogOnly, cfg), dir_b.string());
    for (const char* suffix :
         {"_samples.csv", "_cdf.csv", "_summary.json", "_trace.log"}) {
        std::string name = std::string("turnaround_fog_only") + suffix;
        EXPECT_EQ(slurp(dir_a / name), slurp(dir_b / name)) << name;
    }
    std::string samples = slurp(dir_a / "turnaround_fog_only_samples.csv");
    EXPECT_EQ(samples.rfind("sample_ms\n", 0), 0u);
    EXPECT_EQ(std::count(samples.begin(), samples.end(), '\n'), 201);
}

TEST(Emit, EmptyResultStillWritesHeaders) {
    ScenarioResult r;
    r.name = "empty";
    auto dir = std::filesystem::temp_directory_path() / "canopy_emit_empty";
    std::filesystem::remove_all(dir);
    emit_results(r, dir.string());
    EXPECT_EQ(slurp(dir / "empty_samples.csv"), "sample_ms\n");
    EXPECT_EQ(slurp(dir / "empty_cdf.csv"), "latency_ms,cum_fraction\n");
    nlohmann::json j = nlohmann::json::parse(slurp(dir / "empty_summary.json"));
    EXPECT_EQ(j.at("count").get<int>(), 0);
}

int main(int argc, char** argv) {
    ::testing::InitGoogleTest(&argc, argv);
    return RUN_ALL_TESTS();
}
