// Scenario drivers built on the runtime: turnaround latency across tier
// placements, saturated parallel push across fog pools, selective versus
// batch anomaly reporting, fail-over with checkpointed recovery, and a
// three-app parking exchange. Every driver owns its simulation, derives all
// randomness from the config seed, and reports samples plus named scalars
// so results can be written out byte-identically.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "canopy/runtime.hpp"

namespace canopy::exp {

using nlohmann::json;

// ---------------------------------------------------------------------------
// summaries

struct Summary {
    std::size_t count = 0;
    double mean = 0, p50 = 0, p94 = 0, p99 = 0, min = 0, max = 0;
};

// nearest-rank percentile over an ascending vector; q in (0, 1]
inline double percentile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0;
    std::size_t rank = static_cast<std::size_t>(std::ceil(q * sorted.size()));
    if (rank == 0) rank = 1;
    if (rank > sorted.size()) rank = sorted.size();
    return sorted[rank - 1];
}

inline Summary summarize(std::vector<double> xs) {
    Summary s;
    if (xs.empty()) return s;
    std::sort(xs.begin(), xs.end());
    s.count = xs.size();
    double total = 0;
    for (double x : xs) total += x;
    s.mean = total / static_cast<double>(xs.size());
    s.p50 = percentile_sorted(xs, 0.50);
    s.p94 = percentile_sorted(xs, 0.94);
    s.p99 = percentile_sorted(xs, 0.99);
    s.min = xs.front();
    s.max = xs.back();
    return s;
}

// ---------------------------------------------------------------------------
// configuration

struct ScenarioConfig {
    std::uint64_t seed = 0;

    // turnaround
    int requests = 10000;
    int cache_keys = 16;

    // parallel push
    int devices = 24;
    int fog_count = 2;
    int tasks_per_device = 5;
    double service_ms = 50.0;

    // selective logging
    int sensor_fogs = 2;
    int sensors_per_fog = 4;
    double duration_ms = 300000.0;
    double sample_period_ms = 100.0;
    double anomaly_rate = 0.05;
    double anomaly_threshold = 100.0;
    double batch_interval_ms = 5000.0;
    double scan_cost_ms = 0.1;

    // fail-over
    double tick_period_ms = 20.0;
    double tick_service_ms = 1.0;
    double fail_at_ms = -1.0;  // < 0: drawn uniformly from the window below
    double fail_window_lo_ms = 500.0;
    double fail_window_hi_ms = 1500.0;
    double heal_delay_ms = 3000.0;
    double run_ms = 12000.0;
    double suspect_after_ms = 25.0;  // ten sigma above the healthy round trip

    // parking
    int spots_per_zone = 6;
    int parking_requests_per_zone = -1;  // < 0: one request per spot
    double request_gap_ms = 200.0;

    // strip link jitter entirely (closed-form checks)
    bool deterministic_links = false;

    static ScenarioConfig from_json(const json& j) {
        ScenarioConfig c;
        c.seed = j.value("seed", c.seed);
        c.requests = j.value("requests", c.requests);
        c.cache_keys = j.value("cache_keys", c.cache_keys);
        c.devices = j.value("devices", c.devices);
        c.fog_count = j.value("fog_count", c.fog_count);
        c.tasks_per_device = j.value("tasks_per_device", c.tasks_per_device);
        c.service_ms = j.value("service_ms", c.service_ms);
        c.sensor_fogs = j.value("sensor_fogs", c.sensor_fogs);
        c.sensors_per_fog = j.value("sensors_per_fog", c.sensors_per_fog);
        c.duration_ms = j.value("duration_ms", c.duration_ms);
        c.sample_period_ms = j.value("sample_period_ms", c.sample_period_ms);
        c.anomaly_rate = j.value("anomaly_rate", c.anomaly_rate);
        c.anomaly_threshold = j.value("anomaly_threshold", c.anomaly_threshold);
        c.batch_interval_ms = j.value("batch_interval_ms", c.batch_interval_ms);
        c.scan_cost_ms = j.value("scan_cost_ms", c.scan_cost_ms);
        c.tick_period_ms = j.value("tick_period_ms", c.tick_period_ms);
        c.tick_service_ms = j.value("tick_service_ms", c.tick_service_ms);
        c.fail_at_ms = j.value("fail_at_ms", c.fail_at_ms);
        c.fail_window_lo_ms = j.value("fail_window_lo_ms", c.fail_window_lo_ms);
        c.fail_window_hi_ms = j.value("fail_window_hi_ms", c.fail_window_hi_ms);
        c.heal_delay_ms = j.value("heal_delay_ms", c.heal_delay_ms);
        c.run_ms = j.value("run_ms", c.run_ms);
        c.suspect_after_ms = j.value("suspect_after_ms", c.suspect_after_ms);
        c.spots_per_zone = j.value("spots_per_zone", c.spots_per_zone);
        c.parking_requests_per_zone =
            j.value("parking_requests_per_zone", c.parking_requests_per_zone);
        c.request_gap_ms = j.value("request_gap_ms", c.request_gap_ms);
        c.deterministic_links = j.value("deterministic_links", c.deterministic_links);
        return c;
    }

    json to_json() const {
        return json{{"seed", seed},
                    {"requests", requests},
                    {"cache_keys", cache_keys},
                    {"devices", devices},
                    {"fog_count", fog_count},
                    {"tasks_per_device", tasks_per_device},
                    {"service_ms", service_ms},
                    {"sensor_fogs", sensor_fogs},
                    {"sensors_per_fog", sensors_per_fog},
                    {"duration_ms", duration_ms},
                    {"sample_period_ms", sample_period_ms},
                    {"anomaly_rate", anomaly_rate},
                    {"anomaly_threshold", anomaly_threshold},
                    {"batch_interval_ms", batch_interval_ms},
                    {"scan_cost_ms", scan_cost_ms},
                    {"tick_period_ms", tick_period_ms},
                    {"tick_service_ms", tick_service_ms},
                    {"fail_at_ms", fail_at_ms},
                    {"fail_window_lo_ms", fail_window_lo_ms},
                    {"fail_window_hi_ms", fail_window_hi_ms},
                    {"heal_delay_ms", heal_delay_ms},
                    {"run_ms", run_ms},
                    {"suspect_after_ms", suspect_after_ms},
                    {"spots_per_zone", spots_per_zone},
                    {"parking_requests_per_zone", parking_requests_per_zone},
                    {"request_gap_ms", request_gap_ms},
                    {"deterministic_links", deterministic_links}};
    }

    void apply_link_noise(Topology& t) const {
        if (!deterministic_links) return;
        t.latency().device_fog.stddev_ms = 0;
        t.latency().fog_fog.stddev_ms = 0;
        t.latency().to_cloud.stddev_ms = 0;
    }
};

struct ScenarioResult {
    std::string name;
    std::vector<double> samples;             // latency samples, milliseconds
    std::map<std::string, double> scalars;   // named scenario metrics
    std::string trace_text;                  // formatted event trace

    Summary summary() const { return summarize(samples); }
};

// ---------------------------------------------------------------------------
// turnaround

enum class TurnaroundMode { FogOnly, FogCloud, FogCloudCache, CloudOnly };

inline const char* to_string(TurnaroundMode m) {
    switch (m) {
        case TurnaroundMode::FogOnly: return "fog_only";
        case TurnaroundMode::FogCloud: return "fog_cloud";
        case TurnaroundMode::FogCloudCache: return "fog_cloud_cache";
        case TurnaroundMode::CloudOnly: return "cloud_only";
    }
    return "fog_only";
}

inline TurnaroundMode turnaround_mode_from(const std::string& s) {
    if (s == "fog_only") return TurnaroundMode::FogOnly;
    if (s == "fog_cloud") return TurnaroundMode::FogCloud;
    if (s == "fog_cloud_cache") return TurnaroundMode::FogCloudCache;
    if (s == "cloud_only") return TurnaroundMode::CloudOnly;
    throw Error(Errc::BadConfig, "unknown turnaround mode '" + s + "'");
}

// One device issues sequential requests; the serving tier depends on the
// mode. Fog-backed modes place the worker gate on the fog, cloud modes on
// the cloud; the cache mode additionally simulates a per-key upstream fetch
// on the first touch.
inline ScenarioResult run_turnaround(TurnaroundMode mode, const ScenarioConfig& cfg) {
    const bool through_fog = mode != TurnaroundMode::CloudOnly;
    const bool on_fog =
        mode == TurnaroundMode::FogOnly || mode == TurnaroundMode::FogCloudCache;

    Topology topo;
    topo.add_node({"cloud", NodeLevel::Cloud, "", 1024, -1, 300.0});
    if (through_fog) topo.add_node({"f1", NodeLevel::Fog, "cloud", 1024, -1, 300.0});
    topo.add_node({"d1", NodeLevel::Device, through_fog ? "f1" : "cloud", 1024, -1, 300.0});
    topo.set_seed(cfg.seed);
    topo.finalize();
    cfg.apply_link_noise(topo);
    Simulation sim(std::move(topo));
    Runtime rt(sim);

    std::string src = std::string("jcond { eligible: sys.type == \"") +
                      (on_fog ? "fog" : "cloud") +
                      "\"; }\n"
                      "jsync double function {eligible} serve(int k) { host(); }\n";
    std::vector<std::string> nodes = {"cloud", "d1"};
    if (through_fog) nodes.insert(nodes.begin() + 1, "f1");
    AppHandle app = rt.deploy(dsl::parse_program(src, std::string("turnaround_") +
                                                          to_string(mode)),
                              nodes);

    std::set<std::int64_t> cache;
    bool last_was_hit = false;
    rt.bind(
        app, "serve",
        [&](CallCtx& c) -> Value {
            if (mode != TurnaroundMode::FogCloudCache) return Value{1.0};
            std::int64_t key = std::get<std::int64_t>(c.args.at(0));
            if (cache.count(key)) {
                last_was_hit = true;
                return Value{1.0};
            }
            cache.insert(key);
            last_was_hit = false;
            // first touch: fetch through to the cloud and back before replying
            c.defer();
            double round_trip = sim.link_latency(c.node, "cloud") +
                                sim.link_latency(c.node, "cloud");
            CallCtx* ctx = &c;
            sim.schedule_in(round_trip, c.node, "cache_fill",
                            "key=" + std::to_string(key),
                            [ctx] { ctx->finish(Value{1.0}); });
            return Value{};
        },
        0.0);

    ScenarioResult res;
    res.name = std::string("turnaround_") + to_string(mode);
    std::vector<double> hit_samples, miss_samples;

    int issued = 0;
    std::function<void()> next = [&] {
        if (issued >= cfg.requests) return;
        std::int64_t key = cfg.cache_keys > 0 ? issued % cfg.cache_keys : 0;
        ++issued;
        double t0 = sim.now();
        rt.call_sync(app, "d1", "serve", {Value{key}},
                     [&, t0](std::vector<SyncEntry> entries) {
                         double sample = entries.at(0).completed_at - t0;
                         res.samples.push_back(sample);
                         if (mode == TurnaroundMode::FogCloudCache)
                             (last_was_hit ? hit_samples : miss_samples).push_back(sample);
                         next();
                     });
    };
    next();
    sim.run_all();

    if (mode == TurnaroundMode::FogCloudCache) {
        Summary hits = summarize(hit_samples), misses = summarize(miss_samples);
        res.scalars["hit_count"] = static_cast<double>(hits.count);
        res.scalars["miss_count"] = static_cast<double>(misses.count);
        res.scalars["hit_mean_ms"] = hits.mean;
        res.scalars["miss_mean_ms"] = misses.mean;
    }
    res.trace_text = format_trace(sim.trace());
    return res;
}

// ---------------------------------------------------------------------------
// parallel push

// Devices are spread uniformly at random over the fog pool. At time zero
// every device logs its batch of work items to its fog; each fog works the
// items off first-in-first-out at the configured service time and hands
// every finished result to a co-located consumer app over a flow. The
// sample for an item is the time from being logged to reaching the
// consumer.
inline ScenarioResult run_parallel_push(const ScenarioConfig& cfg) {
    if (cfg.fog_count < 1) throw Error(Errc::BadConfig, "push needs at least one fog");

    RandomStream assign(substream_seed(cfg.seed, "push", "assign"));
    Topology topo;
    topo.add_node({"cloud", NodeLevel::Cloud, "", 1024, -1, 300.0});
    std::vector<std::string> fogs;
    for (int f = 0; f < cfg.fog_count; ++f) {
        fogs.push_back("f" + std::to_string(f + 1));
        topo.add_node({fogs.back(), NodeLevel::Fog, "cloud", 1024, -1, 300.0});
    }
    std::vector<std::string> devs;
    for (int d = 0; d < cfg.devices; ++d) {
        devs.push_back("dv" + std::to_string(d + 1));
        std::string parent = fogs[assign.below(fogs.size())];
        topo.add_node({devs.back(), NodeLevel::Device, parent, 1024, -1, 300.0});
    }
    topo.set_seed(cfg.seed);
    topo.finalize();
    cfg.apply_link_noise(topo);
    Simulation sim(std::move(topo));
    Runtime rt(sim);

    std::vector<std::string> producer_nodes = {"cloud"};
    producer_nodes.insert(producer_nodes.end(), fogs.begin(), fogs.end());
    producer_nodes.insert(producer_nodes.end(), devs.begin(), devs.end());
    std::vector<std::string> consumer_nodes = {"cloud"};
    consumer_nodes.insert(consumer_nodes.end(), fogs.begin(), fogs.end());

    AppHandle producer = rt.deploy(
        dsl::parse_program("jdata { double taskItem as logger(fog); }\n", "push_producer"),
        producer_nodes);
    AppHandle consumer = rt.deploy(
        dsl::parse_program("jdata { double resultSink as broadcaster; }\n", "push_consumer"),
        consumer_nodes);
    int flow = rt.flow_connect(producer, consumer, NodeLevel::Fog);

    ScenarioResult res;
    res.name = "push_f" + std::to_string(cfg.fog_count);

    rt.on_logger_update(producer, "taskItem",
                        [&](const std::string& store, const LogRecord& rec) {
                            rt.exec_on(store, cfg.service_ms,
                                       [&, store, born = rec.t_ms](double) {
                                           rt.flow_write(flow, producer, store, Value{born});
                                       },
                                       "task_done", "src=" + rec.source);
                        });
    for (const auto& f : fogs)
        rt.flow_subscribe(flow, consumer, f, [&](Value v) {
            res.samples.push_back(sim.now() - std::get<double>(v));
        });

    for (const auto& d : devs)
        for (int t = 0; t < cfg.tasks_per_device; ++t)
            rt.logger_write(producer, d, "taskItem", Value{static_cast<double>(t)});
    sim.run_all();

    res.scalars["items"] = static_cast<double>(res.samples.size());
    res.scalars["fog_count"] = static_cast<double>(cfg.fog_count);
    res.trace_text = format_trace(sim.trace());
    return res;
}

// ---------------------------------------------------------------------------
// selective logging

struct VitalSample {
    double t_ms = 0;
    int device = 0;
    double value = 0;
};

// Per-device vitals: one reading per sample period, baseline uniform in
// [60, 100], anomalies above the threshold injected at the anomaly rate.
// Both reporting modes replay the same schedule for a given seed.
inline std::vector<VitalSample> generate_vitals(const ScenarioConfig& cfg, int devices) {
    std::vector<VitalSample> out;
    for (int d = 0; d < devices; ++d) {
        RandomStream rs(substream_seed(cfg.seed, "vitals", "dev" + std::to_string(d)));
        for (double t = cfg.sample_period_ms; t <= cfg.duration_ms + 1e-9;
             t += cfg.sample_period_ms) {
            bool anomalous = rs.bernoulli(cfg.anomaly_rate);
            double v = anomalous ? rs.uniform(cfg.anomaly_threshold + 1.0,
                                              cfg.anomaly_threshold + 40.0)
                                 : rs.uniform(60.0, 100.0);
            out.push_back({t, d, v});
        }
    }
    return out;
}

// Reactive mode ships only out-of-band readings the moment they occur; the
// detection sample is the transport delay to the fog store. Batch mode
// queues everything and drains on a fixed interval; the fog then scans
// each record at the configured cost, and detection happens when the scan
// of an anomalous record completes.
inline std::pair<ScenarioResult, ScenarioResult> run_selective_logging(
    const ScenarioConfig& cfg) {
    const int devices = cfg.sensor_fogs * cfg.sensors_per_fog;
    std::vector<VitalSample> schedule = generate_vitals(cfg, devices);

    auto device_name = [&](int d) {
        return "f" + std::to_string(d / cfg.sensors_per_fog + 1) + "d" +
               std::to_string(d % cfg.sensors_per_fog + 1);
    };

    // --- reactive -----------------------------------------------------
    ScenarioResult reactive;
    reactive.name = "selective_reactive";
    {
        Topology tree = make_tree(cfg.sensor_fogs, cfg.sensors_per_fog, cfg.seed);
        cfg.apply_link_noise(tree);
        Simulation sim(std::move(tree));
        Runtime rt(sim);
        std::vector<std::string> nodes = {"cloud"};
        for (int f = 0; f < cfg.sensor_fogs; ++f) {
            nodes.push_back("f" + std::to_string(f + 1));
            for (int d = 0; d < cfg.sensors_per_fog; ++d)
                nodes.push_back("f" + std::to_string(f + 1) + "d" + std::to_string(d + 1));
        }
        AppHandle app = rt.deploy(
            dsl::parse_program("jdata { double alert as logger(fog); }\n", "reactive"),
            nodes);
        rt.on_logger_update(app, "alert",
                            [&](const std::string&, const LogRecord& rec) {
                                reactive.samples.push_back(sim.now() - rec.t_ms);
                            });
        // each anomalous reading is written the moment it is generated, so
        // the record timestamp doubles as the generation time
        for (const auto& s : schedule) {
            if (s.value <= cfg.anomaly_threshold) continue;
            sim.schedule(s.t_ms, device_name(s.device), "", "", [&, s] {
                rt.logger_write(app, device_name(s.device), "alert", Value{s.value});
            });
        }
        sim.run_all();
        reactive.scalars["anomalies"] = static_cast<double>(reactive.samples.size());
        reactive.trace_text = format_trace(sim.trace());
    }

    // --- batch ----------------------------------------------------------
    ScenarioResult batch;
    batch.name = "selective_batch";
    {
        Topology tree = make_tree(cfg.sensor_fogs, cfg.sensors_per_fog, cfg.seed);
        cfg.apply_link_noise(tree);
        Simulation sim(std::move(tree));
        Runtime rt(sim);
        std::vector<std::string> nodes = {"cloud"};
        for (int f = 0; f < cfg.sensor_fogs; ++f) {
            nodes.push_back("f" + std::to_string(f + 1));
            for (int d = 0; d < cfg.sensors_per_fog; ++d)
                nodes.push_back("f" + std::to_string(f + 1) + "d" + std::to_string(d + 1));
        }
        AppHandle app = rt.deploy(
            dsl::parse_program("jdata { string readings as logger(fog); }\n", "batch"),
            nodes);
        rt.on_logger_update(app, "readings",
                            [&](const std::string& store, const LogRecord& rec) {
                                const std::string& text = std::get<std::string>(rec.value);
                                double born = 0, val = 0;
                                std::sscanf(text.c_str(), "%lf|%lf", &born, &val);
                                rt.exec_on(store, cfg.scan_cost_ms,
                                           [&, born, val](double done_at) {
                                               if (val > cfg.anomaly_threshold)
                                                   batch.samples.push_back(done_at - born);
                                           },
                                           "scan", "");
                            });
        // group the schedule into per-device drain batches
        std::map<int, std::vector<const VitalSample*>> per_device;
        for (const auto& s : schedule) per_device[s.device].push_back(&s);
        for (const auto& [dev, recs] : per_device) {
            std::size_t next = 0;
            for (double w = cfg.batch_interval_ms; next < recs.size();
                 w += cfg.batch_interval_ms) {
                std::vector<const VitalSample*> window;
                while (next < recs.size() && recs[next]->t_ms <= w + 1e-9)
                    window.push_back(recs[next++]);
                if (window.empty()) continue;
                sim.schedule(w, device_name(dev), "", "", [&, dev, window] {
                    for (const VitalSample* s : window) {
                        char buf[64];
                        std::snprintf(buf, sizeof buf, "%.6f|%.6f", s->t_ms, s->value);
                        rt.logger_write(app, device_name(dev), "readings",
                                        Value{std::string(buf)});
                    }
                });
            }
        }
        sim.run_all();
        batch.scalars["records"] = static_cast<double>(schedule.size());
        batch.scalars["anomalies"] = static_cast<double>(batch.samples.size());
        batch.trace_text = format_trace(sim.trace());
    }

    return {std::move(reactive), std::move(batch)};
}

// ---------------------------------------------------------------------------
// fail-over

// One device drives steady work ticks through its fog. Each completed tick
// advances a progress counter that the fog checkpoints to a cloud logger
// and to a fog-level logger whose store is replicated on the shadow hosts.
// The primary fog is killed at a configurable (or random) time: the device
// times out, reports the silence, re-routes to the first live shadow, and
// re-attaches there. The resumed fog rebuilds progress from its replica
// and from the recovery broadcast the cloud issues when it sees the
// checkpoint stream regress.
inline ScenarioResult run_failover(const ScenarioConfig& cfg) {
    alloc::Instance inst;
    inst.devices = {"d1"};
    inst.fogs = {{"f1", 100.0, 4}, {"f2", 100.0, 4}, {"f3", 100.0, 4}};
    inst.c = {{1.0, 2.0, 3.0}};
    inst.u = {{0.0, 5.0, 7.0}, {5.0, 0.0, 9.0}, {7.0, 9.0, 0.0}};
    alloc::Solution sol = alloc::solve_exact(inst);

    double fail_at = cfg.fail_at_ms;
    if (fail_at < 0) {
        RandomStream rs(substream_seed(cfg.seed, "failover", "failtime"));
        fail_at = rs.uniform(cfg.fail_window_lo_ms, cfg.fail_window_hi_ms);
    }
    const double heal_at = fail_at + cfg.heal_delay_ms;

    Topology topo;
    topo.add_node({"cloud", NodeLevel::Cloud, "", 1024, -1, 300.0});
    topo.add_node({"f1", NodeLevel::Fog, "cloud", 1024, -1, 300.0});
    topo.add_node({"f2", NodeLevel::Fog, "cloud", 1024, -1, 300.0});
    topo.add_node({"f3", NodeLevel::Fog, "cloud", 1024, -1, 300.0});
    topo.add_node({"d1", NodeLevel::Device, "f1", 1024, -1, 300.0});
    topo.add_failure("f1", fail_at, heal_at);
    topo.set_seed(cfg.seed);
    topo.finalize();
    cfg.apply_link_noise(topo);
    Simulation sim(std::move(topo));
    Runtime rt(sim, {cfg.suspect_after_ms, 1.0});
    alloc::Router router(inst, sol, cfg.suspect_after_ms);
    rt.set_router(router);

    const std::string src =
        "jdata {\n"
        "    int saveState as logger(cloud);\n"
        "    int progress as logger(fog);\n"
        "    int recoveryState as broadcaster;\n"
        "}\n"
        "jcond { onFog: sys.type == \"fog\"; }\n"
        "jsync int function {onFog} workTick(int cur) { host(); }\n";
    AppHandle app =
        rt.deploy(dsl::parse_program(src, "failover"), {"cloud", "f1", "f2", "f3", "d1"});

    const std::vector<std::string> fog_ids = {"f1", "f2", "f3"};
    std::map<std::string, std::int64_t> local;  // per-fog progress counter
    rt.bind(app, "workTick", [&](CallCtx& c) -> Value {
        std::int64_t base = local[c.node];
        for (const auto& p : fog_ids) {
            if (p == c.node) continue;
            const auto& rep = rt.replica_records(app, c.node, p, "progress", p);
            if (!rep.empty())
                base = std::max(base, std::get<std::int64_t>(rep.back().value));
        }
        if (auto cell = rt.read_broadcast(app, c.node, "recoveryState"))
            base = std::max(base, std::get<std::int64_t>(cell->second));
        std::int64_t next = base + 1;
        local[c.node] = next;
        rt.logger_write(app, c.node, "progress", Value{next});
        rt.logger_write(app, c.node, "saveState", Value{next});
        return Value{next};
    }, cfg.tick_service_ms);

    std::int64_t cloud_max = 0;
    rt.on_logger_update(app, "saveState", [&](const std::string&, const LogRecord& rec) {
        std::int64_t v = std::get<std::int64_t>(rec.value);
        if (v < cloud_max)
            rt.broadcast(app, "cloud", "recoveryState", Value{cloud_max});
        cloud_max = std::max(cloud_max, v);
    });

    std::int64_t checkpoint_at_failure = 0;
    sim.on_fail([&](const std::string& n, double) {
        if (n != "f1") return;
        if (auto latest = rt.logger_latest(app, "cloud", "saveState"))
            checkpoint_at_failure = std::get<std::int64_t>(latest->value);
    });

    bool failed_over = false;
    double detect_ms = -1, resume_ms = -1;
    std::string attached_to;
    std::int64_t first_resumed = -1, max_seen = 0, ok_ticks = 0, recomputed = 0;
    std::function<void()> tick = [&] {
        if (sim.now() >= cfg.run_ms) return;
        double t0 = sim.now();
        rt.call_sync(app, "d1", "workTick", {Value{max_seen}},
                     [&, t0](std::vector<SyncEntry> entries) {
                         const SyncEntry& e = entries.at(0);
                         if (e.status == SyncEntry::Status::Ok) {
                             std::int64_t p = std::get<std::int64_t>(e.result);
                             ++ok_ticks;
                             if (failed_over && resume_ms < 0) {
                                 resume_ms = sim.now();
                                 first_resumed = p;
                             }
                             if (p <= max_seen) ++recomputed;
                             max_seen = std::max(max_seen, p);
                             sim.schedule_in(cfg.tick_period_ms, "d1", "", "", tick);
                             return;
                         }
                         // silence: report it, re-route, re-attach, retry
                         std::string cur = sim.topology().parent_of("d1");
                         router.report_no_response(cur, t0, sim.now());
                         failed_over = true;
                         if (detect_ms < 0) detect_ms = sim.now();
                         std::string next_fog = router.route("d1");
                         if (!next_fog.empty() && next_fog != cur) {
                             rt.attach("d1", next_fog);
                             attached_to = next_fog;
                         }
                         tick();
                     });
    };
    sim.schedule(1.0, "d1", "", "", tick);
    sim.run_all();

    ScenarioResult res;
    res.name = "failover";
    double gap = (resume_ms >= 0 && fail_at >= 0) ? resume_ms - fail_at : 0.0;
    if (resume_ms >= 0) res.samples.push_back(gap);
    auto save_audit = rt.audit_logger(app, "saveState");
    auto prog_audit = rt.audit_logger(app, "progress");
    res.scalars["fail_at_ms"] = fail_at;
    res.scalars["detect_ms"] = detect_ms;
    res.scalars["resume_ms"] = resume_ms;
    res.scalars["reattached"] = attached_to.empty() ? 0.0 : 1.0;
    {
        // did the device land on one of its primary's shadow hosts?
        double on_shadow = 0.0;
        for (int s : sol.shadows[0])
            if (!attached_to.empty() && fog_ids[static_cast<std::size_t>(s)] == attached_to)
                on_shadow = 1.0;
        res.scalars["attached_to_shadow"] = on_shadow;
    }
    res.scalars["recovery_gap_ms"] = gap;
    res.scalars["checkpoint_at_failure"] = static_cast<double>(checkpoint_at_failure);
    res.scalars["first_resumed"] = static_cast<double>(first_resumed);
    res.scalars["final_progress"] = static_cast<double>(max_seen);
    res.scalars["ok_ticks"] = static_cast<double>(ok_ticks);
    res.scalars["recomputed_ticks"] = static_cast<double>(recomputed);
    res.scalars["lost_records"] =
        static_cast<double>(save_audit.lost + prog_audit.lost);
    res.scalars["staged_records"] =
        static_cast<double>(save_audit.staged + prog_audit.staged);
    res.trace_text = format_trace(sim.trace());
    return res;
}

// ---------------------------------------------------------------------------
// parking

// Three apps joined at the fog tier: spot sensors stream occupancy, an
// allocator consumes the stream and answers car requests over a flow, and
// cars ask their zone's fog for a spot. A zone with no free spots escalates
// through the allocator's cloud store; the cloud answers with a grant
// broadcast drawn from its mirror of every zone.
inline ScenarioResult run_parking(const ScenarioConfig& cfg) {
    const int K = cfg.spots_per_zone;
    if (K < 1) throw Error(Errc::BadConfig, "parking needs at least one spot per zone");

    Topology topo;
    topo.add_node({"cloud", NodeLevel::Cloud, "", 1024, -1, 300.0});
    topo.add_node({"fa", NodeLevel::Fog, "cloud", 1024, -1, 300.0});
    topo.add_node({"fb", NodeLevel::Fog, "cloud", 1024, -1, 300.0});
    std::vector<std::string> sensors_a, sensors_b;
    for (int i = 0; i < 2 * K; ++i) {
        sensors_a.push_back("as" + std::to_string(i + 1));
        topo.add_node({sensors_a.back(), NodeLevel::Device, "fa", 1024, -1, 300.0});
    }
    for (int i = 0; i < K; ++i) {
        sensors_b.push_back("bs" + std::to_string(i + 1));
        topo.add_node({sensors_b.back(), NodeLevel::Device, "fb", 1024, -1, 300.0});
    }
    topo.add_node({"ca", NodeLevel::Device, "fa", 1024, -1, 300.0});
    topo.add_node({"cb", NodeLevel::Device, "fb", 1024, -1, 300.0});
    topo.set_seed(cfg.seed);
    topo.finalize();
    cfg.apply_link_noise(topo);
    Simulation sim(std::move(topo));
    Runtime rt(sim);

    std::vector<std::string> sensing_nodes = {"cloud", "fa", "fb"};
    sensing_nodes.insert(sensing_nodes.end(), sensors_a.begin(), sensors_a.end());
    sensing_nodes.insert(sensing_nodes.end(), sensors_b.begin(), sensors_b.end());
    AppHandle sensing = rt.deploy(
        dsl::parse_program("jdata { string spotState as logger(fog); }\n", "sensing"),
        sensing_nodes);
    AppHandle alloc_app = rt.deploy(
        dsl::parse_program("jdata {\n"
                           "    string zoneMirror as logger(cloud);\n"
                           "    string spotGrant as broadcaster;\n"
                           "}\n",
                           "allocating"),
        {"cloud", "fa", "fb"});
    AppHandle cars = rt.deploy(
        dsl::parse_program("jcond { onFog: sys.type == \"fog\"; }\n"
                           "jsync string function {onFog} requestSpot(string req) { host(); }\n",
                           "cars"),
        {"cloud", "fa", "fb", "ca", "cb"});
    int car_flow = rt.flow_connect(cars, alloc_app, NodeLevel::Fog);

    std::map<std::string, std::string> spot_zone;  // sensor -> its fog
    for (const auto& s : sensors_a) spot_zone[s] = "fa";
    for (const auto& s : sensors_b) spot_zone[s] = "fb";

    // allocator state: per-fog local free sets plus the cloud's global view
    std::map<std::string, std::set<std::string>> free_local, free_global;
    std::map<std::string, CallCtx*> pending;        // request id -> parked context
    std::map<std::string, std::string> esc_owner;   // request id -> asking fog

    rt.on_logger_update(sensing, "spotState",
                        [&](const std::string& store, const LogRecord& rec) {
                            const std::string& st = std::get<std::string>(rec.value);
                            if (st == "free")
                                free_local[store].insert(rec.source);
                            else
                                free_local[store].erase(rec.source);
                            rt.logger_write(alloc_app, store, "zoneMirror",
                                            Value{"state|" + rec.source + "|" + st});
                        });

    rt.bind(cars, "requestSpot", [&](CallCtx& c) -> Value {
        std::string req = std::get<std::string>(c.args.at(0));
        c.defer();
        pending[req] = &c;
        rt.flow_write(car_flow, cars, c.node, Value{req});
        return Value{};
    });

    // allocator fog side: answer locally or escalate through the cloud
    for (const std::string fog : {"fa", "fb"}) {
        rt.flow_subscribe(car_flow, alloc_app, fog, [&, fog](Value v) {
            std::string req = std::get<std::string>(v);
            auto& free = free_local[fog];
            if (!free.empty()) {
                std::string spot = *free.begin();
                free.erase(free.begin());
                rt.logger_write(alloc_app, fog, "zoneMirror",
                                Value{"state|" + spot + "|taken"});
                rt.flow_write(car_flow, alloc_app, fog, Value{"grant|" + req + "|" + spot});
            } else {
                esc_owner[req] = fog;
                rt.logger_write(alloc_app, fog, "zoneMirror",
                                Value{"request|" + req + "|" + fog});
            }
        });
        rt.flow_subscribe(car_flow, cars, fog, [&](Value v) {
            const std::string& text = std::get<std::string>(v);
            std::size_t a = text.find('|'), b = text.rfind('|');
            std::string req = text.substr(a + 1, b - a - 1), spot = text.substr(b + 1);
            auto it = pending.find(req);
            if (it == pending.end()) return;
            CallCtx* ctx = it->second;
            pending.erase(it);
            ctx->finish(Value{spot});
        });
    }

    // cloud side: keep the global mirror, grant escalations from any other
    // zone that still has room
    rt.on_logger_update(alloc_app, "zoneMirror",
                        [&](const std::string&, const LogRecord& rec) {
                            const std::string& text = std::get<std::string>(rec.value);
                            std::size_t a = text.find('|'), b = text.rfind('|');
                            std::string head = text.substr(0, a);
                            std::string mid = text.substr(a + 1, b - a - 1);
                            std::string tail = text.substr(b + 1);
                            if (head == "state") {
                                if (tail == "free")
                                    free_global[spot_zone[mid]].insert(mid);
                                else
                                    free_global[spot_zone[mid]].erase(mid);
                                return;
                            }
                            for (auto& [zone, spots] : free_global) {
                                if (zone == tail || spots.empty()) continue;
                                std::string spot = *spots.begin();
                                spots.erase(spots.begin());
                                rt.broadcast(alloc_app, "cloud", "spotGrant",
                                             Value{"grant|" + mid + "|" + spot});
                                return;
                            }
                        });

    rt.on_broadcast_delivery(
        alloc_app, "spotGrant",
        [&](const std::string& node, std::uint64_t, const Value& v) {
            const std::string& text = std::get<std::string>(v);
            std::size_t a = text.find('|'), b = text.rfind('|');
            std::string req = text.substr(a + 1, b - a - 1), spot = text.substr(b + 1);
            // the zone that owns the spot retires it from its local pool
            if (node == spot_zone[spot]) free_local[node].erase(spot);
            auto it = esc_owner.find(req);
            if (it != esc_owner.end() && it->second == node) {
                esc_owner.erase(it);
                rt.flow_write(car_flow, alloc_app, node, Value{"grant|" + req + "|" + spot});
            }
        });

    // seed occupancy: zone A fully free, zone B fully taken
    double t0 = 1.0;
    for (const auto& s : sensors_a)
        sim.schedule(t0, s, "", "",
                     [&, s] { rt.logger_write(sensing, s, "spotState", Value{"free"}); });
    for (const auto& s : sensors_b)
        sim.schedule(t0, s, "", "",
                     [&, s] { rt.logger_write(sensing, s, "spotState", Value{"taken"}); });

    ScenarioResult res;
    res.name = "parking";
    std::vector<double> local_lat, esc_lat;
    const int requests_per_zone =
        cfg.parking_requests_per_zone < 0 ? K : cfg.parking_requests_per_zone;
    auto drive = [&](const std::string& car, const std::string& zone, double start) {
        for (int i = 0; i < requests_per_zone; ++i) {
            double at = start + i * cfg.request_gap_ms;
            sim.schedule(at, car, "", "", [&, car, zone, i] {
                std::string req = zone + "_r" + std::to_string(i + 1);
                double sent = sim.now();
                rt.call_sync(cars, car, "requestSpot", {Value{req}},
                             [&, sent, zone](std::vector<SyncEntry> entries) {
                                 double sample = entries.at(0).completed_at - sent;
                                 res.samples.push_back(sample);
                                 (zone == "a" ? local_lat : esc_lat).push_back(sample);
                             });
            });
        }
    };
    drive("ca", "a", 100.0);
    drive("cb", "b", 200.0);
    sim.run_all();

    Summary loc = summarize(local_lat), esc = summarize(esc_lat);
    res.scalars["local_count"] = static_cast<double>(loc.count);
    res.scalars["local_mean_ms"] = loc.mean;
    res.scalars["escalated_count"] = static_cast<double>(esc.count);
    res.scalars["escalated_mean_ms"] = esc.mean;
    res.scalars["escalation_rate"] =
        res.samples.empty() ? 0.0
                            : static_cast<double>(esc.count) /
                                  static_cast<double>(res.samples.size());
    res.trace_text = format_trace(sim.trace());
    return res;
}

// ---------------------------------------------------------------------------
// result files

inline std::string format_ms(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline json summary_json(const ScenarioResult& res) {
    Summary s = res.summary();
    json j;
    j["name"] = res.name;
    j["count"] = s.count;
    j["mean_ms"] = s.mean;
    j["p50_ms"] = s.p50;
    j["p94_ms"] = s.p94;
    j["p99_ms"] = s.p99;
    j["min_ms"] = s.min;
    j["max_ms"] = s.max;
    json extra = json::object();
    for (const auto& [k, v] : res.scalars) extra[k] = v;
    j["scalars"] = extra;
    return j;
}

// Writes <name>_samples.csv, <name>_cdf.csv, <name>_summary.json and
// <name>_trace.log under dir. Output depends only on the result contents,
// so identical runs produce identical bytes.
inline void emit_results(const ScenarioResult& res, const std::string& dir) {
    std::filesystem::create_directories(dir);
    auto path = [&](const std::string& suffix) {
        return (std::filesystem::path(dir) / (res.name + suffix)).string();
    };
    {
        std::ofstream out(path("_samples.csv"), std::ios::binary);
        if (!out) throw Error(Errc::BadConfig, "cannot write to '" + dir + "'");
        out << "sample_ms\n";
        for (double v : res.samples) out << format_ms(v) << "\n";
    }
    {
        std::vector<double> sorted = res.samples;
        std::sort(sorted.begin(), sorted.end());
        std::ofstream out(path("_cdf.csv"), std::ios::binary);
        out << "latency_ms,cum_fraction\n";
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            char frac[64];
            std::snprintf(frac, sizeof frac, "%.8f",
                          static_cast<double>(i + 1) / static_cast<double>(sorted.size()));
            out << format_ms(sorted[i]) << "," << frac << "\n";
        }
    }
    {
        std::ofstream out(path("_summary.json"), std::ios::binary);
        out << summary_json(res).dump(2) << "\n";
    }
    {
        std::ofstream out(path("_trace.log"), std::ios::binary);
        out << res.trace_text;
    }
}

}  // namespace canopy::exp
