#pragma once

// Discrete-event core. Events execute in (timestamp, insertion sequence)
// order; ties in time always resolve by insertion order, which is what makes
// whole-run traces byte-identical for a fixed (topology, seed).

#include <cstdio>
#include <functional>
#include <map>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "canopy/error.hpp"
#include "canopy/rng.hpp"
#include "canopy/topology.hpp"

namespace canopy {

// what to do when an event's target node is down at delivery time
enum class DownPolicy { Run, Defer, Drop };

struct TraceRecord {
    double t_ms = 0;
    std::uint64_t seq = 0;
    std::string kind;
    std::string node;
    std::string detail;
};

using SimTrace = std::vector<TraceRecord>;

inline std::string format_record(const TraceRecord& r) {
    char head[64];
    std::snprintf(head, sizeof head, "%.6f\t%llu\t", r.t_ms,
                  static_cast<unsigned long long>(r.seq));
    return std::string(head) + r.kind + "\t" + r.node + "\t" + r.detail;
}

inline std::string format_trace(const SimTrace& t) {
    std::string out;
    for (const auto& r : t) {
        out += format_record(r);
        out += '\n';
    }
    return out;
}

inline std::uint64_t trace_hash(const SimTrace& t) { return fnv1a(format_trace(t)); }

class Simulation {
public:
    explicit Simulation(Topology topo) : topo_(std::move(topo)) {
        for (const auto& w : topo_.failures()) schedule_window_events(w);
    }

    Topology& topology() { return topo_; }
    const Topology& topology() const { return topo_; }

    double now() const { return now_; }
    std::uint64_t seed() const { return topo_.seed(); }

    std::uint64_t schedule(double t, const std::string& node, const std::string& kind,
                           const std::string& detail, std::function<void()> fn,
                           DownPolicy policy = DownPolicy::Run,
                           std::function<void()> on_drop = {}) {
        if (t < now_)
            throw Error(Errc::ScheduleInPast, kind + " at " + std::to_string(t) +
                                                  "ms, clock already at " +
                                                  std::to_string(now_) + "ms");
        if (!node.empty()) topo_.node(node);  // existence check
        Task task;
        task.t = t;
        task.seq = next_event_++;
        task.node = node;
        task.kind = kind;
        task.detail = detail;
        task.policy = policy;
        task.fn = std::move(fn);
        task.on_drop = std::move(on_drop);
        std::uint64_t id = task.seq;
        queue_.push(std::move(task));
        return id;
    }

    std::uint64_t schedule_in(double dt, const std::string& node, const std::string& kind,
                              const std::string& detail, std::function<void()> fn,
                              DownPolicy policy = DownPolicy::Run,
                              std::function<void()> on_drop = {}) {
        return schedule(now_ + dt, node, kind, detail, std::move(fn), policy,
                        std::move(on_drop));
    }

    // append a trace record at the current time
    void record(const std::string& kind, const std::string& node, const std::string& detail) {
        trace_.push_back({now_, next_trace_++, kind, node, detail});
    }

    void run_until(double t_end) {
        while (!queue_.empty() && queue_.top().t <= t_end) step();
        if (t_end > now_) now_ = t_end;
    }

    void run_all() {
        while (!queue_.empty()) step();
    }

    bool idle() const { return queue_.empty(); }

    const SimTrace& trace() const { return trace_; }

    // register the failure window and fire fail/heal hooks at its edges
    void inject_failure(const std::string& node, double fail_at, double heal_at) {
        topo_.add_failure(node, fail_at, heal_at);
        schedule_window_events(topo_.failures().back());
    }

    void on_fail(std::function<void(const std::string&, double)> fn) {
        fail_hooks_.push_back(std::move(fn));
    }
    void on_heal(std::function<void(const std::string&, double)> fn) {
        heal_hooks_.push_back(std::move(fn));
    }

    // named substream tied to this run's master seed, cached per (owner, purpose)
    RandomStream& stream(const std::string& owner, const std::string& purpose) {
        auto key = std::make_pair(owner, purpose);
        auto it = streams_.find(key);
        if (it == streams_.end())
            it = streams_.emplace(key, substream(topo_.seed(), owner, purpose)).first;
        return it->second;
    }

    // latency draw for one tree hop; the stream owner is the edge's lower end
    double link_latency(const std::string& from, const std::string& to) {
        LinkClass c = topo_.link_class(from, to);
        const std::string* owner = &from;
        if (c != LinkClass::FogToFog) {
            int rf = level_rank(topo_.level_of(from));
            int rt = level_rank(topo_.level_of(to));
            owner = rf <= rt ? &from : &to;
        }
        const char* purpose = c == LinkClass::DeviceToFog ? "lat.device_fog"
                              : c == LinkClass::FogToFog  ? "lat.fog_fog"
                                                          : "lat.to_cloud";
        return sample_latency(topo_.latency().spec(c), stream(*owner, purpose));
    }

    // sum of per-hop draws along the current tree path
    double path_latency(const std::string& from, const std::string& to) {
        if (from == to) return 0.0;
        auto path = topo_.tree_path(from, to);
        double total = 0;
        for (std::size_t i = 0; i + 1 < path.size(); ++i)
            total += link_latency(path[i], path[i + 1]);
        return total;
    }

private:
    struct Task {
        double t = 0;
        std::uint64_t seq = 0;
        std::string node, kind, detail;
        DownPolicy policy = DownPolicy::Run;
        std::function<void()> fn;
        std::function<void()> on_drop;
    };

    struct Later {
        bool operator()(const Task& a, const Task& b) const {
            if (a.t != b.t) return a.t > b.t;
            return a.seq > b.seq;
        }
    };

    void step() {
        Task task = queue_.top();
        queue_.pop();
        now_ = task.t;
        if (!task.node.empty() && task.policy != DownPolicy::Run &&
            topo_.is_down(task.node, now_)) {
            if (task.policy == DownPolicy::Defer) {
                double heal = topo_.heal_time(task.node, now_);
                if (std::isfinite(heal)) {
                    task.t = heal;
                    task.seq = next_event_++;
                    record("evt_defer", task.node, task.kind);
                    queue_.push(std::move(task));
                    return;
                }
            }
            record("evt_drop", task.node, task.kind);
            if (task.on_drop) task.on_drop();
            return;
        }
        if (!task.kind.empty()) record(task.kind, task.node, task.detail);
        if (task.fn) task.fn();
    }

    void schedule_window_events(const FailureWindow& w) {
        if (w.fail_at_ms >= now_) {
            schedule(w.fail_at_ms, "", "node_fail", w.node, [this, n = w.node] {
                for (auto& h : fail_hooks_) h(n, now_);
            });
        }
        if (std::isfinite(w.heal_at_ms) && w.heal_at_ms >= now_) {
            schedule(w.heal_at_ms, "", "node_heal", w.node, [this, n = w.node] {
                for (auto& h : heal_hooks_) h(n, now_);
            });
        }
    }

    Topology topo_;
    std::priority_queue<Task, std::vector<Task>, Later> queue_;
    SimTrace trace_;
    double now_ = 0;
    std::uint64_t next_event_ = 0;
    std::uint64_t next_trace_ = 0;
    std::map<std::pair<std::string, std::string>, RandomStream> streams_;
    std::vector<std::function<void(const std::string&, double)>> fail_hooks_;
    std::vector<std::function<void(const std::string&, double)>> heal_hooks_;
};

}  // namespace canopy
