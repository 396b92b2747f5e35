#pragma once

// Application runtime on top of the event core. Each deployed program gets
// an isolated namespace holding its logger streams, broadcaster cells,
// handler bindings and parked invocations.
//
// Loggers flow upward and are reliable: records stage durably at the source
// until the home store acknowledges them end to end, ship in per-channel
// FIFO order (arrival = max(send + latency, previous arrival)), survive
// failures via resend-on-heal, and deduplicate by (source, seq) at the
// store. Broadcasters flow downward and are last-write-wins: each write gets
// a version, nodes keep the highest version seen, and stale deliveries are
// discarded, so per-hop reordering is harmless and healed nodes resync from
// their parent.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "canopy/allocator.hpp"
#include "canopy/dsl.hpp"
#include "canopy/sim.hpp"

namespace canopy {

using dsl::Value;

using AppHandle = int;

struct LogRecord {
    std::string source;
    double t_ms = 0;
    std::uint64_t seq = 0;
    Value value;
};

struct SyncEntry {
    enum class Status { Ok, Timeout, Declined };
    std::string executor;
    Status status = Status::Ok;
    Value result;
    double completed_at = 0;  // when the reply reached the caller
};

class Runtime;

// Execution context a bound handler runs in. Handlers that need to wait on
// nested calls invoke defer() and later finish(); everything else just
// returns a value.
struct CallCtx {
    Runtime* rt = nullptr;
    AppHandle app = -1;
    std::string node;
    std::string func;
    std::vector<Value> args;
    double now = 0;

    void defer() { deferred = true; }
    void finish(Value v) {
        if (finished) return;
        finished = true;
        if (on_finish) on_finish(std::move(v));
    }

    bool deferred = false;
    bool finished = false;
    std::function<void(Value)> on_finish;
};

using HandlerFn = std::function<Value(CallCtx&)>;

class Runtime {
public:
    struct Options {
        double sync_timeout_ms = 300.0;  // ten cloud-hop means
        double default_service_ms = 1.0;
    };

    explicit Runtime(Simulation& sim) : Runtime(sim, Options()) {}

    Runtime(Simulation& sim, Options opt) : sim_(sim), opt_(opt) {
        sim_.on_fail([this](const std::string& n, double t) { handle_fail(n, t); });
        sim_.on_heal([this](const std::string& n, double t) { handle_heal(n, t); });
    }

    Simulation& sim() { return sim_; }
    const Options& options() const { return opt_; }

    // ------------------------------------------------------------------
    // deployment

    AppHandle deploy(const dsl::ProgramDecl& prog, const std::vector<std::string>& nodes) {
        if (nodes.empty()) throw Error(Errc::BadConfig, "deployment node set is empty");
        auto diags = dsl::validate_program(prog);
        if (!diags.empty())
            throw Error(Errc::BadConfig, "program '" + prog.app_name + "' is invalid: " +
                                             diags.front().message);
        auto app = std::make_unique<App>();
        app->name = prog.app_name.empty()
                        ? "app" + std::to_string(apps_.size())
                        : prog.app_name;
        app->prog = prog;
        for (const auto& n : nodes) {
            sim_.topology().node(n);
            if (!app->nodes.insert(n).second)
                throw Error(Errc::DuplicateId, "node '" + n + "' listed twice");
        }
        // the deployment must induce a single tree under the topology
        int roots = 0;
        for (const auto& n : app->nodes)
            if (app_parent_of(*app, n).empty()) {
                ++roots;
                app->root = n;
            }
        if (roots != 1)
            throw Error(Errc::BadConfig, "deployment of '" + app->name +
                                             "' is not a single connected subtree");
        for (const auto& d : prog.data) {
            if (d.kind == dsl::DataKind::Logger) {
                LoggerState st;
                st.decl = d;
                int declared = level_rank(d.effective_level());
                int root_rank = level_rank(sim_.topology().level_of(app->root));
                st.home_level = static_cast<NodeLevel>(std::min(declared, root_rank));
                app->loggers.emplace(d.name, std::move(st));
            } else {
                BroadcasterState st;
                st.decl = d;
                app->broadcasters.emplace(d.name, std::move(st));
            }
        }
        apps_.push_back(std::move(app));
        AppHandle h = static_cast<AppHandle>(apps_.size()) - 1;
        sim_.record("deploy", apps_.back()->root,
                    "app=" + apps_.back()->name + " nodes=" + std::to_string(nodes.size()));
        return h;
    }

    void undeploy(AppHandle h) {
        App& a = app(h);
        a.deployed = false;
        sim_.record("undeploy", a.root, "app=" + a.name);
    }

    const std::string& app_name(AppHandle h) { return app(h).name; }
    const std::set<std::string>& app_nodes(AppHandle h) { return app(h).nodes; }

    // nearest proper ancestor that belongs to the app, empty at the app root
    std::string app_parent(AppHandle h, const std::string& node) {
        return app_parent_of(app(h), node);
    }

    std::vector<std::string> app_children(AppHandle h, const std::string& node) {
        App& a = app(h);
        std::vector<std::string> out;
        for (const auto& n : sim_.topology().ids()) {
            if (!a.nodes.count(n) || n == node) continue;
            if (app_parent_of(a, n) == node) out.push_back(n);
        }
        return out;
    }

    // ------------------------------------------------------------------
    // handlers

    void bind(AppHandle h, const std::string& func, HandlerFn fn, double service_ms = -1) {
        App& a = app(h);
        if (!a.prog.find_func(func))
            throw Error(Errc::UnknownFunction, "program '" + a.name +
                                                   "' declares no function '" + func + "'");
        if (a.handlers.count(func))
            throw Error(Errc::AlreadyBound, "function '" + func + "' is already bound");
        a.handlers[func] = {service_ms < 0 ? opt_.default_service_ms : service_ms,
                            std::move(fn)};
    }

    // service-time execution with a per-node busy watermark: nodes are
    // single-threaded, so work queues behind whatever is already running
    void exec_on(const std::string& node, double service_ms,
                 std::function<void(double)> done, const std::string& kind = "exec",
                 const std::string& detail = "") {
        double start = std::max(sim_.now(), busy_[node]);
        double end = start + service_ms;
        busy_[node] = end;
        sim_.schedule(end, node, kind, detail,
                      [done = std::move(done), end] { done(end); }, DownPolicy::Drop);
    }

    // ------------------------------------------------------------------
    // loggers

    void logger_write(AppHandle h, const std::string& source, const std::string& var,
                      Value value) {
        App& a = app(h);
        LoggerState& lg = logger(a, var);
        const auto& topo = sim_.topology();
        if (level_rank(topo.level_of(source)) > level_rank(lg.home_level))
            throw Error(Errc::LevelViolation,
                        "'" + source + "' sits above the home tier of logger '" + var + "'");
        if (!a.nodes.count(source))
            throw Error(Errc::UnknownNode, "'" + source + "' is not part of app '" + a.name + "'");
        auto& ch = lg.channels[source];
        LogRecord rec{source, sim_.now(), ch.next_seq++, std::move(value)};
        sim_.record("logger_write", source,
                    "app=" + a.name + " var=" + var + " seq=" + std::to_string(rec.seq) +
                        " value=" + dsl::value_text(rec.value));
        if (home_of(a, lg, source) == source) {
            deliver_to_store(h, a, lg, var, source, rec);
            return;
        }
        ch.staged.push_back(std::move(rec));
        ship_channel(h, a, lg, var, source);
    }

    // one entry per source that has records at this node's store: (latest)
    std::vector<LogRecord> logger_snapshot(AppHandle h, const std::string& node,
                                           const std::string& var) {
        App& a = app(h);
        LoggerState& lg = logger(a, var);
        if (sim_.topology().level_of(node) != lg.home_level)
            throw Error(Errc::LevelViolation, "logger '" + var + "' is not stored at '" +
                                                  node + "'");
        std::vector<LogRecord> out;
        auto it = lg.stores.find(node);
        if (it == lg.stores.end()) return out;
        for (const auto& [src, recs] : it->second.by_source)
            if (!recs.empty()) out.push_back(recs.back());
        return out;
    }

    // latest-of-the-latest across sources, resolved at the caller's
    // ancestor-or-self store; empty when nothing has been delivered yet
    std::optional<LogRecord> logger_latest(AppHandle h, const std::string& node,
                                           const std::string& var) {
        App& a = app(h);
        LoggerState& lg = logger(a, var);
        std::string store_node = home_of(a, lg, node);
        auto it = lg.stores.find(store_node);
        if (it == lg.stores.end()) return std::nullopt;
        const LogRecord* best = nullptr;
        for (const auto& [src, recs] : it->second.by_source) {
            if (recs.empty()) continue;
            const LogRecord& cand = recs.back();
            if (!best || cand.t_ms > best->t_ms ||
                (cand.t_ms == best->t_ms && cand.source < best->source))
                best = &cand;
        }
        if (!best) return std::nullopt;
        return *best;
    }

    const std::vector<LogRecord>& logger_store_records(AppHandle h, const std::string& store,
                                                       const std::string& var,
                                                       const std::string& source) {
        static const std::vector<LogRecord> none;
        LoggerState& lg = logger(app(h), var);
        auto it = lg.stores.find(store);
        if (it == lg.stores.end()) return none;
        auto jt = it->second.by_source.find(source);
        return jt == it->second.by_source.end() ? none : jt->second;
    }

    std::vector<std::string> logger_store_sources(AppHandle h, const std::string& store,
                                                  const std::string& var) {
        LoggerState& lg = logger(app(h), var);
        std::vector<std::string> out;
        auto it = lg.stores.find(store);
        if (it == lg.stores.end()) return out;
        for (const auto& [src, recs] : it->second.by_source)
            if (!recs.empty()) out.push_back(src);
        return out;
    }

    // replica of another fog's store held at a shadow
    const std::vector<LogRecord>& replica_records(AppHandle h, const std::string& shadow,
                                                  const std::string& primary,
                                                  const std::string& var,
                                                  const std::string& source) {
        static const std::vector<LogRecord> none;
        LoggerState& lg = logger(app(h), var);
        auto it = lg.replicas.find(shadow);
        if (it == lg.replicas.end()) return none;
        auto jt = it->second.find(primary);
        if (jt == it->second.end()) return none;
        auto kt = jt->second.by_source.find(source);
        return kt == jt->second.by_source.end() ? none : kt->second;
    }

    void on_logger_update(AppHandle h, const std::string& var,
                          std::function<void(const std::string&, const LogRecord&)> fn) {
        logger(app(h), var).subscribers.push_back(std::move(fn));
    }

    struct LoggerAudit {
        std::uint64_t written = 0;
        std::uint64_t delivered = 0;  // distinct (source, seq) across stores
        std::uint64_t staged = 0;     // still unacknowledged at sources
        std::uint64_t lost = 0;       // vanished: neither delivered nor staged
        bool intact() const { return lost == 0; }
    };

    LoggerAudit audit_logger(AppHandle h, const std::string& var) {
        App& a = app(h);
        LoggerState& lg = logger(a, var);
        LoggerAudit audit;
        std::map<std::string, std::set<std::uint64_t>> delivered;
        for (const auto& [store, st] : lg.stores)
            for (const auto& [src, recs] : st.by_source)
                for (const auto& r : recs) delivered[src].insert(r.seq);
        for (const auto& [src, seqs] : delivered) audit.delivered += seqs.size();
        for (const auto& [src, ch] : lg.channels) {
            audit.written += ch.next_seq;
            audit.staged += ch.staged.size();
            std::set<std::uint64_t> staged_seqs;
            for (const auto& r : ch.staged) staged_seqs.insert(r.seq);
            for (std::uint64_t q = 0; q < ch.next_seq; ++q)
                if (!delivered[src].count(q) && !staged_seqs.count(q)) ++audit.lost;
        }
        return audit;
    }

    // ------------------------------------------------------------------
    // broadcasters

    void broadcast(AppHandle h, const std::string& origin, const std::string& var,
                   Value value) {
        App& a = app(h);
        BroadcasterState& bc = broadcaster(a, var);
        if (!a.nodes.count(origin))
            throw Error(Errc::UnknownNode, "'" + origin + "' is not part of app '" + a.name + "'");
        NodeLevel lvl = sim_.topology().level_of(origin);
        if (lvl == NodeLevel::Device)
            throw Error(Errc::LevelViolation,
                        "broadcast of '" + var + "' from device-level node '" + origin + "'");
        std::uint64_t version = ++bc.next_version;
        sim_.record("broadcast", origin,
                    "app=" + a.name + " var=" + var + " version=" + std::to_string(version) +
                        " value=" + dsl::value_text(value));
        accept_broadcast(h, origin, var, version, value);
    }

    std::optional<std::pair<std::uint64_t, Value>> read_broadcast(AppHandle h,
                                                                  const std::string& node,
                                                                  const std::string& var) {
        App& a = app(h);
        BroadcasterState& bc = broadcaster(a, var);
        auto it = bc.delivered.find(node);
        if (it == bc.delivered.end()) return std::nullopt;
        return it->second;
    }

    void on_broadcast_delivery(
        AppHandle h, const std::string& var,
        std::function<void(const std::string&, std::uint64_t, const Value&)> fn) {
        broadcaster(app(h), var).subscribers.push_back(std::move(fn));
    }

    // ------------------------------------------------------------------
    // condition contexts and placement

    dsl::EvalContext context_for(AppHandle h, const std::string& node) {
        App& a = app(h);
        dsl::EvalContext ctx;
        ctx.sys_type = to_string(sim_.topology().level_of(node));
        ctx.sys_rank = sim_.topology().node(node).rank;
        for (const auto& d : a.prog.data) {
            if (d.kind == dsl::DataKind::Logger) {
                auto latest = logger_latest(h, node, d.name);
                ctx.vars[d.name] =
                    latest ? std::optional<Value>(latest->value) : std::nullopt;
            } else {
                auto cell = read_broadcast(h, node, d.name);
                ctx.vars[d.name] =
                    cell ? std::optional<Value>(cell->second) : std::nullopt;
            }
        }
        return ctx;
    }

    dsl::EvalResult eval_gate_at(AppHandle h, const std::string& node,
                                 const std::string& func) {
        App& a = app(h);
        const dsl::FuncDecl* f = a.prog.find_func(func);
        if (!f) throw Error(Errc::UnknownFunction, "no function '" + func + "'");
        if (!f->gate) return {dsl::EvalResult::State::True, {}};
        return dsl::evaluate_gate(*f->gate, a.prog, context_for(h, node));
    }

    struct Placement {
        enum class Kind { Level, None, Blocked };
        Kind kind = Kind::None;
        NodeLevel level = NodeLevel::Device;
        std::vector<std::string> targets;
        std::string missing;  // variable that blocked the decision
    };

    // Lowest level in the caller's subtree with at least one gate-true node.
    // The level commits once one node there is true; undecided (blocked)
    // peers at that level are included and settle on arrival. A level where
    // every verdict so far is blocked leaves the whole placement undecided
    // rather than skipping upward.
    Placement select_level(AppHandle h, const std::string& caller, const std::string& func) {
        App& a = app(h);
        Placement p;
        std::vector<std::string> sub = subtree_nodes(a, caller);
        for (NodeLevel lvl : {NodeLevel::Device, NodeLevel::Fog, NodeLevel::Cloud}) {
            std::vector<std::string> ready, undecided;
            std::string blocked_var;
            for (const auto& n : sub) {
                if (sim_.topology().level_of(n) != lvl) continue;
                auto r = eval_gate_at(h, n, func);
                if (r.state == dsl::EvalResult::State::True) ready.push_back(n);
                if (r.state == dsl::EvalResult::State::Blocked) {
                    undecided.push_back(n);
                    if (blocked_var.empty()) blocked_var = r.missing;
                }
            }
            if (!ready.empty()) {
                p.kind = Placement::Kind::Level;
                p.level = lvl;
                p.targets = ready;
                p.targets.insert(p.targets.end(), undecided.begin(), undecided.end());
                std::sort(p.targets.begin(), p.targets.end());
                return p;
            }
            if (!blocked_var.empty()) {
                p.kind = Placement::Kind::Blocked;
                p.missing = blocked_var;
                return p;
            }
        }
        p.kind = Placement::Kind::None;
        return p;
    }

    // ------------------------------------------------------------------
    // calls

    std::uint64_t call_async(AppHandle h, const std::string& caller, const std::string& func,
                             std::vector<Value> args = {}) {
        return dispatch(h, caller, func, std::move(args), nullptr, "");
    }

    std::uint64_t call_sync(AppHandle h, const std::string& caller, const std::string& func,
                            std::vector<Value> args,
                            std::function<void(std::vector<SyncEntry>)> done) {
        return dispatch(h, caller, func, std::move(args), std::move(done), "");
    }

    // explicit target, which must lie in the caller's subtree
    std::uint64_t call_node_async(AppHandle h, const std::string& caller,
                                  const std::string& target, const std::string& func,
                                  std::vector<Value> args = {}) {
        return dispatch(h, caller, func, std::move(args), nullptr, target);
    }

    std::uint64_t call_node_sync(AppHandle h, const std::string& caller,
                                 const std::string& target, const std::string& func,
                                 std::vector<Value> args,
                                 std::function<void(std::vector<SyncEntry>)> done) {
        return dispatch(h, caller, func, std::move(args), std::move(done), target);
    }

    // ------------------------------------------------------------------
    // flows: zero-latency duplex pipes between two apps sharing a node

    int flow_connect(AppHandle ha, AppHandle hb, NodeLevel level) {
        if (ha == hb)
            throw Error(Errc::SameAppViolation, "a flow must join two distinct apps");
        App& a = app(ha);
        App& b = app(hb);
        Flow fl;
        fl.a = ha;
        fl.b = hb;
        fl.level = level;
        for (const auto& n : a.nodes)
            if (b.nodes.count(n) && sim_.topology().level_of(n) == level)
                fl.nodes.insert(n);
        if (fl.nodes.empty())
            throw Error(Errc::LevelViolation, "apps '" + a.name + "' and '" + b.name +
                                                  "' share no node at level " +
                                                  std::string(to_string(level)));
        flows_.push_back(std::move(fl));
        return static_cast<int>(flows_.size()) - 1;
    }

    void flow_write(int flow_id, AppHandle from, const std::string& node, Value v) {
        Flow& fl = flow(flow_id);
        int dir = flow_dir(fl, from);
        if (!fl.nodes.count(node))
            throw Error(Errc::LevelViolation, "node '" + node + "' is not on this flow");
        sim_.record("flow_msg", node,
                    "flow=" + std::to_string(flow_id) + " from=" + app(from).name +
                        " value=" + dsl::value_text(v));
        auto& sub = fl.subs[node][1 - dir];
        if (sub) {
            // deliver as its own event so the receiver observes a settled sender
            sim_.schedule(sim_.now(), node, "", "",
                          [fn = sub, v = std::move(v)]() mutable { fn(std::move(v)); },
                          DownPolicy::Drop);
        } else {
            fl.queues[node][1 - dir].push_back(std::move(v));
        }
    }

    std::optional<Value> flow_read(int flow_id, AppHandle reader, const std::string& node) {
        Flow& fl = flow(flow_id);
        int dir = flow_dir(fl, reader);
        auto& q = fl.queues[node][dir];
        if (q.empty()) return std::nullopt;
        Value v = std::move(q.front());
        q.pop_front();
        return v;
    }

    void flow_subscribe(int flow_id, AppHandle reader, const std::string& node,
                        std::function<void(Value)> fn) {
        Flow& fl = flow(flow_id);
        int dir = flow_dir(fl, reader);
        fl.subs[node][dir] = std::move(fn);
        auto& q = fl.queues[node][dir];
        while (!q.empty()) {
            Value v = std::move(q.front());
            q.pop_front();
            fl.subs[node][dir](std::move(v));
        }
    }

    // ------------------------------------------------------------------
    // attachment and fail-over

    void set_router(alloc::Router router) { router_ = std::move(router); }
    alloc::Router* router() { return router_ ? &*router_ : nullptr; }

    // move a device under a new parent and bring its state with it:
    // unacknowledged logger records re-ship to the new home and the
    // broadcaster cells resync downward from the new parent
    void attach(const std::string& device, const std::string& new_parent) {
        sim_.topology().set_parent(device, new_parent);
        sim_.record("attach", device, "parent=" + new_parent);
        for (AppHandle h = 0; h < static_cast<AppHandle>(apps_.size()); ++h) {
            App& a = *apps_[h];
            if (!a.deployed || !a.nodes.count(device)) continue;
            for (auto& [var, lg] : a.loggers) {
                auto ch = lg.channels.find(device);
                if (ch == lg.channels.end()) continue;
                // the shipping channel restarts against the new home
                ch->second.in_flight.clear();
                ch->second.last_arrival = 0;
                ch->second.home = home_of(a, lg, device);
                ship_channel(h, a, lg, var, device);
            }
            resync_broadcasts(h, device);
        }
    }

    // ------------------------------------------------------------------

private:
    struct SourceChannel {
        std::uint64_t next_seq = 0;
        std::deque<LogRecord> staged;      // durable until acknowledged
        std::set<std::uint64_t> in_flight; // shipped, not yet delivered/acked
        double last_arrival = 0;           // FIFO watermark toward `home`
        std::string home;
    };

    struct Store {
        std::map<std::string, std::vector<LogRecord>> by_source;
        std::map<std::string, std::uint64_t> next_expected;
        std::map<std::string, std::map<std::uint64_t, LogRecord>> pending;
    };

    struct LoggerState {
        dsl::DataDecl decl;
        NodeLevel home_level = NodeLevel::Fog;
        std::map<std::string, SourceChannel> channels;
        std::map<std::string, Store> stores;
        // replicas[shadow][primary]
        std::map<std::string, std::map<std::string, Store>> replicas;
        std::vector<std::function<void(const std::string&, const LogRecord&)>> subscribers;
    };

    struct BroadcasterState {
        dsl::DataDecl decl;
        std::uint64_t next_version = 0;
        std::map<std::string, std::pair<std::uint64_t, Value>> delivered;
        std::vector<std::function<void(const std::string&, std::uint64_t, const Value&)>>
            subscribers;
    };

    struct Handler {
        double service_ms = 1.0;
        HandlerFn fn;
    };

    struct SyncCall {
        AppHandle app = -1;
        std::string caller, func;
        double t0 = 0, deadline = 0;
        std::map<std::string, std::optional<SyncEntry>> expected;
        std::function<void(std::vector<SyncEntry>)> done;
        bool finished = false;
    };

    struct ParkedCall {
        // what a gate-blocked invocation does once its verdict settles:
        // Ascent resumes climbing on false, Descent re-runs level selection,
        // Fixed declines in place
        enum class Kind { Ascent, Descent, Fixed };
        AppHandle app = -1;
        std::uint64_t call_id = 0;
        std::string node, func, caller;
        std::string ticket;  // placeholder key in the sync call's entry map
        std::vector<Value> args;
        Kind kind = Kind::Fixed;
        bool has_sync = false;
    };

    struct App {
        std::string name;
        dsl::ProgramDecl prog;
        std::set<std::string> nodes;
        std::string root;
        std::map<std::string, LoggerState> loggers;
        std::map<std::string, BroadcasterState> broadcasters;
        std::map<std::string, Handler> handlers;
        bool deployed = true;
    };

    struct Flow {
        AppHandle a = -1, b = -1;
        NodeLevel level = NodeLevel::Fog;
        std::set<std::string> nodes;
        std::map<std::string, std::array<std::deque<Value>, 2>> queues;  // [dir]=toward a/b
        std::map<std::string, std::array<std::function<void(Value)>, 2>> subs;
    };

    App& app(AppHandle h) {
        if (h < 0 || h >= static_cast<AppHandle>(apps_.size()))
            throw Error(Errc::UnknownApp, "no app handle " + std::to_string(h));
        if (!apps_[h]->deployed)
            throw Error(Errc::NotDeployed, "app '" + apps_[h]->name + "' was undeployed");
        return *apps_[h];
    }

    LoggerState& logger(App& a, const std::string& var) {
        auto it = a.loggers.find(var);
        if (it != a.loggers.end()) return it->second;
        if (a.broadcasters.count(var))
            throw Error(Errc::KindMismatch, "'" + var + "' is a broadcaster, not a logger");
        throw Error(Errc::UnknownVariable, "app '" + a.name + "' declares no logger '" + var + "'");
    }

    BroadcasterState& broadcaster(App& a, const std::string& var) {
        auto it = a.broadcasters.find(var);
        if (it != a.broadcasters.end()) return it->second;
        if (a.loggers.count(var))
            throw Error(Errc::KindMismatch, "'" + var + "' is a logger, not a broadcaster");
        throw Error(Errc::UnknownVariable,
                    "app '" + a.name + "' declares no broadcaster '" + var + "'");
    }

    Flow& flow(int id) {
        if (id < 0 || id >= static_cast<int>(flows_.size()))
            throw Error(Errc::UnknownFlow, "no flow " + std::to_string(id));
        return flows_[id];
    }

    static int flow_dir(const Flow& fl, AppHandle from) {
        if (from == fl.a) return 0;
        if (from == fl.b) return 1;
        throw Error(Errc::UnknownFlow, "app is not an endpoint of this flow");
    }

    std::string app_parent_of(App& a, const std::string& node) {
        std::string cur = node;
        while (true) {
            const std::string& p = sim_.topology().parent_of(cur);
            if (p.empty()) return {};
            if (a.nodes.count(p)) return p;
            cur = p;
        }
    }

    std::vector<std::string> subtree_nodes(App& a, const std::string& top) {
        std::vector<std::string> out;
        for (const auto& n : sim_.topology().ids())
            if (a.nodes.count(n) && sim_.topology().is_ancestor_or_self(top, n))
                out.push_back(n);
        return out;
    }

    // store node for a source: nearest app ancestor-or-self at or above the
    // logger's home tier (a device wired straight to the cloud stores its
    // fog-tier logger at the cloud)
    std::string home_of(App& a, LoggerState& lg, const std::string& source) {
        std::string cur = source;
        while (true) {
            if (a.nodes.count(cur) &&
                level_rank(sim_.topology().level_of(cur)) >= level_rank(lg.home_level))
                return cur;
            const std::string& p = sim_.topology().parent_of(cur);
            if (p.empty()) return a.root;
            cur = p;
        }
    }

    // ------------------------------------------------------------------
    // logger transport

    void ship_channel(AppHandle h, App& a, LoggerState& lg, const std::string& var,
                      const std::string& source) {
        auto& ch = lg.channels[source];
        std::string home = home_of(a, lg, source);
        if (ch.home != home) {
            ch.home = home;
            ch.last_arrival = 0;
            ch.in_flight.clear();
        }
        if (!sim_.topology().is_reachable(source, home, sim_.now()))
            return;  // resend sweep fires on heal
        for (const auto& rec : ch.staged) {
            if (ch.in_flight.count(rec.seq)) continue;
            ch.in_flight.insert(rec.seq);
            double arrival = std::max(sim_.now() + sim_.path_latency(source, home),
                                      ch.last_arrival);
            ch.last_arrival = arrival;
            sim_.record("logger_ship", source,
                        "app=" + a.name + " var=" + var + " seq=" + std::to_string(rec.seq) +
                            " home=" + home);
            sim_.schedule(
                arrival, home, "", "",
                [this, h, var, source, home, rec] {
                    App& a2 = app(h);
                    LoggerState& lg2 = logger(a2, var);
                    deliver_to_store(h, a2, lg2, var, home, rec);
                    send_ack(h, a2, lg2, var, home, source, rec.seq);
                },
                DownPolicy::Drop,
                [this, h, var, source, seq = rec.seq] {
                    // home was down at arrival: clear in-flight so heal resends
                    LoggerState& lg2 = logger(app(h), var);
                    lg2.channels[source].in_flight.erase(seq);
                });
        }
    }

    void deliver_to_store(AppHandle h, App& a, LoggerState& lg, const std::string& var,
                          const std::string& store_node, const LogRecord& rec) {
        Store& st = lg.stores[store_node];
        std::uint64_t& expected = st.next_expected[rec.source];
        if (rec.seq < expected || st.pending[rec.source].count(rec.seq)) {
            sim_.record("logger_dup", store_node,
                        "app=" + a.name + " var=" + var + " source=" + rec.source +
                            " seq=" + std::to_string(rec.seq));
            return;
        }
        st.pending[rec.source][rec.seq] = rec;
        auto& buf = st.pending[rec.source];
        while (true) {
            auto it = buf.find(expected);
            if (it == buf.end()) break;
            LogRecord ready = it->second;
            buf.erase(it);
            ++expected;
            st.by_source[ready.source].push_back(ready);
            sim_.record("logger_arrive", store_node,
                        "app=" + a.name + " var=" + var + " source=" + ready.source +
                            " seq=" + std::to_string(ready.seq) +
                            " value=" + dsl::value_text(ready.value));
            replicate_record(h, a, lg, var, store_node, ready);
            for (auto& fn : lg.subscribers) fn(store_node, ready);
            revisit_parked(h);
        }
    }

    // fog stores push every accepted record to the fog's shadow hosts
    void replicate_record(AppHandle h, App& a, LoggerState& lg, const std::string& var,
                          const std::string& store_node, const LogRecord& rec) {
        if (!router_) return;
        if (sim_.topology().level_of(store_node) != NodeLevel::Fog) return;
        std::vector<std::string> hosts = shadow_hosts_of(store_node);
        for (const auto& shadow : hosts) {
            double arrival = sim_.now() + sim_.link_latency(store_node, shadow);
            sim_.schedule(
                arrival, shadow, "replica_arrive",
                "app=" + a.name + " var=" + var + " primary=" + store_node +
                    " source=" + rec.source + " seq=" + std::to_string(rec.seq),
                [this, h, var, store_node, shadow, rec] {
                    LoggerState& lg2 = logger(app(h), var);
                    Store& rep = lg2.replicas[shadow][store_node];
                    auto& seen = rep.next_expected[rec.source];
                    auto& buf = rep.pending[rec.source];
                    if (rec.seq < seen || buf.count(rec.seq)) return;
                    buf[rec.seq] = rec;
                    while (true) {
                        auto it = buf.find(seen);
                        if (it == buf.end()) break;
                        rep.by_source[it->second.source].push_back(it->second);
                        buf.erase(it);
                        ++seen;
                    }
                },
                DownPolicy::Defer);
        }
    }

    std::vector<std::string> shadow_hosts_of(const std::string& fog) {
        std::set<std::string> uniq;
        if (router_) {
            // every device whose primary is this fog shares its shadow list
            for (const auto& dev : sim_.topology().ids_at(NodeLevel::Device)) {
                try {
                    if (router_->primary_of(dev) == fog)
                        for (const auto& s : router_->shadows_of(dev)) uniq.insert(s);
                } catch (const Error&) {
                    // devices without a placement have no replication duty
                }
            }
        }
        return {uniq.begin(), uniq.end()};
    }

    void send_ack(AppHandle h, App& a, LoggerState& lg, const std::string& var,
                  const std::string& home, const std::string& source, std::uint64_t seq) {
        double arrival = sim_.now() + sim_.path_latency(home, source);
        sim_.schedule(arrival, "", "logger_ack",
                      "app=" + a.name + " var=" + var + " source=" + source +
                          " seq=" + std::to_string(seq),
                      [this, h, var, source, seq] {
                          LoggerState& lg2 = logger(app(h), var);
                          auto& ch = lg2.channels[source];
                          while (!ch.staged.empty() && ch.staged.front().seq <= seq)
                              ch.staged.pop_front();
                          for (auto it = ch.in_flight.begin(); it != ch.in_flight.end();)
                              it = *it <= seq ? ch.in_flight.erase(it) : std::next(it);
                      });
    }

    // ------------------------------------------------------------------
    // broadcast transport

    void accept_broadcast(AppHandle h, const std::string& node, const std::string& var,
                          std::uint64_t version, const Value& value) {
        App& a = app(h);
        BroadcasterState& bc = broadcaster(a, var);
        auto it = bc.delivered.find(node);
        if (it != bc.delivered.end() && it->second.first >= version) {
            sim_.record("bcast_stale", node,
                        "app=" + a.name + " var=" + var +
                            " version=" + std::to_string(version));
            return;
        }
        bc.delivered[node] = {version, value};
        sim_.record("bcast_arrive", node,
                    "app=" + a.name + " var=" + var + " version=" + std::to_string(version) +
                        " value=" + dsl::value_text(value));
        for (auto& fn : bc.subscribers) fn(node, version, value);
        revisit_parked(h);
        for (const auto& child : app_children(h, node)) {
            double arrival = sim_.now() + sim_.link_latency(node, child);
            sim_.schedule(
                arrival, child, "", "",
                [this, h, child, var, version, value] {
                    accept_broadcast(h, child, var, version, value);
                },
                DownPolicy::Drop);
        }
    }

    // after a heal or reattach the node pulls the freshest cell from its
    // parent; delivery cascades further down from there
    void resync_broadcasts(AppHandle h, const std::string& node) {
        App& a = app(h);
        std::string parent = app_parent_of(a, node);
        if (parent.empty()) return;
        for (auto& [var, bc] : a.broadcasters) {
            auto it = bc.delivered.find(parent);
            if (it == bc.delivered.end()) continue;
            auto [version, value] = it->second;
            double arrival = sim_.now() + sim_.link_latency(parent, node);
            sim_.record("bcast_resync", node, "app=" + a.name + " var=" + var);
            sim_.schedule(
                arrival, node, "", "",
                [this, h, node, var = var, version, value] {
                    accept_broadcast(h, node, var, version, value);
                },
                DownPolicy::Drop);
        }
    }

    // ------------------------------------------------------------------
    // call dispatch

    std::uint64_t dispatch(AppHandle h, const std::string& caller, const std::string& func,
                           std::vector<Value> args,
                           std::function<void(std::vector<SyncEntry>)> done,
                           const std::string& explicit_target) {
        App& a = app(h);
        const dsl::FuncDecl* f = a.prog.find_func(func);
        if (!f) throw Error(Errc::UnknownFunction, "no function '" + func + "'");
        if (!a.handlers.count(func))
            throw Error(Errc::UnknownFunction, "function '" + func + "' has no bound handler");
        if (!a.nodes.count(caller))
            throw Error(Errc::UnknownNode, "caller '" + caller + "' is not part of the app");

        std::uint64_t id = next_call_++;
        double t0 = sim_.now();
        bool is_sync = static_cast<bool>(done);

        std::vector<std::string> targets;
        bool parked = false;
        std::string park_ticket;
        if (!explicit_target.empty()) {
            if (!sim_.topology().is_ancestor_or_self(caller, explicit_target))
                throw Error(Errc::SubtreeViolation, "target '" + explicit_target +
                                                        "' is outside the subtree of '" +
                                                        caller + "'");
            if (!a.nodes.count(explicit_target))
                throw Error(Errc::UnknownNode, "target is not part of the app");
            targets.push_back(explicit_target);
        } else if (sim_.topology().level_of(caller) == NodeLevel::Device) {
            // worker side: climb the ancestor chain, stop at the first node
            // whose gate holds; a blocked gate parks the call right there
            auto outcome = ascend_from(h, caller, func);
            if (outcome.blocked) {
                park_ticket = park(h, id, outcome.parked_at, caller, func, args, is_sync,
                                   ParkedCall::Kind::Ascent);
                parked = true;
            } else if (outcome.target.empty()) {
                throw Error(Errc::NoneEligible,
                            "no node on the path above '" + caller + "' admits '" + func + "'");
            } else {
                targets.push_back(outcome.target);
            }
        } else {
            // controller side: lowest admitting level within the subtree
            if (f->gate) {
                Placement p = select_level(h, caller, func);
                if (p.kind == Placement::Kind::Blocked) {
                    park_ticket = park(h, id, caller, caller, func, args, is_sync,
                                       ParkedCall::Kind::Descent);
                    parked = true;
                } else if (p.kind == Placement::Kind::None) {
                    throw Error(Errc::NoneEligible, "gate of '" + func +
                                                        "' admits no node under '" + caller + "'");
                } else {
                    targets = p.targets;
                }
            } else {
                targets = device_workers(a, caller);
                if (targets.empty())
                    throw Error(Errc::NoneEligible,
                                "no worker devices under '" + caller + "'");
            }
        }

        sim_.record("invoke_dispatch", caller,
                    "app=" + a.name + " func=" + func + " call=" + std::to_string(id) +
                        (parked ? " parked=1"
                                : " targets=" + std::to_string(targets.size())));

        if (is_sync) {
            SyncCall sc;
            sc.app = h;
            sc.caller = caller;
            sc.func = func;
            sc.t0 = t0;
            sc.deadline = t0 + opt_.sync_timeout_ms;
            sc.done = std::move(done);
            if (parked) sc.expected[park_ticket] = std::nullopt;
            for (const auto& t : targets) sc.expected[t] = std::nullopt;
            sync_calls_[id] = std::move(sc);
            sim_.schedule(t0 + opt_.sync_timeout_ms, "", "", "",
                          [this, id] { expire_sync(id); });
        }

        for (const auto& target : targets) send_invoke(h, id, caller, target, func, args, is_sync);
        return id;
    }

    struct Ascent {
        std::string target;
        std::string parked_at;
        bool blocked = false;
    };

    Ascent ascend_from(AppHandle h, const std::string& caller, const std::string& func) {
        App& a = app(h);
        Ascent out;
        std::string cur = caller;
        while (!cur.empty()) {
            if (a.nodes.count(cur)) {
                auto r = eval_gate_at(h, cur, func);
                if (r.state == dsl::EvalResult::State::True) {
                    out.target = cur;
                    return out;
                }
                if (r.state == dsl::EvalResult::State::Blocked) {
                    out.blocked = true;
                    out.parked_at = cur;
                    return out;
                }
            }
            cur = sim_.topology().parent_of(cur);
        }
        return out;  // nothing admitted the call
    }

    std::vector<std::string> device_workers(App& a, const std::string& top) {
        std::vector<std::string> out;
        for (const auto& n : subtree_nodes(a, top))
            if (sim_.topology().level_of(n) == NodeLevel::Device) out.push_back(n);
        return out;
    }

    std::string park(AppHandle h, std::uint64_t id, const std::string& node,
                     const std::string& caller, const std::string& func,
                     const std::vector<Value>& args, bool has_sync, ParkedCall::Kind kind) {
        ParkedCall pc;
        pc.app = h;
        pc.call_id = id;
        pc.node = node;
        pc.caller = caller;
        pc.func = func;
        pc.ticket = "<park" + std::to_string(park_counter_++) + ">";
        pc.args = args;
        pc.kind = kind;
        pc.has_sync = has_sync;
        std::string ticket = pc.ticket;
        parked_.push_back(std::move(pc));
        sim_.record("invoke_parked", node,
                    "app=" + app(h).name + " func=" + func + " call=" + std::to_string(id));
        return ticket;
    }

    // data arrived somewhere: give every parked call another look; a sweep
    // can itself trigger deliveries, so nested requests queue up and drain
    void revisit_parked(AppHandle h) {
        pending_revisit_.insert(h);
        if (revisiting_) return;
        revisiting_ = true;
        while (!pending_revisit_.empty()) {
            AppHandle cur = *pending_revisit_.begin();
            pending_revisit_.erase(pending_revisit_.begin());
            sweep_parked(cur);
        }
        revisiting_ = false;
    }

    void sweep_parked(AppHandle h) {
        bool progressed = true;
        while (progressed) {
            progressed = false;
            for (std::size_t i = 0; i < parked_.size(); ++i) {
                ParkedCall pc = parked_[i];
                if (pc.app != h) continue;
                if (pc.kind == ParkedCall::Kind::Descent) {
                    Placement p = select_level(pc.app, pc.node, pc.func);
                    if (p.kind == Placement::Kind::Blocked) continue;
                    parked_.erase(parked_.begin() + static_cast<long>(i));
                    progressed = true;
                    if (p.kind == Placement::Kind::None) {
                        settle_declined(pc);
                    } else {
                        sim_.record("invoke_unparked", pc.node,
                                    "app=" + app(pc.app).name + " func=" + pc.func +
                                        " call=" + std::to_string(pc.call_id));
                        if (pc.has_sync) {
                            auto sc = sync_calls_.find(pc.call_id);
                            if (sc != sync_calls_.end() && !sc->second.finished) {
                                sc->second.expected.erase(pc.ticket);
                                for (const auto& t : p.targets)
                                    sc->second.expected[t] = std::nullopt;
                            }
                        }
                        for (const auto& t : p.targets)
                            send_invoke(pc.app, pc.call_id, pc.node, t, pc.func, pc.args,
                                        pc.has_sync);
                    }
                    break;
                }
                auto r = eval_gate_at(pc.app, pc.node, pc.func);
                if (r.state == dsl::EvalResult::State::Blocked) continue;
                parked_.erase(parked_.begin() + static_cast<long>(i));
                progressed = true;
                if (r.state == dsl::EvalResult::State::True) {
                    sim_.record("invoke_unparked", pc.node,
                                "app=" + app(pc.app).name + " func=" + pc.func +
                                    " call=" + std::to_string(pc.call_id));
                    if (pc.has_sync) {
                        auto sc = sync_calls_.find(pc.call_id);
                        if (sc != sync_calls_.end() && !sc->second.finished) {
                            sc->second.expected.erase(pc.ticket);
                            sc->second.expected[pc.node] = std::nullopt;
                        }
                    }
                    execute_invoke(pc.app, pc.call_id, pc.caller, pc.node, pc.func, pc.args,
                                   pc.has_sync);
                } else if (pc.kind == ParkedCall::Kind::Ascent) {
                    // gate settled false here: resume climbing from the parent
                    std::string parent = sim_.topology().parent_of(pc.node);
                    resume_ascent(pc, parent);
                } else {
                    // fixed target declining in place
                    sim_.record("invoke_declined", pc.node,
                                "func=" + pc.func + " call=" + std::to_string(pc.call_id));
                    if (pc.has_sync) {
                        auto sc = sync_calls_.find(pc.call_id);
                        if (sc != sync_calls_.end() && !sc->second.finished) {
                            sc->second.expected.erase(pc.ticket);
                            sc->second.expected[pc.node] =
                                SyncEntry{pc.node, SyncEntry::Status::Declined, Value{},
                                          sim_.now()};
                            maybe_finish_sync(pc.call_id);
                        }
                    }
                }
                break;
            }
        }
    }

    void resume_ascent(const ParkedCall& pc, const std::string& from) {
        App& a = app(pc.app);
        std::string cur = from;
        while (!cur.empty()) {
            if (a.nodes.count(cur)) {
                auto r = eval_gate_at(pc.app, cur, pc.func);
                if (r.state == dsl::EvalResult::State::True) {
                    if (pc.has_sync) {
                        auto sc = sync_calls_.find(pc.call_id);
                        if (sc != sync_calls_.end() && !sc->second.finished) {
                            sc->second.expected.erase(pc.ticket);
                            sc->second.expected[cur] = std::nullopt;
                        }
                    }
                    send_invoke(pc.app, pc.call_id, pc.caller, cur, pc.func, pc.args,
                                pc.has_sync);
                    return;
                }
                if (r.state == dsl::EvalResult::State::Blocked) {
                    ParkedCall again = pc;  // keeps its ticket
                    again.node = cur;
                    parked_.push_back(again);
                    return;
                }
            }
            cur = sim_.topology().parent_of(cur);
        }
        settle_declined(pc);
    }

    void settle_declined(const ParkedCall& pc) {
        sim_.record("invoke_none_eligible", pc.node,
                    "app=" + app(pc.app).name + " func=" + pc.func +
                        " call=" + std::to_string(pc.call_id));
        if (!pc.has_sync) return;
        auto it = sync_calls_.find(pc.call_id);
        if (it == sync_calls_.end() || it->second.finished) return;
        it->second.expected.erase(pc.ticket);
        maybe_finish_sync(pc.call_id);
    }

    // transport leg of an invocation: sender-side reachability hold, then a
    // latency-delayed arrival that re-checks the gate where it lands
    void send_invoke(AppHandle h, std::uint64_t id, const std::string& caller,
                     const std::string& target, const std::string& func,
                     const std::vector<Value>& args, bool has_sync) {
        double t0 = sim_.now();
        if (!sim_.topology().is_reachable(caller, target, t0)) {
            // blocked path: retry once everything on it has healed; give up
            // if that exceeds one timeout window (the sync deadline timer
            // then reports the target as timed out)
            double retry = t0;
            for (const auto& n : sim_.topology().tree_path(caller, target))
                if (sim_.topology().is_down(n, t0))
                    retry = std::max(retry, sim_.topology().heal_time(n, t0));
            if (!std::isfinite(retry) || retry > t0 + opt_.sync_timeout_ms) {
                sim_.record("invoke_expired", caller,
                            "func=" + func + " call=" + std::to_string(id) +
                                " target=" + target);
                return;
            }
            sim_.schedule(retry, "", "", "", [this, h, id, caller, target, func, args,
                                              has_sync] {
                send_invoke(h, id, caller, target, func, args, has_sync);
            });
            return;
        }
        double arrival = t0 + sim_.path_latency(caller, target);
        sim_.schedule(
            arrival, target, "invoke_arrive",
            "func=" + func + " call=" + std::to_string(id),
            [this, h, id, caller, target, func, args, has_sync, t0] {
                if (sim_.now() > t0 + opt_.sync_timeout_ms) {
                    sim_.record("invoke_expired", target,
                                "func=" + func + " call=" + std::to_string(id));
                    return;
                }
                auto r = eval_gate_at(h, target, func);
                if (r.state == dsl::EvalResult::State::Blocked) {
                    std::string ticket =
                        park(h, id, target, caller, func, args, has_sync,
                             sim_.topology().level_of(caller) == NodeLevel::Device
                                 ? ParkedCall::Kind::Ascent
                                 : ParkedCall::Kind::Fixed);
                    if (has_sync) {
                        auto sc = sync_calls_.find(id);
                        if (sc != sync_calls_.end() && !sc->second.finished) {
                            sc->second.expected.erase(target);
                            sc->second.expected[ticket] = std::nullopt;
                        }
                    }
                    return;
                }
                if (r.state == dsl::EvalResult::State::False) {
                    sim_.record("invoke_declined", target,
                                "func=" + func + " call=" + std::to_string(id));
                    resolve_sync(id, target,
                                 SyncEntry{target, SyncEntry::Status::Declined, Value{},
                                           sim_.now()});
                    return;
                }
                execute_invoke(h, id, caller, target, func, args, has_sync);
            },
            DownPolicy::Drop);
    }

    void execute_invoke(AppHandle h, std::uint64_t id, const std::string& caller,
                        const std::string& target, const std::string& func,
                        std::vector<Value> args, bool has_sync) {
        App& a = app(h);
        Handler& hd = a.handlers.at(func);
        exec_on(
            target, hd.service_ms,
            [this, h, id, caller, target, func, args = std::move(args),
             has_sync](double) mutable {
                auto ctx = std::make_shared<CallCtx>();
                ctx->rt = this;
                ctx->app = h;
                ctx->node = target;
                ctx->func = func;
                ctx->args = std::move(args);
                ctx->now = sim_.now();
                ctx->on_finish = [this, id, caller, target, has_sync](Value v) {
                    if (!has_sync) return;
                    double back = sim_.now() + sim_.path_latency(target, caller);
                    sim_.schedule(back, "", "invoke_reply",
                                  "call=" + std::to_string(id) + " from=" + target,
                                  [this, id, target, v = std::move(v)] {
                                      resolve_sync(id, target,
                                                   SyncEntry{target, SyncEntry::Status::Ok,
                                                             v, sim_.now()});
                                  });
                };
                Value out = app(h).handlers.at(func).fn(*ctx);
                if (!ctx->deferred) ctx->finish(std::move(out));
                // keep deferred contexts alive until they finish
                if (ctx->deferred && !ctx->finished) pending_ctx_.push_back(ctx);
                pending_ctx_.erase(
                    std::remove_if(pending_ctx_.begin(), pending_ctx_.end(),
                                   [](const auto& c) { return c->finished; }),
                    pending_ctx_.end());
            },
            "invoke_exec", "app=" + a.name + " func=" + func + " call=" + std::to_string(id));
    }

    void resolve_sync(std::uint64_t id, const std::string& target, SyncEntry entry) {
        auto it = sync_calls_.find(id);
        if (it == sync_calls_.end() || it->second.finished) return;
        auto et = it->second.expected.find(target);
        if (et == it->second.expected.end() || et->second) return;
        et->second = std::move(entry);
        maybe_finish_sync(id);
    }

    void maybe_finish_sync(std::uint64_t id) {
        auto it = sync_calls_.find(id);
        if (it == sync_calls_.end() || it->second.finished) return;
        for (const auto& [t, e] : it->second.expected)
            if (!e) return;
        finish_sync(id);
    }

    void expire_sync(std::uint64_t id) {
        auto it = sync_calls_.find(id);
        if (it == sync_calls_.end() || it->second.finished) return;
        for (auto& [t, e] : it->second.expected)
            if (!e) {
                bool placeholder = t.rfind("<park", 0) == 0;
                e = SyncEntry{placeholder ? it->second.caller : t,
                              SyncEntry::Status::Timeout, Value{}, sim_.now()};
                sim_.record("invoke_timeout", it->second.caller,
                            "func=" + it->second.func + " call=" + std::to_string(id) +
                                " target=" + t);
            }
        finish_sync(id);
    }

    void finish_sync(std::uint64_t id) {
        auto it = sync_calls_.find(id);
        SyncCall& sc = it->second;
        sc.finished = true;
        std::vector<SyncEntry> entries;
        for (auto& [t, e] : sc.expected)
            if (t.rfind("<park", 0) != 0) entries.push_back(*e);
        // parked placeholders that resolved to nothing are dropped
        sim_.record("call_resume", sc.caller,
                    "app=" + app(sc.app).name + " func=" + sc.func +
                        " call=" + std::to_string(id) +
                        " entries=" + std::to_string(entries.size()));
        auto done = std::move(sc.done);
        sync_calls_.erase(it);
        if (done) done(std::move(entries));
    }

    // ------------------------------------------------------------------
    // failure plumbing

    void handle_fail(const std::string& node, double) {
        busy_.erase(node);  // whatever was queued on the node is gone
        for (auto& ap : apps_) {
            if (!ap->deployed || !ap->nodes.count(node)) continue;
            for (auto& [var, bc] : ap->broadcasters) bc.delivered.erase(node);
        }
        // parked invocations on the node are volatile state
        for (std::size_t i = parked_.size(); i-- > 0;)
            if (parked_[i].node == node) {
                settle_declined(parked_[i]);
                parked_.erase(parked_.begin() + static_cast<long>(i));
            }
    }

    void handle_heal(const std::string& node, double) {
        for (AppHandle h = 0; h < static_cast<AppHandle>(apps_.size()); ++h) {
            App& a = *apps_[h];
            if (!a.deployed) continue;
            // flush any channel that can reach its home again
            for (auto& [var, lg] : a.loggers)
                for (auto& [source, ch] : lg.channels)
                    if (!ch.staged.empty()) ship_channel(h, a, lg, var, source);
            if (a.nodes.count(node)) resync_broadcasts(h, node);
        }
    }

    Simulation& sim_;
    Options opt_;
    std::vector<std::unique_ptr<App>> apps_;
    std::vector<Flow> flows_;
    std::map<std::string, double> busy_;
    std::map<std::uint64_t, SyncCall> sync_calls_;
    std::vector<ParkedCall> parked_;
    std::vector<std::shared_ptr<CallCtx>> pending_ctx_;
    std::optional<alloc::Router> router_;
    std::uint64_t next_call_ = 0;
    std::uint64_t park_counter_ = 0;
    bool revisiting_ = false;
    std::set<AppHandle> pending_revisit_;
};

}  // namespace canopy
