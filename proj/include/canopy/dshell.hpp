// An operator shell over one runtime: spawn programs as jobs on nodes the
// shell holds, watch them come up on the simulated clock, pipe running jobs
// together, and manage their lifecycle. The line-oriented REPL on top is
// deterministic for a fixed seed, so scripted sessions replay byte-for-byte.
#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "canopy/runtime.hpp"

namespace canopy::shell {

enum class JobState { Spawning, Running, Stopped, Failed };
enum class SpawnMode { Shell, Cold };

inline const char* to_string(JobState s) {
    switch (s) {
        case JobState::Spawning: return "spawning";
        case JobState::Running: return "running";
        case JobState::Stopped: return "stopped";
        case JobState::Failed: return "failed";
    }
    return "spawning";
}

inline const char* to_string(SpawnMode m) {
    return m == SpawnMode::Shell ? "shell" : "cold";
}

struct Job {
    int id = -1;
    std::string app_name;
    AppHandle app = -1;  // the job's runtime namespace
    SpawnMode mode = SpawnMode::Cold;
    JobState state = JobState::Spawning;
    std::set<std::string> nodes;
    std::map<std::string, double> started_at;  // per-node up time
    double spawned_at = 0;
    double running_at = -1;  // set when the last node reports up
};

class DShell {
public:
    struct Costs {
        double init_ms = 300.0;   // cold start, charged per node, in series
        double reuse_ms = 20.0;   // shell reuse, parallel across subtrees
    };

    DShell(Runtime& rt, std::set<std::string> held) : DShell(rt, std::move(held), Costs()) {}

    DShell(Runtime& rt, std::set<std::string> held, Costs costs)
        : rt_(rt), held_(std::move(held)), costs_(costs) {
        for (const auto& n : held_) rt_.sim().topology().node(n);  // must exist
    }

    Runtime& runtime() { return rt_; }
    Simulation& sim() { return rt_.sim(); }
    const std::set<std::string>& held() const { return held_; }
    const Costs& costs() const { return costs_; }

    // Deploy the program as a new job on a subset of the shell's resources.
    // Nodes come up on the simulated clock: cold mode pays the full install
    // cost on every node one after another, shell mode pays the reuse cost
    // with sibling subtrees brought up in parallel.
    Job& spawn(const dsl::ProgramDecl& prog, const std::vector<std::string>& nodes,
               SpawnMode mode) {
        for (const auto& n : nodes)
            if (!held_.count(n))
                throw Error(Errc::ResourceViolation,
                            "node '" + n + "' is not held by this shell");
        AppHandle app = rt_.deploy(prog, nodes);
        jobs_.push_back(std::make_unique<Job>());
        Job& j = *jobs_.back();
        j.id = next_id_++;
        j.app = app;
        j.app_name = rt_.app_name(app);
        j.mode = mode;
        j.nodes.insert(nodes.begin(), nodes.end());
        j.spawned_at = sim().now();
        sim().record("job_spawn", "",
                     "job=" + std::to_string(j.id) + " app=" + j.app_name +
                         " mode=" + to_string(mode) +
                         " nodes=" + std::to_string(j.nodes.size()));
        schedule_bringup(j);
        return j;
    }

    // Running -> Stopped; tears the job's namespace down. Spawning jobs may
    // also be killed, which cancels their pending bring-up.
    void kill(int id) {
        Job& j = job(id);
        if (j.state == JobState::Stopped) return;
        j.state = JobState::Stopped;
        rt_.undeploy(j.app);
        sim().record("job_stop", "", "job=" + std::to_string(id));
    }

    // Flow between two running jobs that share nodes at the level.
    int pipe(int id_a, int id_b, NodeLevel level) {
        Job& a = job(id_a);
        Job& b = job(id_b);
        if (a.state != JobState::Running || b.state != JobState::Running)
            throw Error(Errc::NotDeployed, "pipe needs two running jobs");
        return rt_.flow_connect(a.app, b.app, level);
    }

    Job& job(int id) {
        for (auto& j : jobs_)
            if (j->id == id) return *j;
        throw Error(Errc::UnknownNode, "no job " + std::to_string(id));
    }

    std::vector<const Job*> jobs() const {
        std::vector<const Job*> out;
        for (const auto& j : jobs_) out.push_back(j.get());
        return out;
    }

private:
    void schedule_bringup(Job& j) {
        std::string root;
        for (const auto& n : j.nodes)
            if (rt_.app_parent(j.app, n).empty()) root = n;
        if (j.mode == SpawnMode::Cold) {
            double t = sim().now();
            for (const auto& n : preorder(j, root)) {
                t += costs_.init_ms;
                schedule_up(j, n, t);
            }
        } else {
            std::function<void(const std::string&, double)> walk =
                [&](const std::string& n, double ready) {
                    double up = ready + costs_.reuse_ms;
                    schedule_up(j, n, up);
                    for (const auto& c : rt_.app_children(j.app, n)) walk(c, up);
                };
            walk(root, sim().now());
        }
    }

    std::vector<std::string> preorder(Job& j, const std::string& root) {
        std::vector<std::string> order, stack{root};
        while (!stack.empty()) {
            std::string n = stack.back();
            stack.pop_back();
            order.push_back(n);
            auto kids = rt_.app_children(j.app, n);
            for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
        }
        return order;
    }

    void schedule_up(Job& j, const std::string& node, double at) {
        Job* jp = &j;
        sim().schedule(
            at, node, "job_up", "job=" + std::to_string(j.id) + " node=" + node,
            [this, jp, node] {
                if (jp->state != JobState::Spawning) return;
                jp->started_at[node] = sim().now();
                if (jp->started_at.size() == jp->nodes.size()) {
                    jp->state = JobState::Running;
                    jp->running_at = sim().now();
                    sim().record("job_running", "", "job=" + std::to_string(jp->id));
                }
            },
            DownPolicy::Drop,
            [this, jp] {
                if (jp->state != JobState::Spawning) return;
                jp->state = JobState::Failed;
                sim().record("job_failed", "", "job=" + std::to_string(jp->id));
            });
    }

    Runtime& rt_;
    std::set<std::string> held_;
    Costs costs_;
    std::vector<std::unique_ptr<Job>> jobs_;
    int next_id_ = 1;
};

// ---------------------------------------------------------------------------
// REPL

// Line commands: run <file> <cold|shell> <node>... | jobs | kill <id> |
// pipe <a> <b> <level> | tree | quit. Every line is echoed, all output goes
// to one stream, and time only moves through the simulation, so a scripted
// session with a fixed seed produces an identical transcript.
class Repl {
public:
    Repl(DShell& sh, std::istream& in, std::ostream& out)
        : sh_(sh), in_(in), out_(out) {}

    // optional hook for tests: resolve a program file to source text
    std::function<std::string(const std::string&)> file_loader;

    int run() {
        std::string line;
        while (std::getline(in_, line)) {
            out_ << "dshell> " << line << "\n";
            if (!handle(line)) break;
        }
        return 0;
    }

    bool handle(const std::string& line) {
        std::istringstream ss(line);
        std::vector<std::string> tok;
        std::string t;
        while (ss >> t) tok.push_back(t);
        if (tok.empty()) return true;
        try {
            if (tok[0] == "quit") {
                out_ << "bye\n";
                return false;
            }
            if (tok[0] == "run") return cmd_run(tok), true;
            if (tok[0] == "jobs") return cmd_jobs(), true;
            if (tok[0] == "kill") return cmd_kill(tok), true;
            if (tok[0] == "pipe") return cmd_pipe(tok), true;
            if (tok[0] == "tree") return cmd_tree(), true;
            out_ << "usage: run <file> <cold|shell> <node>... | jobs | kill <id> | "
                    "pipe <a> <b> <level> | tree | quit\n";
        } catch (const std::exception& e) {
            out_ << "error: " << e.what() << "\n";
        }
        return true;
    }

private:
    static std::string stem(const std::string& path) {
        std::size_t slash = path.find_last_of('/');
        std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
        std::size_t dot = base.find_last_of('.');
        return dot == std::string::npos ? base : base.substr(0, dot);
    }

    std::string load(const std::string& path) {
        if (file_loader) return file_loader(path);
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(Errc::BadConfig, "cannot open '" + path + "'");
        return std::string(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
    }

    void cmd_run(const std::vector<std::string>& tok) {
        if (tok.size() < 4) {
            out_ << "usage: run <file> <cold|shell> <node>...\n";
            return;
        }
        if (tok[2] != "cold" && tok[2] != "shell") {
            out_ << "usage: run <file> <cold|shell> <node>...\n";
            return;
        }
        dsl::ProgramDecl prog;
        try {
            prog = dsl::parse_program(load(tok[1]), stem(tok[1]));
        } catch (const dsl::ParseFailure& e) {
            out_ << "error: " << tok[1] << ":" << e.loc().line << ":" << e.loc().col
                 << " " << e.reason() << "\n";
            return;
        }
        auto diags = dsl::validate_program(prog);
        if (!diags.empty()) {
            for (const auto& d : diags)
                out_ << "error: " << tok[1] << ":" << d.loc.line << ":" << d.loc.col
                     << " " << d.message << "\n";
            return;
        }
        SpawnMode mode = tok[2] == "shell" ? SpawnMode::Shell : SpawnMode::Cold;
        std::vector<std::string> nodes(tok.begin() + 3, tok.end());
        Job& j = sh_.spawn(prog, nodes, mode);
        sh_.sim().run_all();  // let the bring-up settle
        char at[32];
        std::snprintf(at, sizeof at, "%.6f", j.running_at);
        if (j.state == JobState::Running)
            out_ << "job " << j.id << " " << j.app_name << " running mode="
                 << to_string(j.mode) << " nodes=" << j.nodes.size() << " at t=" << at
                 << "\n";
        else
            out_ << "job " << j.id << " " << j.app_name << " " << to_string(j.state)
                 << "\n";
    }

    void cmd_jobs() {
        auto jobs = sh_.jobs();
        if (jobs.empty()) {
            out_ << "no jobs\n";
            return;
        }
        for (const Job* j : jobs)
            out_ << "job " << j->id << " " << j->app_name << " " << to_string(j->state)
                 << " mode=" << to_string(j->mode) << " nodes=" << j->nodes.size()
                 << "\n";
    }

    void cmd_kill(const std::vector<std::string>& tok) {
        if (tok.size() != 2) {
            out_ << "usage: kill <id>\n";
            return;
        }
        int id = std::stoi(tok[1]);
        sh_.kill(id);
        out_ << "job " << id << " stopped\n";
    }

    void cmd_pipe(const std::vector<std::string>& tok) {
        if (tok.size() != 4) {
            out_ << "usage: pipe <a> <b> <device|fog|cloud>\n";
            return;
        }
        int a = std::stoi(tok[1]), b = std::stoi(tok[2]);
        NodeLevel level = level_from_string(tok[3]);
        int fid = sh_.pipe(a, b, level);
        out_ << "flow " << fid << " connects job " << a << " and job " << b << " at "
             << to_string(level) << "\n";
    }

    void cmd_tree() {
        const Topology& topo = sh_.sim().topology();
        std::function<void(const std::string&, int)> walk = [&](const std::string& n,
                                                                int depth) {
            out_ << std::string(static_cast<std::size_t>(depth) * 2, ' ') << n << " ["
                 << to_string(topo.level_of(n)) << "]";
            std::vector<int> here;
            for (const Job* j : sh_.jobs())
                if (j->state == JobState::Running && j->nodes.count(n))
                    here.push_back(j->id);
            if (!here.empty()) {
                out_ << " jobs:";
                for (int id : here) out_ << " " << id;
            }
            out_ << "\n";
            for (const auto& c : topo.children_of(n)) walk(c, depth + 1);
        };
        walk(topo.cloud_id(), 0);
    }

    DShell& sh_;
    std::istream& in_;
    std::ostream& out_;
};

}  // namespace canopy::shell
