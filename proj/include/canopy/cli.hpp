// Command-line front doors: validate declaration files, solve placement
// instances, run the scenario drivers, and host the operator shell. Exit
// codes: 0 success, 1 runtime failure, 2 parse/usage failure, 3 infeasible
// placement. CANOPY_SEED overrides every seed when set.
#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "canopy/dshell.hpp"
#include "canopy/experiments.hpp"

namespace canopy::cli {

inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kParseError = 2;
inline constexpr int kInfeasible = 3;

inline std::string slurp_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::BadConfig, "cannot open '" + path + "'");
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
}

inline std::string file_stem(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

inline std::optional<std::uint64_t> env_seed() {
    if (const char* s = std::getenv("CANOPY_SEED"))
        return std::strtoull(s, nullptr, 10);
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// parse

inline int run_parse_cmd(const std::string& file, std::ostream& out, std::ostream& err) {
    std::string src;
    try {
        src = slurp_file(file);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    dsl::ProgramDecl prog;
    try {
        prog = dsl::parse_program(src, file_stem(file));
    } catch (const dsl::ParseFailure& e) {
        err << file << ":" << e.loc().line << ":" << e.loc().col << ": error: "
            << e.reason() << "\n";
        return kParseError;
    }
    auto diags = dsl::validate_program(prog);
    if (!diags.empty()) {
        for (const auto& d : diags)
            err << file << ":" << d.loc.line << ":" << d.loc.col << ": error: "
                << d.message << "\n";
        return kParseError;
    }
    out << "ok: " << prog.app_name << " data=" << prog.data.size()
        << " conditions=" << prog.conds.size() << " functions=" << prog.funcs.size()
        << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// allocate

inline int run_allocate_cmd(const std::string& file, bool check_oracle, bool csv,
                            std::ostream& out, std::ostream& err) {
    alloc::Instance inst;
    try {
        if (csv) {
            inst = alloc::Instance::from_csv(slurp_file(file), 400.0, 3);
        } else {
            inst = alloc::Instance::from_json(nlohmann::json::parse(slurp_file(file)));
        }
    } catch (const nlohmann::json::parse_error& e) {
        err << file << ": error: " << e.what() << "\n";
        return kParseError;
    } catch (const Error& e) {
        err << file << ": error: " << e.what() << "\n";
        return e.code() == Errc::Infeasible ? kInfeasible : kParseError;
    }

    alloc::Solution sol;
    try {
        sol = alloc::solve_exact(inst);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.code() == Errc::Infeasible ? kInfeasible : kRuntimeError;
    }

    nlohmann::json doc = sol.to_json(inst);
    if (check_oracle) {
        double oracle_z = alloc::solve_oracle(inst);
        doc["oracle_z"] = oracle_z;
        if (std::abs(oracle_z - sol.z) > 1e-9) {
            err << "error: solver z=" << sol.z << " disagrees with oracle z=" << oracle_z
                << "\n";
            return kRuntimeError;
        }
    }
    std::string out_path =
        (std::filesystem::path(file).parent_path() / (file_stem(file) + ".solution.json"))
            .string();
    std::ofstream solution(out_path, std::ios::binary);
    solution << doc.dump(2) << "\n";
    out << doc.dump(2) << "\n";
    err << "solution written to " << out_path << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// experiment

inline int run_experiment_cmd(const std::string& name, const std::string& config_file,
                              const std::string& out_dir, std::ostream& out,
                              std::ostream& err) {
    exp::ScenarioConfig cfg;
    try {
        cfg = exp::ScenarioConfig::from_json(nlohmann::json::parse(slurp_file(config_file)));
    } catch (const nlohmann::json::parse_error& e) {
        err << config_file << ": error: " << e.what() << "\n";
        return kParseError;
    }
    if (auto seed = env_seed()) cfg.seed = *seed;

    auto emit = [&](const exp::ScenarioResult& r) {
        exp::emit_results(r, out_dir);
        exp::Summary s = r.summary();
        out << r.name << ": count=" << s.count << " mean_ms=" << exp::format_ms(s.mean)
            << " p50_ms=" << exp::format_ms(s.p50) << "\n";
    };

    if (name == "turnaround") {
        for (auto mode :
             {exp::TurnaroundMode::FogOnly, exp::TurnaroundMode::FogCloud,
              exp::TurnaroundMode::FogCloudCache, exp::TurnaroundMode::CloudOnly})
            emit(exp::run_turnaround(mode, cfg));
        return kOk;
    }
    if (name == "push") {
        nlohmann::json ratios;
        std::map<int, double> means;
        for (int fogs : {2, 4, 8}) {
            exp::ScenarioConfig c = cfg;
            c.fog_count = fogs;
            exp::ScenarioResult r = exp::run_parallel_push(c);
            means[fogs] = r.summary().mean;
            emit(r);
        }
        ratios["mean_ms_f2"] = means[2];
        ratios["mean_ms_f4"] = means[4];
        ratios["mean_ms_f8"] = means[8];
        ratios["ratio_f4_over_f2"] = means[4] / means[2];
        ratios["ratio_f8_over_f4"] = means[8] / means[4];
        std::ofstream rf(
            (std::filesystem::path(out_dir) / "push_ratios.json").string(),
            std::ios::binary);
        rf << ratios.dump(2) << "\n";
        return kOk;
    }
    if (name == "selective") {
        auto [reactive, batch] = exp::run_selective_logging(cfg);
        emit(reactive);
        emit(batch);
        return kOk;
    }
    if (name == "failover") {
        emit(exp::run_failover(cfg));
        return kOk;
    }
    if (name == "parking") {
        emit(exp::run_parking(cfg));
        return kOk;
    }
    err << "error: unknown experiment '" << name
        << "' (expected turnaround|push|selective|failover|parking)\n";
    return kParseError;
}

// ---------------------------------------------------------------------------
// dshell

inline int run_dshell_cmd(const std::string& topology_file,
                          const std::string& script_file, std::istream& fallback_in,
                          std::ostream& out, std::ostream& err) {
    Topology topo;
    try {
        topo = Topology::from_json(nlohmann::json::parse(slurp_file(topology_file)));
    } catch (const nlohmann::json::parse_error& e) {
        err << topology_file << ": error: " << e.what() << "\n";
        return kParseError;
    }
    if (auto seed = env_seed()) topo.set_seed(*seed);

    Simulation sim(std::move(topo));
    Runtime rt(sim);
    std::set<std::string> held;
    for (const auto& id : sim.topology().ids()) held.insert(id);
    shell::DShell sh(rt, held);

    if (!script_file.empty()) {
        std::ifstream script(script_file, std::ios::binary);
        if (!script) {
            err << "error: cannot open '" << script_file << "'\n";
            return kRuntimeError;
        }
        shell::Repl repl(sh, script, out);
        return repl.run();
    }
    shell::Repl repl(sh, fallback_in, out);
    return repl.run();
}

// ---------------------------------------------------------------------------
// argv dispatch

inline void print_usage(std::ostream& err) {
    err << "usage:\n"
           "  canopy parse <file>\n"
           "  canopy allocate <instance> [--oracle] [--csv]\n"
           "  canopy experiment <turnaround|push|selective|failover|parking>"
           " --config <file> --out <dir>\n"
           "  canopy dshell --topology <file> [--script <file>]\n";
}

inline int dispatch(int argc, char** argv, std::istream& in = std::cin,
                    std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        if (args.empty()) {
            print_usage(err);
            return kParseError;
        }
        const std::string& cmd = args[0];
        if (cmd == "parse") {
            if (args.size() != 2) {
                print_usage(err);
                return kParseError;
            }
            return run_parse_cmd(args[1], out, err);
        }
        if (cmd == "allocate") {
            std::string file;
            bool oracle = false, csv = false;
            for (std::size_t i = 1; i < args.size(); ++i) {
                if (args[i] == "--oracle")
                    oracle = true;
                else if (args[i] == "--csv")
                    csv = true;
                else if (file.empty())
                    file = args[i];
                else {
                    print_usage(err);
                    return kParseError;
                }
            }
            if (file.empty()) {
                print_usage(err);
                return kParseError;
            }
            return run_allocate_cmd(file, oracle, csv, out, err);
        }
        if (cmd == "experiment") {
            std::string name, config, out_dir;
            for (std::size_t i = 1; i < args.size(); ++i) {
                if (args[i] == "--config" && i + 1 < args.size())
                    config = args[++i];
                else if (args[i] == "--out" && i + 1 < args.size())
                    out_dir = args[++i];
                else if (name.empty())
                    name = args[i];
                else {
                    print_usage(err);
                    return kParseError;
                }
            }
            if (name.empty() || config.empty() || out_dir.empty()) {
                print_usage(err);
                return kParseError;
            }
            return run_experiment_cmd(name, config, out_dir, out, err);
        }
        if (cmd == "dshell") {
            std::string topo, script;
            for (std::size_t i = 1; i < args.size(); ++i) {
                if (args[i] == "--topology" && i + 1 < args.size())
                    topo = args[++i];
                else if (args[i] == "--script" && i + 1 < args.size())
                    script = args[++i];
                else {
                    print_usage(err);
                    return kParseError;
                }
            }
            if (topo.empty()) {
                print_usage(err);
                return kParseError;
            }
            return run_dshell_cmd(topo, script, in, out, err);
        }
        print_usage(err);
        return kParseError;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.code() == Errc::Infeasible ? kInfeasible : kRuntimeError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
}

}  // namespace canopy::cli
