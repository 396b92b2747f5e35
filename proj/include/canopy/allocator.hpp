#pragma once

// Capacitated fog activation and device assignment. Cost model: activating
// fog j costs f_j plus replicating its state onto a fixed number of shadow
// fogs (the cheapest rows of the inter-fog matrix), and every device pays the
// latency cost of the fog it is assigned to.
//
//   min  sum_j a_j*(f_j + shadow_j) + sum_ij c_ij*x_ij
//   s.t. each device assigned to exactly one active fog
//        devices per fog <= capacity_j
//        each active fog keeps min(2, |F|-1) shadows on other fogs
//
// Shadow hosts do not need to be active themselves: a replica is a passive
// copy, and the reference solution indeed parks one on an inactive fog.
//
// solve_exact is depth-first branch and bound with lexicographic
// tie-breaking (0-branch first, fogs and devices in index order, strict
// improvement only), so among equal-cost optima the lexicographically
// smallest activation/assignment wins. solve_oracle re-derives the optimum
// by brute-force activation enumeration plus a capacity-vector DP and shares
// no search code with it.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "canopy/error.hpp"
#include "canopy/rng.hpp"

namespace canopy::alloc {

using json = nlohmann::json;

struct FogSpec {
    std::string id;
    double fixed_cost = 400.0;
    int capacity = 3;
};

struct Instance {
    std::vector<std::string> devices;
    std::vector<FogSpec> fogs;
    std::vector<std::vector<double>> c;  // |D| x |F| device-to-fog cost
    std::vector<std::vector<double>> u;  // |F| x |F| inter-fog cost, diagonal unused

    int shadow_count() const {
        if (fogs.size() < 2) return 0;
        return std::min<int>(2, static_cast<int>(fogs.size()) - 1);
    }

    void validate() const {
        std::size_t D = devices.size(), F = fogs.size();
        if (c.size() != D)
            throw Error(Errc::MissingEntry, "device cost matrix has " +
                                                std::to_string(c.size()) + " rows, expected " +
                                                std::to_string(D));
        for (const auto& row : c)
            if (row.size() != F)
                throw Error(Errc::MissingEntry, "device cost row is missing entries");
        if (u.size() != F)
            throw Error(Errc::MissingEntry, "inter-fog cost matrix has " +
                                                std::to_string(u.size()) + " rows, expected " +
                                                std::to_string(F));
        for (const auto& row : u)
            if (row.size() != F)
                throw Error(Errc::MissingEntry, "inter-fog cost row is missing entries");
        for (const auto& row : c)
            for (double v : row)
                if (v < 0) throw Error(Errc::NegativeCost, "device cost below zero");
        for (const auto& row : u)
            for (double v : row)
                if (v < 0) throw Error(Errc::NegativeCost, "inter-fog cost below zero");
        for (const auto& f : fogs) {
            if (f.fixed_cost < 0) throw Error(Errc::NegativeCost, "fixed cost below zero");
            if (f.capacity < 0) throw Error(Errc::NegativeCost, "capacity below zero");
        }
        long total_cap = 0;
        for (const auto& f : fogs) total_cap += f.capacity;
        if (total_cap < static_cast<long>(D))
            throw Error(Errc::Infeasible, "total fog capacity " + std::to_string(total_cap) +
                                              " cannot host " + std::to_string(D) + " devices");
    }

    static Instance from_json(const json& doc) {
        Instance in;
        if (!doc.contains("devices") || !doc.contains("fogs"))
            throw Error(Errc::MissingEntry, "instance needs 'devices' and 'fogs'");
        for (const auto& d : doc["devices"]) in.devices.push_back(d.get<std::string>());
        for (const auto& jf : doc["fogs"]) {
            FogSpec f;
            f.id = jf.at("id").get<std::string>();
            if (jf.contains("fixed_cost")) f.fixed_cost = jf["fixed_cost"].get<double>();
            if (jf.contains("capacity")) f.capacity = jf["capacity"].get<int>();
            in.fogs.push_back(std::move(f));
        }
        if (!doc.contains("c") || !doc.contains("u"))
            throw Error(Errc::MissingEntry, "instance needs 'c' and 'u' matrices");
        for (const auto& row : doc["c"])
            in.c.push_back(row.get<std::vector<double>>());
        for (const auto& row : doc["u"])
            in.u.push_back(row.get<std::vector<double>>());
        in.validate();
        return in;
    }

    json to_json() const {
        json j;
        j["devices"] = devices;
        j["fogs"] = json::array();
        for (const auto& f : fogs)
            j["fogs"].push_back(
                {{"id", f.id}, {"fixed_cost", f.fixed_cost}, {"capacity", f.capacity}});
        j["c"] = c;
        j["u"] = u;
        return j;
    }

    // Two labeled matrices in table layout, separated by a blank line: first
    // device rows x fog columns, then fog rows x fog columns. Fixed cost and
    // capacity are uniform, supplied by the caller.
    static Instance from_csv(const std::string& text, double fixed_cost, int capacity) {
        std::vector<std::vector<std::string>> blocks(1);
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
                line.pop_back();
            if (line.empty()) {
                if (!blocks.back().empty()) blocks.emplace_back();
                continue;
            }
            blocks.back().push_back(line);
        }
        if (!blocks.empty() && blocks.back().empty()) blocks.pop_back();
        if (blocks.size() != 2)
            throw Error(Errc::MissingEntry,
                        "expected two blank-line separated tables, got " +
                            std::to_string(blocks.size()));
        auto split = [](const std::string& l) {
            std::vector<std::string> cells;
            std::string cell;
            std::istringstream ls(l);
            while (std::getline(ls, cell, ',')) {
                std::size_t b = cell.find_first_not_of(" \t");
                std::size_t e = cell.find_last_not_of(" \t");
                cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
            }
            return cells;
        };
        Instance inst;
        auto header = split(blocks[0][0]);
        for (std::size_t j = 1; j < header.size(); ++j)
            inst.fogs.push_back({header[j], fixed_cost, capacity});
        for (std::size_t r = 1; r < blocks[0].size(); ++r) {
            auto cells = split(blocks[0][r]);
            if (cells.size() != header.size())
                throw Error(Errc::MissingEntry, "ragged row in device table: " + blocks[0][r]);
            inst.devices.push_back(cells[0]);
            std::vector<double> row;
            for (std::size_t j = 1; j < cells.size(); ++j) row.push_back(std::stod(cells[j]));
            inst.c.push_back(std::move(row));
        }
        for (std::size_t r = 1; r < blocks[1].size(); ++r) {
            auto cells = split(blocks[1][r]);
            if (cells.size() != header.size())
                throw Error(Errc::MissingEntry, "ragged row in fog table: " + blocks[1][r]);
            std::vector<double> row;
            for (std::size_t j = 1; j < cells.size(); ++j) row.push_back(std::stod(cells[j]));
            inst.u.push_back(std::move(row));
        }
        inst.validate();
        return inst;
    }
};

struct Solution {
    std::vector<int> device_fog;            // per device: fog index
    std::vector<char> active;               // per fog
    std::vector<std::vector<int>> shadows;  // per fog: shadow host indexes, sorted
    double z = 0;
    std::uint64_t nodes_explored = 0;

    json to_json(const Instance& inst) const {
        json j;
        j["z"] = z;
        j["active"] = json::array();
        for (std::size_t k = 0; k < active.size(); ++k)
            if (active[k]) j["active"].push_back(inst.fogs[k].id);
        j["assignments"] = json::array();
        for (std::size_t i = 0; i < device_fog.size(); ++i)
            j["assignments"].push_back(
                {{"device", inst.devices[i]}, {"fog", inst.fogs[device_fog[i]].id}});
        j["shadows"] = json::array();
        for (std::size_t k = 0; k < active.size(); ++k) {
            if (!active[k]) continue;
            json hosts = json::array();
            for (int s : shadows[k]) hosts.push_back(inst.fogs[s].id);
            j["shadows"].push_back({{"fog", inst.fogs[k].id}, {"on", hosts}});
        }
        j["nodes_explored"] = nodes_explored;
        return j;
    }
};

namespace detail {

// cheapest shadow hosts for fog j: smallest u[j][k] over k != j, index ties low
inline std::vector<int> shadow_hosts(const Instance& inst, int j) {
    int S = inst.shadow_count();
    std::vector<std::pair<double, int>> row;
    for (int k = 0; k < static_cast<int>(inst.fogs.size()); ++k)
        if (k != j) row.emplace_back(inst.u[j][k], k);
    std::sort(row.begin(), row.end());
    std::vector<int> hosts;
    for (int s = 0; s < S; ++s) hosts.push_back(row[s].second);
    std::sort(hosts.begin(), hosts.end());
    return hosts;
}

inline double shadow_cost(const Instance& inst, int j) {
    double total = 0;
    for (int k : shadow_hosts(inst, j)) total += inst.u[j][k];
    return total;
}

}  // namespace detail

// Recompute the objective of a candidate solution while checking every
// constraint; the solver never calls this, tests use it as a referee.
inline double objective(const Instance& inst, const Solution& sol) {
    std::size_t D = inst.devices.size(), F = inst.fogs.size();
    auto fail = [](const std::string& what) { throw Error(Errc::ConstraintViolated, what); };
    if (sol.device_fog.size() != D) fail("assignment vector size mismatch");
    if (sol.active.size() != F) fail("activation vector size mismatch");
    if (sol.shadows.size() != F) fail("shadow vector size mismatch");
    std::vector<int> used(F, 0);
    double z = 0;
    for (std::size_t i = 0; i < D; ++i) {
        int j = sol.device_fog[i];
        if (j < 0 || j >= static_cast<int>(F)) fail("device assigned out of range");
        if (!sol.active[j]) fail("device '" + inst.devices[i] + "' assigned to inactive fog");
        if (++used[j] > inst.fogs[j].capacity)
            fail("fog '" + inst.fogs[j].id + "' exceeds its capacity");
        z += inst.c[i][j];
    }
    int S = inst.shadow_count();
    for (std::size_t j = 0; j < F; ++j) {
        if (!sol.active[j]) {
            if (!sol.shadows[j].empty()) fail("inactive fog lists shadows");
            if (used[j]) fail("inactive fog hosts devices");
            continue;
        }
        z += inst.fogs[j].fixed_cost;
        const auto& hosts = sol.shadows[j];
        if (static_cast<int>(hosts.size()) != S)
            fail("fog '" + inst.fogs[j].id + "' needs exactly " + std::to_string(S) +
                 " shadows");
        std::vector<int> sorted = hosts;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t s = 0; s < sorted.size(); ++s) {
            if (sorted[s] == static_cast<int>(j)) fail("fog shadows itself");
            if (sorted[s] < 0 || sorted[s] >= static_cast<int>(F))
                fail("shadow host out of range");
            if (s && sorted[s] == sorted[s - 1]) fail("duplicate shadow host");
        }
        for (int k : hosts) z += inst.u[j][k];
    }
    return z;
}

inline Solution solve_exact(const Instance& inst) {
    inst.validate();
    std::size_t D = inst.devices.size(), F = inst.fogs.size();
    Solution best;
    best.z = std::numeric_limits<double>::infinity();
    std::uint64_t explored = 0;

    if (F == 0 || D == 0) {
        // no devices: activating nothing is optimal (validate() already
        // rejected devices without any capacity)
        best.device_fog.clear();
        best.active.assign(F, 0);
        best.shadows.assign(F, {});
        best.z = 0;
        best.nodes_explored = 0;
        return best;
    }

    std::vector<double> act_cost(F);  // fixed + shadow replication
    for (std::size_t j = 0; j < F; ++j)
        act_cost[j] = inst.fogs[j].fixed_cost + detail::shadow_cost(inst, static_cast<int>(j));

    std::vector<char> a(F, 0);
    std::vector<int> x(D, -1);
    std::vector<int> cap_left(F, 0);

    // per-device assignment search within a fixed activation
    auto assign = [&](auto&& self, std::size_t i, double run_cost,
                      double base_cost) -> void {
        ++explored;
        if (i == D) {
            if (base_cost + run_cost < best.z) {
                best.z = base_cost + run_cost;
                best.device_fog = x;
                best.active = a;
            }
            return;
        }
        // admissible bound: every later device pays at least its cheapest
        // active fog, capacities ignored
        double tail = 0;
        for (std::size_t i2 = i; i2 < D; ++i2) {
            double m = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < F; ++j)
                if (a[j]) m = std::min(m, inst.c[i2][j]);
            tail += m;
        }
        if (base_cost + run_cost + tail >= best.z) return;
        for (std::size_t j = 0; j < F; ++j) {
            if (!a[j] || cap_left[j] == 0) continue;
            --cap_left[j];
            x[i] = static_cast<int>(j);
            self(self, i + 1, run_cost + inst.c[i][j], base_cost);
            x[i] = -1;
            ++cap_left[j];
        }
    };

    // activation search, 0-branch first so the first optimum found is the
    // lexicographically smallest activation vector
    auto search = [&](auto&& self, std::size_t j, double committed) -> void {
        ++explored;
        long cap_possible = 0;
        for (std::size_t k = 0; k < F; ++k)
            if ((k < j && a[k]) || k >= j) cap_possible += inst.fogs[k].capacity;
        if (cap_possible < static_cast<long>(D)) return;
        double tail = 0;
        for (std::size_t i = 0; i < D; ++i) {
            double m = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < F; ++k)
                if ((k < j && a[k]) || k >= j) m = std::min(m, inst.c[i][k]);
            tail += m;
        }
        if (committed + tail >= best.z) return;
        if (j == F) {
            for (std::size_t k = 0; k < F; ++k) cap_left[k] = a[k] ? inst.fogs[k].capacity : 0;
            assign(assign, 0, 0.0, committed);
            return;
        }
        a[j] = 0;
        self(self, j + 1, committed);
        a[j] = 1;
        self(self, j + 1, committed + act_cost[j]);
        a[j] = 0;
    };

    search(search, 0, 0.0);
    if (!std::isfinite(best.z))
        throw Error(Errc::Infeasible, "no activation can host every device");
    best.shadows.assign(F, {});
    for (std::size_t j = 0; j < F; ++j)
        if (best.active[j]) best.shadows[j] = detail::shadow_hosts(inst, static_cast<int>(j));
    best.nodes_explored = explored;
    return best;
}

// Independent re-derivation: enumerate every activation set, then solve the
// assignment subproblem by dynamic programming over remaining-capacity
// vectors. Exponential in |F| and meant for desk-sized cross-checks only.
inline double solve_oracle(const Instance& inst) {
    inst.validate();
    std::size_t D = inst.devices.size(), F = inst.fogs.size();
    if (D == 0) return 0.0;
    if (F > 6 || D > 10)
        throw Error(Errc::BudgetExceeded, "oracle is limited to 6 fogs and 10 devices");

    std::vector<double> act_cost(F);
    for (std::size_t j = 0; j < F; ++j)
        act_cost[j] = inst.fogs[j].fixed_cost + detail::shadow_cost(inst, static_cast<int>(j));

    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 1; mask < (1u << F); ++mask) {
        std::vector<int> act;
        long cap = 0;
        double overhead = 0;
        for (std::size_t j = 0; j < F; ++j) {
            if (mask & (1u << j)) {
                act.push_back(static_cast<int>(j));
                cap += std::min<long>(inst.fogs[j].capacity, static_cast<long>(D));
                overhead += act_cost[j];
            }
        }
        if (cap < static_cast<long>(D) || overhead >= best) continue;

        // pack per-fog remaining capacity into one integer state
        std::vector<long> radix(act.size()), eff(act.size());
        long stride = 1;
        for (std::size_t s = 0; s < act.size(); ++s) {
            eff[s] = std::min<long>(inst.fogs[act[s]].capacity, static_cast<long>(D));
            radix[s] = stride;
            stride *= eff[s] + 1;
        }
        long start = 0;
        for (std::size_t s = 0; s < act.size(); ++s) start += radix[s] * eff[s];

        std::map<long, double> layer{{start, 0.0}};
        for (std::size_t i = 0; i < D; ++i) {
            std::map<long, double> next;
            for (const auto& [state, cost] : layer) {
                for (std::size_t s = 0; s < act.size(); ++s) {
                    long left = (state / radix[s]) % (eff[s] + 1);
                    if (left == 0) continue;
                    long nstate = state - radix[s];
                    double ncost = cost + inst.c[i][act[s]];
                    auto it = next.find(nstate);
                    if (it == next.end() || ncost < it->second) next[nstate] = ncost;
                }
            }
            layer.swap(next);
        }
        for (const auto& [state, cost] : layer) best = std::min(best, overhead + cost);
    }
    if (!std::isfinite(best))
        throw Error(Errc::Infeasible, "no activation can host every device");
    return best;
}

// random instance in the cross-check regime: up to 8 devices, up to 5 fogs,
// integer costs U[1,100], capacities U[1,4]; may be infeasible on purpose
inline Instance random_instance(RandomStream& rng) {
    Instance inst;
    int D = static_cast<int>(rng.uniform_int(1, 8));
    int F = static_cast<int>(rng.uniform_int(1, 5));
    for (int i = 0; i < D; ++i) inst.devices.push_back("D" + std::to_string(i + 1));
    for (int j = 0; j < F; ++j)
        inst.fogs.push_back({"F" + std::to_string(j + 1),
                             static_cast<double>(rng.uniform_int(1, 100)),
                             static_cast<int>(rng.uniform_int(1, 4))});
    for (int i = 0; i < D; ++i) {
        std::vector<double> row;
        for (int j = 0; j < F; ++j) row.push_back(static_cast<double>(rng.uniform_int(1, 100)));
        inst.c.push_back(std::move(row));
    }
    for (int j = 0; j < F; ++j) {
        std::vector<double> row;
        for (int k = 0; k < F; ++k) row.push_back(static_cast<double>(rng.uniform_int(1, 100)));
        inst.u.push_back(std::move(row));
    }
    return inst;
}

// Failure-aware request routing on top of a solved placement. Each device
// prefers its primary fog, then that fog's shadows in replication-cost
// order; when all of those are suspected down, requests fall back to the
// cloud (an empty target).
class Router {
public:
    Router() = default;

    Router(const Instance& inst, const Solution& sol, double suspect_after_ms)
        : suspect_after_ms_(suspect_after_ms) {
        for (std::size_t i = 0; i < inst.devices.size(); ++i) {
            int j = sol.device_fog[i];
            primary_[inst.devices[i]] = inst.fogs[j].id;
            // order shadow hosts by replication cost from the primary
            std::vector<std::pair<double, int>> order;
            for (int k : sol.shadows[j]) order.emplace_back(inst.u[j][k], k);
            std::sort(order.begin(), order.end());
            auto& list = shadows_[inst.devices[i]];
            for (const auto& [cost, k] : order) list.push_back(inst.fogs[k].id);
        }
    }

    double suspect_after() const { return suspect_after_ms_; }

    const std::string& primary_of(const std::string& device) const {
        auto it = primary_.find(device);
        if (it == primary_.end())
            throw Error(Errc::UnknownNode, "no placement for device '" + device + "'");
        return it->second;
    }

    const std::vector<std::string>& shadows_of(const std::string& device) const {
        static const std::vector<std::string> none;
        auto it = shadows_.find(device);
        return it == shadows_.end() ? none : it->second;
    }

    // first non-suspected target in preference order; empty means cloud
    std::string route(const std::string& device) const {
        const std::string& p = primary_of(device);
        if (!suspected_.count(p)) return p;
        for (const auto& s : shadows_of(device))
            if (!suspected_.count(s)) return s;
        return {};
    }

    void report_no_response(const std::string& fog, double sent_ms, double now_ms) {
        if (now_ms - sent_ms >= suspect_after_ms_) suspected_.insert(fog);
    }

    void report_success(const std::string& fog) { suspected_.erase(fog); }

    bool suspected(const std::string& fog) const { return suspected_.count(fog) != 0; }

private:
    std::map<std::string, std::string> primary_;
    std::map<std::string, std::vector<std::string>> shadows_;
    std::set<std::string> suspected_;
    double suspect_after_ms_ = 15.0;
};

}  // namespace canopy::alloc
