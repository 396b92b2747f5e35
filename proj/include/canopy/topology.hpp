#pragma once

// Three-tier tree: one cloud root, fogs under it, devices under fogs (or
// directly under the cloud). Attachment edges can be rewired at run time
// when devices fail over, so parent_of() reflects the current tree, not
// necessarily the declared one.

#include <algorithm>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "canopy/error.hpp"
#include "canopy/rng.hpp"

namespace canopy {

using json = nlohmann::json;

enum class NodeLevel { Device, Fog, Cloud };

// height in the tree: device 0, fog 1, cloud 2
inline int level_rank(NodeLevel l) { return static_cast<int>(l); }

inline const char* to_string(NodeLevel l) {
    switch (l) {
        case NodeLevel::Device: return "device";
        case NodeLevel::Fog: return "fog";
        case NodeLevel::Cloud: return "cloud";
    }
    return "?";
}

inline NodeLevel level_from_string(const std::string& s) {
    if (s == "device" || s == "dev") return NodeLevel::Device;
    if (s == "fog") return NodeLevel::Fog;
    if (s == "cloud") return NodeLevel::Cloud;
    throw Error(Errc::UnknownLevel, "unknown level '" + s + "'");
}

struct NodeSpec {
    std::string id;
    NodeLevel level = NodeLevel::Device;
    std::string parent;        // declared parent, empty for the cloud root
    int capacity = 1024;       // max devices a fog will accept
    int rank = -1;             // -1: defaulted to declaration order within level
    double init_cost_ms = 300.0;
};

enum class LinkClass { DeviceToFog, FogToFog, ToCloud };

struct LatencySpec {
    double mean_ms = 0;
    double stddev_ms = 0;
    double floor_ms = 0.1;
};

struct LatencyModel {
    LatencySpec device_fog{5.0, 1.0, 0.1};
    LatencySpec fog_fog{10.0, 2.0, 0.1};
    LatencySpec to_cloud{30.0, 5.0, 0.1};

    const LatencySpec& spec(LinkClass c) const {
        switch (c) {
            case LinkClass::DeviceToFog: return device_fog;
            case LinkClass::FogToFog: return fog_fog;
            case LinkClass::ToCloud: return to_cloud;
        }
        return to_cloud;
    }
};

// one truncated-normal draw; never below the floor
inline double sample_latency(const LatencySpec& s, RandomStream& rng) {
    return std::max(s.floor_ms, rng.normal(s.mean_ms, s.stddev_ms));
}

struct FailureWindow {
    std::string node;
    double fail_at_ms = 0;
    double heal_at_ms = std::numeric_limits<double>::infinity();
};

class Topology {
public:
    Topology() = default;

    void add_node(NodeSpec spec) {
        if (index_.count(spec.id))
            throw Error(Errc::DuplicateId, "node '" + spec.id + "' declared twice");
        if (spec.rank < 0) spec.rank = level_count_[level_rank(spec.level)]++;
        index_[spec.id] = nodes_.size();
        nodes_.push_back(std::move(spec));
    }

    // Call once after add_node()s: checks tree shape and builds child lists.
    void finalize() {
        int clouds = 0;
        for (const auto& n : nodes_) {
            if (n.level == NodeLevel::Cloud) {
                ++clouds;
                cloud_ = n.id;
                if (!n.parent.empty())
                    throw Error(Errc::BadParentLevel, "cloud '" + n.id + "' must not have a parent");
                continue;
            }
            if (n.parent.empty())
                throw Error(Errc::DanglingParent, "node '" + n.id + "' has no parent");
            auto it = index_.find(n.parent);
            if (it == index_.end())
                throw Error(Errc::DanglingParent,
                            "node '" + n.id + "' references unknown parent '" + n.parent + "'");
            const auto& p = nodes_[it->second];
            if (level_rank(p.level) <= level_rank(n.level))
                throw Error(Errc::BadParentLevel, "node '" + n.id + "' cannot attach to '" +
                                                      p.id + "' at level " + to_string(p.level));
        }
        if (clouds == 0) throw Error(Errc::NoCloud, "topology has no cloud node");
        if (clouds > 1) throw Error(Errc::MultipleClouds, "topology has more than one cloud node");
        parent_.clear();
        for (const auto& n : nodes_) parent_[n.id] = n.parent;
        rebuild_children();
        finalized_ = true;
    }

    bool exists(const std::string& id) const { return index_.count(id) != 0; }

    const NodeSpec& node(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw Error(Errc::UnknownNode, "no node '" + id + "'");
        return nodes_[it->second];
    }

    NodeLevel level_of(const std::string& id) const { return node(id).level; }

    const std::string& cloud_id() const { return cloud_; }

    const std::string& parent_of(const std::string& id) const {
        auto it = parent_.find(id);
        if (it == parent_.end()) throw Error(Errc::UnknownNode, "no node '" + id + "'");
        return it->second;
    }

    // rewire a device (or fog) under a new parent; levels must still nest
    void set_parent(const std::string& id, const std::string& new_parent) {
        const auto& n = node(id);
        const auto& p = node(new_parent);
        if (level_rank(p.level) <= level_rank(n.level))
            throw Error(Errc::BadParentLevel,
                        "'" + id + "' cannot attach to '" + new_parent + "'");
        parent_[id] = new_parent;
        rebuild_children();
    }

    const std::vector<std::string>& children_of(const std::string& id) const {
        node(id);  // existence check
        static const std::vector<std::string> none;
        auto it = children_.find(id);
        return it == children_.end() ? none : it->second;
    }

    // declaration order
    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& n : nodes_) out.push_back(n.id);
        return out;
    }

    std::vector<std::string> ids_at(NodeLevel l) const {
        std::vector<std::string> out;
        for (const auto& n : nodes_) {
            if (n.level == l) out.push_back(n.id);
        }
        return out;
    }

    std::size_t size() const { return nodes_.size(); }

    // id, then its ancestors up to the root, via current attachment
    std::vector<std::string> path_to_root(const std::string& id) const {
        std::vector<std::string> out;
        std::string cur = id;
        while (true) {
            out.push_back(cur);
            const std::string& p = parent_of(cur);
            if (p.empty()) break;
            cur = p;
        }
        return out;
    }

    bool is_ancestor_or_self(const std::string& anc, const std::string& n) const {
        for (const auto& x : path_to_root(n))
            if (x == anc) return true;
        return false;
    }

    // tree path a..b through the lowest common ancestor (inclusive ends)
    std::vector<std::string> tree_path(const std::string& a, const std::string& b) const {
        auto up_a = path_to_root(a);
        auto up_b = path_to_root(b);
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < up_a.size(); ++i) pos[up_a[i]] = i;
        std::size_t bi = 0;
        while (bi < up_b.size() && !pos.count(up_b[bi])) ++bi;
        // trees always meet at the root
        std::size_t ai = pos.at(up_b[bi]);
        std::vector<std::string> out(up_a.begin(), up_a.begin() + ai + 1);
        for (std::size_t i = bi; i-- > 0;) out.push_back(up_b[i]);
        return out;
    }

    // class of a single hop between adjacent tree nodes
    LinkClass link_class(const std::string& a, const std::string& b) const {
        NodeLevel la = level_of(a), lb = level_of(b);
        if (la == NodeLevel::Cloud || lb == NodeLevel::Cloud) return LinkClass::ToCloud;
        if (la == NodeLevel::Fog && lb == NodeLevel::Fog) return LinkClass::FogToFog;
        return LinkClass::DeviceToFog;
    }

    LatencyModel& latency() { return latency_; }
    const LatencyModel& latency() const { return latency_; }

    void add_failure(const std::string& node_id, double fail_at_ms, double heal_at_ms) {
        node(node_id);
        if (!(heal_at_ms > fail_at_ms))
            throw Error(Errc::BadFailureWindow, "heal time must exceed fail time for '" +
                                                    node_id + "'");
        failures_.push_back({node_id, fail_at_ms, heal_at_ms});
    }

    const std::vector<FailureWindow>& failures() const { return failures_; }

    bool is_down(const std::string& node_id, double t) const {
        for (const auto& w : failures_)
            if (w.node == node_id && t >= w.fail_at_ms && t < w.heal_at_ms) return true;
        return false;
    }

    // heal time of the window covering t (call only when down)
    double heal_time(const std::string& node_id, double t) const {
        for (const auto& w : failures_)
            if (w.node == node_id && t >= w.fail_at_ms && t < w.heal_at_ms) return w.heal_at_ms;
        return t;
    }

    // every node on the current tree path must be up
    bool is_reachable(const std::string& a, const std::string& b, double t) const {
        for (const auto& n : tree_path(a, b))
            if (is_down(n, t)) return false;
        return true;
    }

    std::uint64_t seed() const { return seed_; }
    void set_seed(std::uint64_t s) { seed_ = s; }

    static Topology from_json(const json& doc) {
        Topology topo;
        if (!doc.contains("nodes") || !doc["nodes"].is_array())
            throw Error(Errc::BadConfig, "topology needs a 'nodes' array");
        for (const auto& jn : doc["nodes"]) {
            NodeSpec s;
            s.id = jn.at("id").get<std::string>();
            s.level = level_from_string(jn.at("level").get<std::string>());
            if (jn.contains("parent") && !jn["parent"].is_null())
                s.parent = jn["parent"].get<std::string>();
            if (jn.contains("capacity")) s.capacity = jn["capacity"].get<int>();
            if (jn.contains("rank")) s.rank = jn["rank"].get<int>();
            if (jn.contains("init_cost_ms")) s.init_cost_ms = jn["init_cost_ms"].get<double>();
            topo.add_node(std::move(s));
        }
        if (doc.contains("latency")) {
            const auto& jl = doc["latency"];
            auto load = [&](const char* key, LatencySpec& spec) {
                if (!jl.contains(key)) return;
                const auto& je = jl[key];
                if (je.contains("mean_ms")) spec.mean_ms = je["mean_ms"].get<double>();
                if (je.contains("stddev_ms")) spec.stddev_ms = je["stddev_ms"].get<double>();
                if (je.contains("floor_ms")) spec.floor_ms = je["floor_ms"].get<double>();
            };
            load("device_fog", topo.latency_.device_fog);
            load("fog_fog", topo.latency_.fog_fog);
            load("to_cloud", topo.latency_.to_cloud);
        }
        if (doc.contains("seed")) topo.seed_ = doc["seed"].get<std::uint64_t>();
        topo.finalize();
        if (doc.contains("failures")) {
            for (const auto& jf : doc["failures"]) {
                double heal = std::numeric_limits<double>::infinity();
                if (jf.contains("heal_at_ms") && !jf["heal_at_ms"].is_null())
                    heal = jf["heal_at_ms"].get<double>();
                topo.add_failure(jf.at("node").get<std::string>(),
                                 jf.at("fail_at_ms").get<double>(), heal);
            }
        }
        return topo;
    }

private:
    void rebuild_children() {
        children_.clear();
        for (const auto& n : nodes_) {
            const std::string& p = parent_[n.id];
            if (!p.empty()) children_[p].push_back(n.id);
        }
    }

    std::vector<NodeSpec> nodes_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, std::string> parent_;            // current attachment
    std::map<std::string, std::vector<std::string>> children_;
    std::vector<FailureWindow> failures_;
    LatencyModel latency_;
    std::string cloud_;
    std::uint64_t seed_ = 0;
    int level_count_[3] = {0, 0, 0};
    bool finalized_ = false;
};

// convenience for tests and scenario builders
inline Topology make_tree(int fogs, int devices_per_fog, std::uint64_t seed = 0) {
    Topology t;
    t.add_node({"cloud", NodeLevel::Cloud, "", 1024, -1, 300.0});
    for (int f = 0; f < fogs; ++f) {
        std::string fid = "f" + std::to_string(f + 1);
        t.add_node({fid, NodeLevel::Fog, "cloud", 1024, -1, 300.0});
        for (int d = 0; d < devices_per_fog; ++d) {
            std::string did = fid + "d" + std::to_string(d + 1);
            t.add_node({did, NodeLevel::Device, fid, 1024, -1, 300.0});
        }
    }
    t.set_seed(seed);
    t.finalize();
    return t;
}

}  // namespace canopy
