#include "phaseid/netmodel.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace phaseid::net {
namespace {

using nlohmann::json;

const json& require(const json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end())
        throw ValidationError("missing field '" + std::string(key) + "' in " + where);
    return *it;
}

Mat3 read_mat3(const json& j, const char* key, const std::string& where, double scale) {
    const json& arr = require(j, key, where);
    if (!arr.is_array() || arr.size() != 9)
        throw ValidationError(where + ": '" + key + "' must be a 9-element row-major array");
    Mat3 m{};
    for (int i = 0; i < 9; ++i)
        m[static_cast<size_t>(i)] = arr[static_cast<size_t>(i)].get<double>() * scale;
    return m;
}

BusKind parse_kind(const std::string& s, const std::string& where) {
    if (s == "slack")
        return BusKind::slack;
    if (s == "junction")
        return BusKind::junction;
    if (s == "user_attach")
        return BusKind::user_attach;
    throw ValidationError(where + ": unknown bus kind '" + s + "'");
}

std::array<double, 3> bound_array(const json& j, const char* key, double fallback, double scale) {
    std::array<double, 3> out{fallback, fallback, fallback};
    auto it = j.find(key);
    if (it == j.end())
        return out;
    if (it->is_number()) {
        out.fill(it->get<double>() * scale);
        return out;
    }
    if (it->is_array() && it->size() == 3) {
        for (int p = 0; p < 3; ++p)
            out[static_cast<size_t>(p)] = (*it)[static_cast<size_t>(p)].get<double>() * scale;
        return out;
    }
    throw ValidationError(std::string("user bound '") + key + "' must be a number or 3-array");
}

/// Builds the rooted traversal view and checks connectivity / radiality.
void finalize(FeederModel& m) {
    const int n = static_cast<int>(m.buses.size());
    m.slack = -1;
    std::set<std::string> bus_ids;
    for (int i = 0; i < n; ++i) {
        if (!bus_ids.insert(m.buses[static_cast<size_t>(i)].id).second)
            throw ValidationError("duplicate bus id '" + m.buses[static_cast<size_t>(i)].id + "'");
        if (m.buses[static_cast<size_t>(i)].kind == BusKind::slack) {
            if (m.slack >= 0)
                throw ValidationError("more than one slack bus");
            m.slack = i;
        }
    }
    if (m.slack < 0)
        throw ValidationError("no slack bus");

    std::set<std::string> branch_ids;
    std::vector<std::vector<std::pair<int, int>>> adj(static_cast<size_t>(n)); // bus -> (branch, other)
    for (int b = 0; b < static_cast<int>(m.branches.size()); ++b) {
        const Branch& br = m.branches[static_cast<size_t>(b)];
        if (!branch_ids.insert(br.id).second)
            throw ValidationError("duplicate branch id '" + br.id + "'");
        if (br.from < 0 || br.from >= n || br.to < 0 || br.to >= n)
            throw ValidationError("branch '" + br.id + "' references an unknown bus");
        if (br.from == br.to)
            throw ValidationError("branch '" + br.id + "' is a self-loop");
        for (int p = 0; p < 3; ++p)
            if (br.r_pu[static_cast<size_t>(p * 3 + p)] < 0.0)
                throw ValidationError("branch '" + br.id + "' has negative diagonal resistance");
        adj[static_cast<size_t>(br.from)].emplace_back(b, br.to);
        adj[static_cast<size_t>(br.to)].emplace_back(b, br.from);
    }

    m.bfs_order.clear();
    m.parent_bus.assign(static_cast<size_t>(n), -1);
    m.parent_branch.assign(static_cast<size_t>(n), -1);
    m.branch_sign.assign(m.branches.size(), 0.0);
    m.depth.assign(static_cast<size_t>(n), 0);
    m.children.assign(static_cast<size_t>(n), {});
    std::vector<char> seen(static_cast<size_t>(n), 0);
    std::deque<int> queue{m.slack};
    seen[static_cast<size_t>(m.slack)] = 1;
    while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        m.bfs_order.push_back(u);
        for (auto [b, v] : adj[static_cast<size_t>(u)]) {
            if (seen[static_cast<size_t>(v)])
                continue;
            seen[static_cast<size_t>(v)] = 1;
            m.parent_bus[static_cast<size_t>(v)] = u;
            m.parent_branch[static_cast<size_t>(v)] = b;
            m.branch_sign[static_cast<size_t>(b)] =
                m.branches[static_cast<size_t>(b)].from == u ? 1.0 : -1.0;
            m.depth[static_cast<size_t>(v)] = m.depth[static_cast<size_t>(u)] + 1;
            m.children[static_cast<size_t>(u)].emplace_back(b, v);
            queue.push_back(v);
        }
    }
    if (static_cast<int>(m.bfs_order.size()) != n)
        throw ValidationError("network is disconnected from the slack bus");
    if (m.radial && m.branches.size() != static_cast<size_t>(n - 1))
        throw ValidationError("model is declared radial but has cycles or parallel branches");

    std::set<std::string> user_ids;
    m.users_by_bus.assign(static_cast<size_t>(n), {});
    for (int u = 0; u < static_cast<int>(m.users.size()); ++u) {
        User& usr = m.users[static_cast<size_t>(u)];
        if (!user_ids.insert(usr.id).second)
            throw ValidationError("duplicate user id '" + usr.id + "'");
        if (usr.id == "transformer")
            throw ValidationError("user id 'transformer' is reserved");
        if (usr.bus < 0 || usr.bus >= n)
            throw ValidationError("user '" + usr.id + "' references an unknown bus");
        if (usr.bus == m.slack)
            throw ValidationError("user '" + usr.id + "' sits on the slack bus");
        if (usr.arity == UserArity::single_phase && usr.true_sequence)
            throw ValidationError("user '" + usr.id + "' is single-phase but has true_sequence");
        if (usr.arity == UserArity::three_phase && usr.true_phase)
            throw ValidationError("user '" + usr.id + "' is three-phase but has true_phase");
        for (int p = 0; p < 3; ++p) {
            auto sp = static_cast<size_t>(p);
            if (usr.bounds.p_lo[sp] > usr.bounds.p_hi[sp] || usr.bounds.q_lo[sp] > usr.bounds.q_hi[sp])
                throw ValidationError("user '" + usr.id + "' has inverted injection bounds");
        }
        m.users_by_bus[static_cast<size_t>(usr.bus)].push_back(u);
    }
}

FeederModel from_json(const json& j) {
    FeederModel m;
    m.base_kv = require(j, "base_kv", "feeder").get<double>();
    m.base_kva = require(j, "base_kva", "feeder").get<double>();
    if (m.base_kv <= 0.0 || m.base_kva <= 0.0)
        throw ValidationError("voltage and power bases must be positive");
    m.radial = j.value("radial", true);

    std::vector<std::string> bus_names;
    for (const json& jb : require(j, "buses", "feeder")) {
        Bus b;
        b.id = require(jb, "id", "bus").get<std::string>();
        b.kind = parse_kind(require(jb, "kind", "bus '" + b.id + "'").get<std::string>(), "bus '" + b.id + "'");
        m.buses.push_back(b);
        bus_names.push_back(b.id);
    }
    auto find_bus = [&](const std::string& id) {
        auto it = std::find(bus_names.begin(), bus_names.end(), id);
        return it == bus_names.end() ? -1 : static_cast<int>(it - bus_names.begin());
    };

    const double z_base = m.z_base_ohm();
    for (const json& jb : require(j, "branches", "feeder")) {
        Branch br;
        br.id = require(jb, "id", "branch").get<std::string>();
        const std::string where = "branch '" + br.id + "'";
        br.from = find_bus(require(jb, "from", where).get<std::string>());
        br.to = find_bus(require(jb, "to", where).get<std::string>());
        if (br.from < 0 || br.to < 0)
            throw ValidationError(where + " references an unknown bus id");
        br.r_pu = read_mat3(jb, "r_ohm", where, 1.0 / z_base);
        br.x_pu = read_mat3(jb, "x_ohm", where, 1.0 / z_base);
        m.branches.push_back(br);
    }

    const double kw_to_pu = 1.0 / m.base_kva; // kW over per-phase kVA base
    for (const json& ju : j.value("users", json::array())) {
        User u;
        u.id = require(ju, "id", "user").get<std::string>();
        const std::string where = "user '" + u.id + "'";
        u.bus = find_bus(require(ju, "bus", where).get<std::string>());
        if (u.bus < 0)
            throw ValidationError(where + " references an unknown bus id");
        std::string arity = ju.value("arity", std::string("single_phase"));
        if (arity == "single_phase")
            u.arity = UserArity::single_phase;
        else if (arity == "three_phase")
            u.arity = UserArity::three_phase;
        else
            throw ValidationError(where + ": unknown arity '" + arity + "'");
        if (auto it = ju.find("true_phase"); it != ju.end()) {
            int ph = it->get<int>();
            if (ph < 1 || ph > 3)
                throw ValidationError(where + ": true_phase must be 1..3");
            u.true_phase = ph - 1;
        }
        if (auto it = ju.find("true_sequence"); it != ju.end()) {
            int sq = it->get<int>();
            if (sq < 1 || sq > 6)
                throw ValidationError(where + ": true_sequence must be 1..6");
            u.true_sequence = sq - 1;
        }
        u.bounds.p_lo = bound_array(ju, "p_min_kw", -10.0, kw_to_pu);
        u.bounds.p_hi = bound_array(ju, "p_max_kw", 10.0, kw_to_pu);
        u.bounds.q_lo = bound_array(ju, "q_min_kvar", -10.0, kw_to_pu);
        u.bounds.q_hi = bound_array(ju, "q_max_kvar", 10.0, kw_to_pu);
        m.users.push_back(u);
    }

    finalize(m);
    return m;
}

} // namespace

int FeederModel::bus_index(const std::string& id) const {
    for (int i = 0; i < static_cast<int>(buses.size()); ++i)
        if (buses[static_cast<size_t>(i)].id == id)
            return i;
    return -1;
}

int FeederModel::user_index(const std::string& id) const {
    for (int i = 0; i < static_cast<int>(users.size()); ++i)
        if (users[static_cast<size_t>(i)].id == id)
            return i;
    return -1;
}

FeederModel parse_feeder(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("feeder JSON parse error: ") + e.what());
    }
    return from_json(j);
}

FeederModel load_feeder(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open feeder file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_feeder(buf.str());
}

FeederModel perturb_impedances(const FeederModel& model, double max_rel_error, uint64_t seed) {
    if (max_rel_error < 0.0)
        throw ValidationError("max_rel_error must be non-negative");
    FeederModel out = model;
    const double sigma = max_rel_error / 3.0;
    for (size_t b = 0; b < out.branches.size(); ++b) {
        double mult = 0.0;
        bool ok = false;
        for (uint64_t attempt = 0; attempt < 64; ++attempt) {
            mult = 1.0 + sigma * rng::normal(seed, 0x1a9eull, b, attempt);
            if (mult > 0.0) {
                ok = true;
                break;
            }
        }
        if (!ok)
            throw ValidationError("impedance perturbation failed to stay positive");
        for (int i = 0; i < 9; ++i) {
            out.branches[b].r_pu[static_cast<size_t>(i)] *= mult;
            out.branches[b].x_pu[static_cast<size_t>(i)] *= mult;
        }
    }
    return out;
}

} // namespace phaseid::net
