#include "phaseid/ld3f.hpp"

#include <cmath>
#include <cstring>
#include <limits>

namespace phaseid::ld3f {
namespace {

constexpr double kHalf = 0.5;
const double kRoot3Half = std::sqrt(3.0) / 2.0;

std::string phase_suffix(int phase, int window) {
    return "_" + std::to_string(phase + 1) + "_t" + std::to_string(window);
}

} // namespace

Gamma gamma() {
    // alpha = exp(-j 2 pi / 3); row i, column j holds alpha^(i-j).
    Gamma g;
    const double re_a = -kHalf, im_a = -kRoot3Half;   // alpha
    const double re_a2 = -kHalf, im_a2 = kRoot3Half;  // alpha^2
    const double table_re[3] = {1.0, re_a, re_a2};    // alpha^0, alpha^1, alpha^2
    const double table_im[3] = {0.0, im_a, im_a2};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            int k = ((i - j) % 3 + 3) % 3;
            g.re[static_cast<size_t>(i * 3 + j)] = table_re[k];
            g.im[static_cast<size_t>(i * 3 + j)] = table_im[k];
        }
    return g;
}

void ohm_coefficients(const net::Branch& branch, net::Mat3& a, net::Mat3& b) {
    static const Gamma g = gamma();
    for (int i = 0; i < 9; ++i) {
        auto s = static_cast<size_t>(i);
        a[s] = 2.0 * (g.re[s] * branch.r_pu[s] + g.im[s] * branch.x_pu[s]);
        b[s] = 2.0 * (g.re[s] * branch.x_pu[s] - g.im[s] * branch.r_pu[s]);
    }
}

int VariableTable::get_or_add(VarRole role, int entity, int phase, int window,
                              const std::string& name, double lo, double hi) {
    auto key = std::make_tuple(role, entity, phase, window);
    auto it = index_.find(key);
    if (it != index_.end())
        return it->second;
    VarInfo v;
    v.role = role;
    v.entity = entity;
    v.phase = phase;
    v.window = window;
    v.lo = lo;
    v.hi = hi;
    v.name = name;
    int id = static_cast<int>(vars_.size());
    vars_.push_back(std::move(v));
    index_.emplace(key, id);
    return id;
}

int VariableTable::find(VarRole role, int entity, int phase, int window) const {
    auto it = index_.find(std::make_tuple(role, entity, phase, window));
    return it == index_.end() ? -1 : it->second;
}

void VariableTable::set_bounds(int id, double lo, double hi) {
    vars_[static_cast<size_t>(id)].lo = lo;
    vars_[static_cast<size_t>(id)].hi = hi;
}

void VariableTable::set_cost(int id, double cost) { vars_[static_cast<size_t>(id)].cost = cost; }

void VariableTable::mark_binary(int id) { vars_[static_cast<size_t>(id)].is_binary = true; }

namespace {

constexpr double kFree = std::numeric_limits<double>::infinity();

int omega_var(const net::FeederModel& m, VariableTable& vars, int bus, int phase, int window) {
    return vars.get_or_add(VarRole::omega, bus, phase, window,
                           "w_" + m.buses[static_cast<size_t>(bus)].id + phase_suffix(phase, window),
                           0.0, kFree);
}

int flow_var(const net::FeederModel& m, VariableTable& vars, VarRole role, int branch, int phase,
             int window) {
    const char* prefix = role == VarRole::flow_p ? "fp_" : "fq_";
    return vars.get_or_add(role, branch, phase, window,
                           prefix + m.branches[static_cast<size_t>(branch)].id +
                               phase_suffix(phase, window),
                           -kFree, kFree);
}

} // namespace

LinearBlock power_balance_block(const net::FeederModel& model, int window, VariableTable& vars,
                                const Taps& taps) {
    LinearBlock block;
    const int n = static_cast<int>(model.buses.size());
    std::vector<std::vector<std::pair<int, double>>> incident(static_cast<size_t>(n));
    for (int b = 0; b < static_cast<int>(model.branches.size()); ++b) {
        const net::Branch& br = model.branches[static_cast<size_t>(b)];
        incident[static_cast<size_t>(br.to)].emplace_back(b, 1.0);
        incident[static_cast<size_t>(br.from)].emplace_back(b, -1.0);
    }
    std::vector<std::vector<int>> taps_at(static_cast<size_t>(n));
    for (int k = 0; k < static_cast<int>(taps.size()); ++k)
        taps_at[static_cast<size_t>(taps[static_cast<size_t>(k)].second)].push_back(k);

    for (int bus = 0; bus < n; ++bus) {
        if (bus == model.slack)
            continue;
        for (int kind = 0; kind < 2; ++kind) {
            VarRole flow_role = kind == 0 ? VarRole::flow_p : VarRole::flow_q;
            VarRole inj_role = kind == 0 ? VarRole::inj_p : VarRole::inj_q;
            for (int phase = 0; phase < kPhases; ++phase) {
                Row row;
                row.window = window;
                row.sense = RowSense::eq;
                row.rhs = 0.0;
                for (auto [b, dir] : incident[static_cast<size_t>(bus)])
                    row.terms.emplace_back(flow_var(model, vars, flow_role, b, phase, window), dir);
                for (int k : taps_at[static_cast<size_t>(bus)]) {
                    const auto& tap = taps[static_cast<size_t>(k)];
                    const char* prefix = kind == 0 ? "xp_e" : "xq_e";
                    int id = vars.get_or_add(inj_role, tap.first, phase, window,
                                             prefix + std::to_string(tap.first) +
                                                 phase_suffix(phase, window),
                                             -kFree, kFree);
                    row.terms.emplace_back(id, -1.0);
                }
                block.rows.push_back(std::move(row));
            }
        }
    }
    return block;
}

LinearBlock ohm_block(const net::FeederModel& model, int window, VariableTable& vars) {
    LinearBlock block;
    for (int b = 0; b < static_cast<int>(model.branches.size()); ++b) {
        const net::Branch& br = model.branches[static_cast<size_t>(b)];
        net::Mat3 a, bb;
        ohm_coefficients(br, a, bb);
        for (int phase = 0; phase < kPhases; ++phase) {
            Row row;
            row.window = window;
            row.sense = RowSense::eq;
            row.rhs = 0.0;
            row.terms.emplace_back(omega_var(model, vars, br.from, phase, window), 1.0);
            row.terms.emplace_back(omega_var(model, vars, br.to, phase, window), -1.0);
            for (int other = 0; other < kPhases; ++other) {
                auto idx = static_cast<size_t>(phase * 3 + other);
                if (a[idx] != 0.0)
                    row.terms.emplace_back(flow_var(model, vars, VarRole::flow_p, b, other, window),
                                           -a[idx]);
                if (bb[idx] != 0.0)
                    row.terms.emplace_back(flow_var(model, vars, VarRole::flow_q, b, other, window),
                                           -bb[idx]);
            }
            block.rows.push_back(std::move(row));
        }
    }
    return block;
}

uint64_t structure_hash(const LinearBlock& block, const VariableTable& vars) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](uint64_t v) {
        h ^= v;
        h *= 0x100000001b3ULL;
    };
    for (const Row& row : block.rows) {
        mix(static_cast<uint64_t>(row.sense) + 101);
        uint64_t rhs_bits;
        static_assert(sizeof(double) == sizeof(uint64_t));
        std::memcpy(&rhs_bits, &row.rhs, sizeof(rhs_bits));
        mix(rhs_bits);
        for (auto [id, coeff] : row.terms) {
            const VarInfo& v = vars.info(id);
            mix(static_cast<uint64_t>(v.role) + 7);
            mix(static_cast<uint64_t>(static_cast<int64_t>(v.entity)) + 13);
            mix(static_cast<uint64_t>(static_cast<int64_t>(v.phase)) + 17);
            uint64_t bits;
            std::memcpy(&bits, &coeff, sizeof(bits));
            mix(bits);
        }
    }
    return h;
}

} // namespace phaseid::ld3f
