#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "phaseid/netmodel.hpp"

namespace phaseid::ld3f {

/// Complex rotation matrix between phase pairs, split into real and
/// imaginary parts. Entry (i,j) is the nominal phasor ratio v_i / v_j.
struct Gamma {
    net::Mat3 re;
    net::Mat3 im;
};

[[nodiscard]] Gamma gamma();

/// Squared-voltage drop coefficients of one branch:
///   A = 2 (Re(gamma) o R + Im(gamma) o X)
///   B = 2 (Re(gamma) o X - Im(gamma) o R)
/// with o the entrywise product.
void ohm_coefficients(const net::Branch& branch, net::Mat3& a, net::Mat3& b);

enum class VarRole : uint8_t {
    omega,    ///< squared voltage magnitude: (bus, phase, window)
    flow_p,   ///< branch active flow, from->to positive: (branch, phase, window)
    flow_q,   ///< branch reactive flow: (branch, phase, window)
    inj_p,    ///< entity active injection, consumption positive: (entity, phase, window)
    inj_q,    ///< entity reactive injection: (entity, phase, window)
    aux_y,    ///< measurement auxiliary: (measurement, 0, window)
    residual, ///< weighted absolute residual: (measurement, 0, window)
    delta,    ///< connection binary: (entity, phase-or-permutation, static)
};

struct VarInfo {
    VarRole role{};
    int entity = 0;
    int phase = 0;
    int window = -1;
    double lo = 0.0, hi = 0.0;
    double cost = 0.0;
    bool is_binary = false;
    std::string name;
};

/// Interned variable store shared by all row builders of one problem.
class VariableTable {
public:
    int get_or_add(VarRole role, int entity, int phase, int window, const std::string& name,
                   double lo, double hi);
    [[nodiscard]] int find(VarRole role, int entity, int phase, int window) const;
    [[nodiscard]] int size() const { return static_cast<int>(vars_.size()); }
    [[nodiscard]] const VarInfo& info(int id) const { return vars_[static_cast<size_t>(id)]; }
    void set_bounds(int id, double lo, double hi);
    void set_cost(int id, double cost);
    void mark_binary(int id);

private:
    std::vector<VarInfo> vars_;
    std::map<std::tuple<VarRole, int, int, int>, int> index_;
};

enum class RowSense : uint8_t { le, eq, ge };

struct Row {
    std::vector<std::pair<int, double>> terms;
    RowSense sense = RowSense::eq;
    double rhs = 0.0;
    int window = -1; ///< -1 marks a window-independent row
};

struct LinearBlock {
    std::vector<Row> rows;
};

/// Injection tap: (entity index, bus index). Every tap owns a 3-phase
/// injection variable pair at its bus.
using Taps = std::vector<std::pair<int, int>>;

/// Per-bus per-phase power balance for one window; no row for the slack,
/// zero-injection buses get pure flow rows.
LinearBlock power_balance_block(const net::FeederModel& model, int window, VariableTable& vars,
                                const Taps& taps);

/// Squared-voltage drop along every branch for one window.
LinearBlock ohm_block(const net::FeederModel& model, int window, VariableTable& vars);

/// Window-insensitive fingerprint; equal across the t-replicas of a block.
uint64_t structure_hash(const LinearBlock& block, const VariableTable& vars);

} // namespace phaseid::ld3f
