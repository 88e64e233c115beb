#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "phaseid/common.hpp"

namespace phaseid::net {

/// Row-major 3x3 matrix, phases a,b,c.
using Mat3 = std::array<double, 9>;

enum class BusKind { slack, junction, user_attach };
enum class UserArity { single_phase, three_phase };

struct Bus {
    std::string id;
    BusKind kind = BusKind::junction;
};

struct Branch {
    std::string id;
    int from = -1;
    int to = -1;
    Mat3 r_pu{}; ///< series resistance, per unit
    Mat3 x_pu{}; ///< series reactance, per unit
};

/// Power-injection bounds per phase, per unit, consumption positive.
struct InjectionBounds {
    std::array<double, 3> p_lo{}, p_hi{}, q_lo{}, q_hi{};
};

struct User {
    std::string id;
    int bus = -1;
    UserArity arity = UserArity::single_phase;
    std::optional<int> true_phase;    ///< 0..2, ground truth when simulated
    std::optional<int> true_sequence; ///< 0..5 permutation index, three-phase truth
    InjectionBounds bounds;
};

/// Immutable network description. Impedances are stored per unit on the
/// phase-to-neutral voltage base and per-phase power base given in the file.
struct FeederModel {
    double base_kv = 0.23;  ///< phase-to-neutral kV
    double base_kva = 10.0; ///< per-phase kVA
    bool radial = true;

    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<User> users;
    int slack = -1;

    // Rooted view, filled for radial models: traversal order from the slack,
    // parent pointers and the orientation sign of each branch (+1 when the
    // stored from-bus is the parent).
    std::vector<int> bfs_order;
    std::vector<int> parent_bus;
    std::vector<int> parent_branch;
    std::vector<double> branch_sign;
    std::vector<int> depth;
    std::vector<std::vector<std::pair<int, int>>> children; ///< bus -> (branch, child bus)
    std::vector<std::vector<int>> users_by_bus;

    [[nodiscard]] double s_base_w() const { return base_kva * 1e3; }
    [[nodiscard]] double v_base_v() const { return base_kv * 1e3; }
    [[nodiscard]] double z_base_ohm() const { return v_base_v() * v_base_v() / s_base_w(); }

    [[nodiscard]] int bus_index(const std::string& id) const;
    [[nodiscard]] int user_index(const std::string& id) const;
};

FeederModel load_feeder(const std::string& path);
FeederModel parse_feeder(const std::string& json_text);

/// One multiplicative error per branch, drawn from N(0, (max_rel_error/3)^2),
/// applied to the whole R and X matrices. Positive diagonal resistances stay
/// positive (bounded resampling).
FeederModel perturb_impedances(const FeederModel& model, double max_rel_error, uint64_t seed);

} // namespace phaseid::net
