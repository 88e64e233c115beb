#pragma once

#include <array>
#include <optional>
#include <vector>

#include "phaseid/ld3f.hpp"
#include "phaseid/measurements.hpp"

namespace phaseid::milp {

/// Binary encodings of the unknown connection. Models a and b give every
/// meter channel its own phase selector (b adds the per-phase cover rows that
/// force a three-phase user's channels onto distinct phases); model c encodes
/// a three-phase user as one selector over the six channel-to-phase maps.
enum class Model : uint8_t { a, b, c };

enum class GroupKind : uint8_t { phase3, perm6 };

/// Provenance tag per constraint row, for inspection and tests.
enum class RowFamily : uint8_t {
    balance,       ///< per-bus per-phase flow conservation
    ohm,           ///< squared-voltage drop along a branch
    node_coupling, ///< voltage channel vs bus state, relaxed by the binaries
    edge_coupling, ///< power channel vs phase injection, relaxed by the binaries
    zero_force,    ///< injection confined to the selected phase
    wlav,          ///< weighted absolute residual epigraph
    sos1,          ///< one selection per group
    cover,         ///< model b: each phase taken exactly once per user
    tighten,       ///< optional per-phase user-count bounds
};

struct BuildOptions {
    Model model = Model::b;
    double vmax_pu = 1.1;        ///< voltage cap; squared it bounds omega and the node big-M
    double edge_bound_pu = 10.0; ///< cap on per-phase injection magnitude
    std::optional<std::array<int, 3>> count_lo; ///< per-phase minimum single-phase users
    std::optional<std::array<int, 3>> count_hi; ///< per-phase maximum
};

/// One selection group: the binaries of a meter channel (phase3) or of a
/// whole three-phase user (perm6). `vars` is ordered by phase or by map index.
struct DeltaGroup {
    int user = -1;
    int channel = -1; ///< meter channel for phase3 groups, -1 for perm6
    int entity = -1;  ///< injection entity the group controls
    GroupKind kind = GroupKind::phase3;
    std::vector<int> vars;
    double weight = 0.0; ///< peak metered |p| of the user, a branching priority
};

/// Row pair defining one residual: rho >= +/-(estimate - z)/sigma.
struct WlavPair {
    int channel = -1; ///< measurement channel ordinal
    int window = -1;
    int rho = -1;     ///< residual variable
    int row_pos = -1; ///< rho + estimate/sigma >= z/sigma
    int row_neg = -1; ///< rho - estimate/sigma >= -z/sigma
};

/// The assembled identification problem: minimize the summed residuals over
/// the rows, with the group binaries integral.
struct PiProblem {
    ld3f::VariableTable vars;
    std::vector<ld3f::Row> rows;
    std::vector<RowFamily> families; ///< parallel to rows
    std::vector<DeltaGroup> groups;
    std::vector<WlavPair> wlav;
    std::vector<int> binaries;
    int windows = 0;
    int users = 0;
};

/// Builds the full problem over every window of the measurement set. Throws
/// ValidationError when a user lacks the channels that make it observable.
PiProblem build_problem(const net::FeederModel& model, const MeasurementSet& ms,
                        const BuildOptions& options = {});

/// Decoded connection per model user. `integral` reports whether the binary
/// values were within tolerance of 0/1; `consistent` whether every
/// three-phase user's channels landed on distinct phases (model a can
/// violate this; such users keep sequence -1).
struct Assignment {
    std::vector<int> phase;    ///< 0..2 for single-phase users, else -1
    std::vector<int> sequence; ///< 0..5 for three-phase users, else -1
    bool integral = true;
    bool consistent = true;
};

Assignment decode_assignment(const net::FeederModel& model, const PiProblem& problem,
                             const std::vector<double>& values, double tol = 1e-6);

/// Number of users whose decoded connection matches the stored ground truth.
int count_correct(const net::FeederModel& model, const Assignment& a);

} // namespace phaseid::milp
