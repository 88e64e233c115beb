#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "phaseid/lp.hpp"
#include "phaseid/milp.hpp"

namespace phaseid::solver {

enum class SolveStatus : uint8_t { optimal, cutoff_best, infeasible };

/// One record in the optional search trace. `event` is
///   'b' branched, 'i' integer point closed the node, 'p' pruned by bound
///   after evaluation, 'q' dropped before evaluation (estimate only),
///   'x' infeasible, 'u' incumbent improved (bound carries the objective).
struct NodeTrace {
    long id = 0;
    long parent = -1;
    int depth = 0;
    double bound = 0.0;
    char event = 'b';
};

/// Counts reported around the bound-tightening pass. Rows and columns are
/// never removed, so the pass reports how many variable bounds moved.
struct PresolveStats {
    int rows = 0;
    int cols = 0;
    long nonzeros = 0;
    int bounds_tightened = 0;
    int rounds = 0;
};

struct SolveOptions {
    double gap_rel = 1e-4;          ///< relative optimality gap
    double gap_abs = 1e-9;          ///< absolute gap, rules near-zero objectives
    double cutoff_seconds = 9000.0; ///< wall-clock budget (2.5 h default)
    bool presolve = true;           ///< run bound tightening before the search
    std::optional<milp::Assignment> mip_start; ///< warm incumbent; three-phase
                                               ///< users need a valid sequence
    std::ostream* log = nullptr;             ///< one line per incumbent
    std::vector<NodeTrace>* trace = nullptr; ///< node-level search records
};

struct SolveResult {
    SolveStatus status = SolveStatus::infeasible;
    double objective = 0.0;
    double best_bound = 0.0;
    double gap = 0.0;
    std::vector<double> values; ///< full variable vector at the incumbent
    long nodes = 0;
    long lp_iterations = 0;
    long assignments_evaluated = 0;
    double second_best_gap = 0.0; ///< enumeration only: margin to the runner-up
    double wall_seconds = 0.0;
    double cs_residual = 0.0;
    PresolveStats presolve;
};

/// Activity-based bound tightening to a fixpoint (or `max_rounds`). Only
/// variable bounds move; every implication is valid for all integer-feasible
/// points, so optima are preserved exactly.
PresolveStats tighten_bounds(milp::PiProblem& problem, int max_rounds = 10);

/// Solves the problem as one linear program with the binaries kept at their
/// current (possibly relaxed or fixed) bounds. Intended for small instances
/// and verification; the search itself works on per-window blocks.
SolveResult solve_lp(const milp::PiProblem& problem);

/// Fixes every binary according to the assignment and evaluates the exact
/// objective, window by window. Status infeasible when the assignment
/// violates the selection or count rows.
SolveResult solve_fixed(const milp::PiProblem& problem, const milp::Assignment& assignment);

/// Branch-and-bound over the selection binaries. Node bounds come from
/// window-separable relaxations: each window block carries its own copy of
/// the binaries, so the sum of block optima is a valid lower bound and, once
/// every binary is fixed, the exact objective. Best-bound node order with
/// depth-first plunging until the first incumbent; deterministic by fixed
/// branching and tie rules.
SolveResult solve_bnb(const milp::PiProblem& problem, const SolveOptions& options = {});

/// Exhaustive enumeration of every integer assignment, in lexicographic
/// order (ties keep the lexicographically smallest). Throws ValidationError
/// when the assignment census 3^(single) * 6^(three-phase) exceeds `cap`.
SolveResult brute_force(const milp::PiProblem& problem, long cap = 10000);

} // namespace phaseid::solver
