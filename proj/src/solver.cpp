#include "phaseid/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <queue>

namespace phaseid::solver {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kIntTol = 1e-6;

using milp::PiProblem;

/// Per-binary fixing state of a search node.
enum : uint8_t { kFree = 0, kZero = 1, kOne = 2 };
using DeltaState = std::vector<uint8_t>;

double state_lo(uint8_t s) { return s == kOne ? 1.0 : 0.0; }
double state_hi(uint8_t s) { return s == kZero ? 0.0 : 1.0; }

struct Clock {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

void lp_bounds_of_row(const ld3f::Row& row, double& lo, double& hi) {
    switch (row.sense) {
    case ld3f::RowSense::le: lo = -kInf, hi = row.rhs; break;
    case ld3f::RowSense::ge: lo = row.rhs, hi = kInf; break;
    case ld3f::RowSense::eq: lo = hi = row.rhs; break;
    }
}

/// Group structure over the binaries, shared by every solve entry point.
struct Context {
    const PiProblem* pb = nullptr;
    std::map<int, int> ordinal_of;           ///< global var id -> binaries position
    std::vector<std::vector<int>> group_ord; ///< per group: binaries positions
    std::vector<int> group_of;               ///< binaries position -> group index

    explicit Context(const PiProblem& problem) : pb(&problem) {
        for (size_t k = 0; k < problem.binaries.size(); ++k)
            ordinal_of[problem.binaries[k]] = static_cast<int>(k);
        group_of.assign(problem.binaries.size(), -1);
        group_ord.reserve(problem.groups.size());
        for (size_t gi = 0; gi < problem.groups.size(); ++gi) {
            std::vector<int> ords;
            for (int v : problem.groups[gi].vars) {
                int k = ordinal_of.at(v);
                group_of[static_cast<size_t>(k)] = static_cast<int>(gi);
                ords.push_back(k);
            }
            group_ord.push_back(std::move(ords));
        }
    }

    /// One-selection-per-group fixpoint. Returns false on conflict.
    bool propagate(DeltaState& s) const {
        bool changed = true;
        while (changed) {
            changed = false;
            for (const auto& g : group_ord) {
                int ones = 0, frees = 0, last_free = -1;
                for (int k : g) {
                    if (s[static_cast<size_t>(k)] == kOne)
                        ++ones;
                    else if (s[static_cast<size_t>(k)] == kFree) {
                        ++frees;
                        last_free = k;
                    }
                }
                if (ones > 1)
                    return false;
                if (ones == 1) {
                    for (int k : g)
                        if (s[static_cast<size_t>(k)] == kFree) {
                            s[static_cast<size_t>(k)] = kZero;
                            changed = true;
                        }
                } else if (frees == 0) {
                    return false;
                } else if (frees == 1) {
                    s[static_cast<size_t>(last_free)] = kOne;
                    changed = true;
                }
            }
        }
        return true;
    }

    [[nodiscard]] bool complete(const DeltaState& s) const {
        return std::none_of(s.begin(), s.end(), [](uint8_t v) { return v == kFree; });
    }

    [[nodiscard]] DeltaState state_of(const milp::Assignment& a) const {
        size_t users = static_cast<size_t>(pb->users);
        if (a.phase.size() != users || a.sequence.size() != users)
            throw ValidationError("assignment size does not match the user count");
        DeltaState s(pb->binaries.size(), kZero);
        for (const milp::DeltaGroup& g : pb->groups) {
            size_t u = static_cast<size_t>(g.user);
            int slot;
            if (g.kind == milp::GroupKind::perm6) {
                slot = a.sequence[u];
                if (slot < 0 || slot >= 6)
                    throw ValidationError("assignment lacks a sequence for a three-phase user");
            } else if (g.channel >= 0) {
                int seq = a.sequence[u];
                if (seq < 0 || seq >= 6)
                    throw ValidationError("assignment lacks a sequence for a three-phase user");
                slot = kPermTable[static_cast<size_t>(seq)][static_cast<size_t>(g.channel)];
            } else {
                slot = a.phase[u];
                if (slot < 0 || slot >= kPhases)
                    throw ValidationError("assignment lacks a phase for a single-phase user");
            }
            s[static_cast<size_t>(ordinal_of.at(g.vars[static_cast<size_t>(slot)]))] = kOne;
        }
        return s;
    }
};

/// One window of the problem with a private copy of every binary. The
/// window-independent rows touch binaries only and are replicated here, so a
/// fixing is felt by each window; the block objectives then sum to a valid
/// lower bound, and to the exact objective once every binary is fixed.
struct Block {
    std::vector<int> locals;      ///< global var id per local column
    std::vector<int> delta_local; ///< local column per binaries ordinal
    std::unique_ptr<lp::BoundedSimplex> engine;
    DeltaState applied;
    lp::LpResult last;
};

struct BlockSet {
    const PiProblem* pb = nullptr;
    std::vector<Block> blocks;
    long iterations = 0;

    void build(const PiProblem& problem) {
        pb = &problem;
        int nv = problem.vars.size();
        blocks.resize(static_cast<size_t>(problem.windows));
        std::vector<int> local_of(static_cast<size_t>(nv));
        for (int w = 0; w < problem.windows; ++w) {
            Block& blk = blocks[static_cast<size_t>(w)];
            lp::LinearProgram spec;
            std::fill(local_of.begin(), local_of.end(), -1);
            for (int j = 0; j < nv; ++j) {
                const ld3f::VarInfo& vi = problem.vars.info(j);
                if (vi.window != w && !vi.is_binary) {
                    if (vi.window < 0)
                        throw SolverError("window-independent variable that is not a binary");
                    continue;
                }
                local_of[static_cast<size_t>(j)] = spec.add_var(vi.lo, vi.hi, vi.cost);
                blk.locals.push_back(j);
            }
            for (const ld3f::Row& row : problem.rows) {
                if (row.window != w && row.window >= 0)
                    continue;
                lp::LinearProgram::Row lr;
                for (auto [var, coef] : row.terms) {
                    int local = local_of[static_cast<size_t>(var)];
                    if (local < 0)
                        throw SolverError("row references a variable outside its window");
                    lr.terms.emplace_back(local, coef);
                }
                lp_bounds_of_row(row, lr.lo, lr.hi);
                spec.rows.push_back(std::move(lr));
            }
            for (int id : problem.binaries)
                blk.delta_local.push_back(local_of[static_cast<size_t>(id)]);
            blk.engine = std::make_unique<lp::BoundedSimplex>(spec);
            blk.applied.assign(problem.binaries.size(), kFree);
        }
    }

    /// Applies the fixing state to every block and reoptimizes; nullopt when
    /// any block is infeasible.
    std::optional<double> evaluate(const DeltaState& s) {
        double total = 0.0;
        for (Block& blk : blocks) {
            bool dirty = blk.last.x.empty();
            for (size_t k = 0; k < s.size(); ++k) {
                if (blk.applied[k] == s[k])
                    continue;
                blk.engine->set_bounds(blk.delta_local[k], state_lo(s[k]), state_hi(s[k]));
                blk.applied[k] = s[k];
                dirty = true;
            }
            if (dirty) {
                blk.last = blk.engine->resolve();
                iterations += blk.last.iterations;
            }
            if (blk.last.status == lp::LpStatus::infeasible)
                return std::nullopt;
            if (blk.last.status != lp::LpStatus::optimal)
                throw SolverError("window relaxation did not solve to optimality");
            total += blk.last.objective;
        }
        return total;
    }

    void extract(std::vector<double>& out) const {
        out.assign(static_cast<size_t>(pb->vars.size()), 0.0);
        for (const Block& blk : blocks)
            for (size_t j = 0; j < blk.locals.size(); ++j)
                out[static_cast<size_t>(blk.locals[j])] = blk.last.x[j];
    }

    [[nodiscard]] double worst_cs() const {
        double cs = 0.0;
        for (const Block& blk : blocks)
            cs = std::max(cs, blk.last.cs_residual);
        return cs;
    }

    /// Mean relaxation value of a binary across the windows; meaningful
    /// after a feasible evaluate.
    [[nodiscard]] double mean_delta(int ordinal) const {
        double sum = 0.0;
        for (const Block& blk : blocks)
            sum += blk.last.x[static_cast<size_t>(
                blk.delta_local[static_cast<size_t>(ordinal)])];
        return sum / static_cast<double>(blocks.size());
    }
};

long count_nonzeros(const PiProblem& problem) {
    long nz = 0;
    for (const ld3f::Row& row : problem.rows)
        nz += static_cast<long>(row.terms.size());
    return nz;
}

lp::LinearProgram whole_lp(const PiProblem& problem) {
    lp::LinearProgram spec;
    for (int j = 0; j < problem.vars.size(); ++j) {
        const ld3f::VarInfo& vi = problem.vars.info(j);
        spec.add_var(vi.lo, vi.hi, vi.cost);
    }
    for (const ld3f::Row& row : problem.rows) {
        lp::LinearProgram::Row lr;
        lr.terms = row.terms;
        lp_bounds_of_row(row, lr.lo, lr.hi);
        spec.rows.push_back(std::move(lr));
    }
    return spec;
}

struct Node {
    DeltaState state;
    double est = 0.0; ///< parent's evaluated bound: a valid lower bound
    long id = 0;
    long parent = -1;
    int depth = 0;
};

struct NodeOrder {
    bool operator()(const Node& a, const Node& b) const {
        if (a.est != b.est)
            return a.est > b.est; // smallest bound first
        return a.id > b.id;       // then oldest
    }
};

void record(std::vector<NodeTrace>* trace, long id, long parent, int depth, double bound,
            char event) {
    if (trace)
        trace->push_back({id, parent, depth, bound, event});
}

/// Rounded candidate: per group keep the fixed choice or take the slot with
/// the largest relaxation value among those not excluded. Always yields a
/// complete selection; the count/cover rows still decide feasibility.
DeltaState round_state(const Context& cx, const BlockSet& bs, const DeltaState& s) {
    DeltaState out(s.size(), kZero);
    for (const auto& g : cx.group_ord) {
        int pick = -1;
        double best = -1.0;
        for (int k : g) {
            if (s[static_cast<size_t>(k)] == kOne) {
                pick = k;
                break;
            }
            if (s[static_cast<size_t>(k)] == kZero)
                continue;
            double v = bs.mean_delta(k);
            if (v > best + 1e-12) {
                best = v;
                pick = k;
            }
        }
        if (pick >= 0)
            out[static_cast<size_t>(pick)] = kOne;
    }
    return out;
}

} // namespace

PresolveStats tighten_bounds(milp::PiProblem& problem, int max_rounds) {
    PresolveStats stats;
    stats.rows = static_cast<int>(problem.rows.size());
    stats.cols = problem.vars.size();
    stats.nonzeros = count_nonzeros(problem);
    const double pad = 1e-9;
    for (int round = 0; round < max_rounds; ++round) {
        bool changed = false;
        for (const ld3f::Row& row : problem.rows) {
            // activity range of the row, tracking infinite contributions
            double min_sum = 0.0, max_sum = 0.0;
            int min_inf = 0, max_inf = 0;
            for (auto [var, coef] : row.terms) {
                const ld3f::VarInfo& vi = problem.vars.info(var);
                double a = coef * (coef > 0 ? vi.lo : vi.hi);
                double b = coef * (coef > 0 ? vi.hi : vi.lo);
                if (std::isinf(a))
                    ++min_inf;
                else
                    min_sum += a;
                if (std::isinf(b))
                    ++max_inf;
                else
                    max_sum += b;
            }
            for (auto [var, coef] : row.terms) {
                const ld3f::VarInfo& vi = problem.vars.info(var);
                double own_min = coef * (coef > 0 ? vi.lo : vi.hi);
                double own_max = coef * (coef > 0 ? vi.hi : vi.lo);
                double rest_min, rest_max; // activity of the other terms
                if (std::isinf(own_min))
                    rest_min = min_inf == 1 ? min_sum : -kInf;
                else
                    rest_min = min_inf == 0 ? min_sum - own_min : -kInf;
                if (std::isinf(own_max))
                    rest_max = max_inf == 1 ? max_sum : kInf;
                else
                    rest_max = max_inf == 0 ? max_sum - own_max : kInf;

                double lo = vi.lo, hi = vi.hi;
                // coef*x <= rhs - rest_min holds for le and eq rows
                if (row.sense != ld3f::RowSense::ge && !std::isinf(rest_min)) {
                    double cap = row.rhs - rest_min;
                    if (coef > 0)
                        hi = std::min(hi, cap / coef + pad);
                    else
                        lo = std::max(lo, cap / coef - pad);
                }
                // coef*x >= rhs - rest_max holds for ge and eq rows
                if (row.sense != ld3f::RowSense::le && !std::isinf(rest_max)) {
                    double floor_v = row.rhs - rest_max;
                    if (coef > 0)
                        lo = std::max(lo, floor_v / coef - pad);
                    else
                        hi = std::min(hi, floor_v / coef + pad);
                }
                if (vi.is_binary) {
                    lo = lo > kIntTol ? 1.0 : std::max(lo, 0.0);
                    hi = hi < 1.0 - kIntTol ? 0.0 : std::min(hi, 1.0);
                }
                if (lo > hi)
                    continue; // implied empty box: leave it to the simplex
                if (lo > vi.lo + 1e-12 || hi < vi.hi - 1e-12) {
                    problem.vars.set_bounds(var, lo, hi);
                    ++stats.bounds_tightened;
                    changed = true;
                }
            }
        }
        ++stats.rounds;
        if (!changed)
            break;
    }
    return stats;
}

SolveResult solve_lp(const milp::PiProblem& problem) {
    Clock clock;
    lp::BoundedSimplex engine(whole_lp(problem));
    lp::LpResult r = engine.solve();
    SolveResult out;
    out.lp_iterations = r.iterations;
    out.wall_seconds = clock.seconds();
    out.cs_residual = r.cs_residual;
    if (r.status == lp::LpStatus::infeasible) {
        out.status = SolveStatus::infeasible;
        return out;
    }
    if (r.status != lp::LpStatus::optimal)
        throw SolverError("linear relaxation did not solve to optimality");
    out.status = SolveStatus::optimal;
    out.objective = r.objective;
    out.best_bound = r.objective;
    out.values = std::move(r.x);
    return out;
}

SolveResult solve_fixed(const milp::PiProblem& problem, const milp::Assignment& assignment) {
    Clock clock;
    Context cx(problem);
    DeltaState s = cx.state_of(assignment);
    BlockSet bs;
    bs.build(problem);
    std::optional<double> obj = bs.evaluate(s);
    SolveResult out;
    out.assignments_evaluated = 1;
    out.lp_iterations = bs.iterations;
    out.wall_seconds = clock.seconds();
    if (!obj) {
        out.status = SolveStatus::infeasible;
        return out;
    }
    out.status = SolveStatus::optimal;
    out.objective = *obj;
    out.best_bound = *obj;
    out.cs_residual = bs.worst_cs();
    bs.extract(out.values);
    return out;
}

SolveResult solve_bnb(const milp::PiProblem& problem, const SolveOptions& options) {
    Clock clock;
    const PiProblem* active = &problem;
    PiProblem tightened;
    PresolveStats pre;
    pre.rows = static_cast<int>(problem.rows.size());
    pre.cols = problem.vars.size();
    pre.nonzeros = count_nonzeros(problem);
    if (options.presolve) {
        tightened = problem;
        pre = tighten_bounds(tightened);
        active = &tightened;
    }

    Context cx(*active);
    // two engine sets so the heavily revisited node relaxations and the
    // monotone incumbent evaluations each keep a coherent warm-start chain
    BlockSet bound_blocks;
    bound_blocks.build(*active);
    BlockSet eval_blocks;
    eval_blocks.build(*active);

    SolveResult out;
    out.presolve = pre;
    double ub = kInf;
    double lower = 0.0; ///< valid global lower bound (costs are nonnegative)
    DeltaState incumbent;
    std::map<DeltaState, double> tried; ///< exact objective per assignment, inf if infeasible
    long next_id = 0;

    auto margin = [&] {
        return std::isinf(ub) ? kInf : std::max(options.gap_abs, options.gap_rel * std::abs(ub));
    };
    // evaluates a complete assignment exactly; caches, updates the incumbent
    auto try_incumbent = [&](const DeltaState& s, long node_id, int depth) {
        auto it = tried.find(s);
        if (it == tried.end()) {
            ++out.assignments_evaluated;
            std::optional<double> obj = eval_blocks.evaluate(s);
            it = tried.emplace(s, obj ? *obj : kInf).first;
        }
        double obj = it->second;
        if (obj < ub) {
            ub = obj;
            incumbent = s;
            record(options.trace, node_id, -1, depth, ub, 'u');
            if (options.log)
                *options.log << "t=" << clock.seconds() << "s obj=" << ub << " gap="
                             << (ub > 0 ? (ub - lower) / std::max(std::abs(ub), 1e-9) : 0.0)
                             << "\n";
        }
        return obj;
    };

    if (options.mip_start) {
        DeltaState s = cx.state_of(*options.mip_start);
        if (!cx.propagate(s))
            throw ValidationError("warm-start assignment conflicts with the selection rows");
        try_incumbent(s, -1, 0);
    }

    std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
    std::optional<Node> plunge;
    open.push({DeltaState(active->binaries.size(), kFree), 0.0, next_id++, -1, 0});
    bool out_of_time = false;

    while (plunge || !open.empty()) {
        if (clock.seconds() > options.cutoff_seconds) {
            out_of_time = true;
            break;
        }
        lower = plunge ? plunge->est : open.top().est;
        if (plunge && !open.empty())
            lower = std::min(lower, open.top().est);
        if (!std::isinf(ub) && ub - lower <= margin())
            break;

        Node node;
        if (plunge) {
            node = std::move(*plunge);
            plunge.reset();
        } else {
            node = open.top();
            open.pop();
        }
        ++out.nodes;
        if (node.est >= ub - margin()) {
            record(options.trace, node.id, node.parent, node.depth, node.est, 'q');
            continue;
        }

        std::optional<double> bound_opt = bound_blocks.evaluate(node.state);
        if (!bound_opt) {
            record(options.trace, node.id, node.parent, node.depth, kInf, 'x');
            continue;
        }
        double bound = *bound_opt;
        if (bound >= ub - margin()) {
            record(options.trace, node.id, node.parent, node.depth, bound, 'p');
            continue;
        }

        if (cx.complete(node.state)) {
            record(options.trace, node.id, node.parent, node.depth, bound, 'i');
            try_incumbent(node.state, node.id, node.depth);
            continue;
        }

        // fractionality of the free binaries; branch on the most fractional,
        // ties by the owner's peak demand, then by position
        bool all_integral = true;
        int branch_k = -1;
        double branch_score = kInf;
        for (size_t k = 0; k < node.state.size(); ++k) {
            if (node.state[k] != kFree)
                continue;
            double v = bound_blocks.mean_delta(static_cast<int>(k));
            if (std::min(v, 1.0 - v) > kIntTol)
                all_integral = false;
            double score = std::abs(v - 0.5);
            double weight =
                active->groups[static_cast<size_t>(cx.group_of[k])].weight;
            double held = branch_k < 0
                              ? -kInf
                              : active->groups[static_cast<size_t>(
                                                   cx.group_of[static_cast<size_t>(branch_k)])]
                                    .weight;
            if (score < branch_score - 1e-12 ||
                (score < branch_score + 1e-12 && weight > held + 1e-12)) {
                branch_score = score;
                branch_k = static_cast<int>(k);
            }
        }

        DeltaState rounded = round_state(cx, bound_blocks, node.state);
        bool rounded_ok = cx.propagate(rounded);
        if (all_integral) {
            // every window already agrees on one integer selection, which
            // attains the block bound; the node cannot do better
            double obj = rounded_ok ? try_incumbent(rounded, node.id, node.depth) : kInf;
            if (obj <= bound + std::max(options.gap_abs, 1e-9 * (1.0 + std::abs(bound)))) {
                record(options.trace, node.id, node.parent, node.depth, bound, 'i');
                continue;
            }
        } else if (rounded_ok) {
            try_incumbent(rounded, node.id, node.depth); // rounding heuristic
        }

        record(options.trace, node.id, node.parent, node.depth, bound, 'b');
        const auto& ords = cx.group_ord[static_cast<size_t>(cx.group_of[static_cast<size_t>(branch_k)])];
        bool six_way =
            active->groups[static_cast<size_t>(cx.group_of[static_cast<size_t>(branch_k)])].kind ==
            milp::GroupKind::perm6;
        std::vector<Node> children;
        if (six_way) {
            // one child per still-open slot of the permutation group
            int best_slot = -1;
            double best_val = -1.0;
            for (int k : ords) {
                if (node.state[static_cast<size_t>(k)] != kFree)
                    continue;
                double v = bound_blocks.mean_delta(k);
                if (v > best_val + 1e-12) {
                    best_val = v;
                    best_slot = k;
                }
            }
            for (int k : ords) {
                if (node.state[static_cast<size_t>(k)] != kFree)
                    continue;
                Node child{node.state, bound, next_id++, node.id, node.depth + 1};
                for (int other : ords)
                    child.state[static_cast<size_t>(other)] = other == k ? kOne : kZero;
                if (!cx.propagate(child.state)) {
                    record(options.trace, child.id, node.id, child.depth, kInf, 'x');
                    continue;
                }
                if (k == best_slot)
                    children.insert(children.begin(), std::move(child));
                else
                    children.push_back(std::move(child));
            }
        } else {
            double v = bound_blocks.mean_delta(branch_k);
            for (uint8_t fix : {v >= 0.5 ? kOne : kZero, v >= 0.5 ? kZero : kOne}) {
                Node child{node.state, bound, next_id++, node.id, node.depth + 1};
                child.state[static_cast<size_t>(branch_k)] = fix;
                if (!cx.propagate(child.state)) {
                    record(options.trace, child.id, node.id, child.depth, kInf, 'x');
                    continue;
                }
                children.push_back(std::move(child));
            }
        }
        bool plunging = std::isinf(ub);
        for (size_t c = 0; c < children.size(); ++c) {
            if (plunging && c == 0)
                plunge = std::move(children[c]);
            else
                open.push(std::move(children[c]));
        }
    }

    out.lp_iterations = bound_blocks.iterations + eval_blocks.iterations;
    out.wall_seconds = clock.seconds();
    if (std::isinf(ub)) {
        out.status = out_of_time ? SolveStatus::cutoff_best : SolveStatus::infeasible;
        out.objective = kInf;
        out.best_bound = lower;
        out.gap = kInf;
        return out;
    }
    bool exhausted = !plunge && open.empty() && !out_of_time;
    double lb = exhausted ? ub : std::min(lower, ub);
    out.status = out_of_time ? SolveStatus::cutoff_best : SolveStatus::optimal;
    out.objective = ub;
    out.best_bound = lb;
    double raw = ub - lb;
    out.gap = raw <= options.gap_abs ? 0.0 : raw / std::max(std::abs(ub), 1e-9);
    if (!eval_blocks.evaluate(incumbent))
        throw SolverError("incumbent re-evaluation failed");
    eval_blocks.extract(out.values);
    out.cs_residual = eval_blocks.worst_cs();
    out.lp_iterations = bound_blocks.iterations + eval_blocks.iterations;
    return out;
}

SolveResult brute_force(const milp::PiProblem& problem, long cap) {
    Clock clock;
    Context cx(problem);
    bool has_cover = std::any_of(problem.families.begin(), problem.families.end(),
                                 [](milp::RowFamily f) { return f == milp::RowFamily::cover; });

    // per-user enumeration digits, in phase/sequence lexicographic order
    struct Choice {
        std::vector<size_t> groups; ///< group indices, channel ascending
        int options = 0;
        enum { single, free3, perm, map6 } kind = single;
    };
    std::vector<std::vector<size_t>> groups_of(static_cast<size_t>(problem.users));
    for (size_t gi = 0; gi < problem.groups.size(); ++gi)
        groups_of[static_cast<size_t>(problem.groups[gi].user)].push_back(gi);
    std::vector<Choice> choices;
    double census = 1.0;
    for (auto& gl : groups_of) {
        if (gl.empty())
            continue;
        Choice c;
        c.groups = gl;
        if (problem.groups[gl[0]].kind == milp::GroupKind::perm6) {
            c.kind = Choice::map6;
            c.options = 6;
            census *= 6.0;
        } else if (gl.size() == 1) {
            c.kind = Choice::single;
            c.options = 3;
            census *= 3.0;
        } else {
            std::sort(c.groups.begin(), c.groups.end(), [&](size_t a, size_t b) {
                return problem.groups[a].channel < problem.groups[b].channel;
            });
            // the census counts physical assignments, six per three-phase
            // user, even though the per-channel relaxation walks 27 combos
            c.kind = has_cover ? Choice::perm : Choice::free3;
            c.options = has_cover ? 6 : 27;
            census *= 6.0;
        }
        choices.push_back(std::move(c));
    }
    if (census > static_cast<double>(cap))
        throw ValidationError("assignment census exceeds the enumeration cap");

    BlockSet bs;
    bs.build(problem);
    SolveResult out;
    double best = kInf, second = kInf;
    DeltaState best_state;
    DeltaState s(problem.binaries.size(), kZero);
    std::vector<int> digit(choices.size(), 0);
    bool done = false;
    while (!done) {
        for (size_t ci = 0; ci < choices.size(); ++ci) {
            const Choice& c = choices[ci];
            int d = digit[ci];
            for (size_t t = 0; t < c.groups.size(); ++t) {
                int slot;
                switch (c.kind) {
                case Choice::single:
                case Choice::map6: slot = d; break;
                case Choice::perm:
                    slot = kPermTable[static_cast<size_t>(d)][t];
                    break;
                default: // free3: base-3 digits, first channel most significant
                    slot = (d / (t == 0 ? 9 : t == 1 ? 3 : 1)) % 3;
                }
                const auto& ords = cx.group_ord[c.groups[t]];
                for (size_t j = 0; j < ords.size(); ++j)
                    s[static_cast<size_t>(ords[j])] =
                        static_cast<int>(j) == slot ? kOne : kZero;
            }
        }
        ++out.assignments_evaluated;
        std::optional<double> obj = bs.evaluate(s);
        if (obj) {
            if (*obj < best) {
                second = best;
                best = *obj;
                best_state = s;
            } else if (*obj < second) {
                second = *obj;
            }
        }
        // advance the odometer; the last user varies fastest so earlier
        // users dominate the lexicographic order
        done = true;
        for (size_t ci = choices.size(); ci-- > 0;) {
            if (++digit[ci] < choices[ci].options) {
                done = false;
                break;
            }
            digit[ci] = 0;
        }
        if (choices.empty())
            done = true;
    }

    out.lp_iterations = bs.iterations;
    out.wall_seconds = clock.seconds();
    if (std::isinf(best)) {
        out.status = SolveStatus::infeasible;
        return out;
    }
    out.status = SolveStatus::optimal;
    out.objective = best;
    out.best_bound = best;
    out.second_best_gap = second - best;
    if (!bs.evaluate(best_state))
        throw SolverError("best assignment re-evaluation failed");
    bs.extract(out.values);
    out.cs_residual = bs.worst_cs();
    out.wall_seconds = clock.seconds();
    return out;
}

} // namespace phaseid::solver
