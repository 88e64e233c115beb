#pragma once

#include <memory>
#include <string>
#include <vector>

#include "phaseid/common.hpp"

namespace phaseid::lp {

/// Minimization over box-constrained variables with two-sided rows:
///   min c.x  s.t.  row.lo <= a.x <= row.hi,  lo <= x <= hi.
/// Equalities set row.lo == row.hi; one-sided rows use +/-infinity.
struct LinearProgram {
    std::vector<double> lo, hi, cost;
    struct Row {
        std::vector<std::pair<int, double>> terms;
        double lo = 0.0, hi = 0.0;
    };
    std::vector<Row> rows;

    [[nodiscard]] int num_vars() const { return static_cast<int>(cost.size()); }
    int add_var(double lo_b, double hi_b, double c);
};

enum class LpStatus : uint8_t { optimal, infeasible, unbounded, iteration_limit };

struct LpResult {
    LpStatus status = LpStatus::iteration_limit;
    double objective = 0.0;
    std::vector<double> x; ///< structural variable values
    int iterations = 0;
    double cs_residual = 0.0; ///< worst primal/dual/complementarity violation
};

/// Revised bounded-variable simplex with a dense explicit basis inverse.
/// `solve` runs the two-phase primal method from a slack basis; after bound
/// changes `resolve` reoptimizes with the dual method from the kept basis,
/// which stays dual-feasible because costs never change. Deterministic:
/// Dantzig pricing with index tie-breaks and a Bland fallback on stalls.
class BoundedSimplex {
public:
    explicit BoundedSimplex(const LinearProgram& lp);
    ~BoundedSimplex();
    BoundedSimplex(BoundedSimplex&&) noexcept;
    BoundedSimplex& operator=(BoundedSimplex&&) noexcept;

    LpResult solve();
    void set_bounds(int var, double lo, double hi);
    LpResult resolve();

    [[nodiscard]] int iterations_total() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace phaseid::lp
