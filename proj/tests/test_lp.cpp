#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "phaseid/lp.hpp"

using namespace phaseid;
using namespace phaseid::lp;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

LinearProgram::Row row(std::vector<std::pair<int, double>> terms, double lo, double hi) {
    LinearProgram::Row r;
    r.terms = std::move(terms);
    r.lo = lo;
    r.hi = hi;
    return r;
}

/// Exhaustive vertex enumeration for small fully-bounded LPs: every choice of
/// basis columns and nonbasic bound pattern. Returns the best objective, or
/// nothing when no feasible vertex exists.
std::optional<double> enumerate_optimum(const LinearProgram& lp) {
    int n = lp.num_vars();
    int m = static_cast<int>(lp.rows.size());
    int total = n + m;
    std::vector<double> lo(lp.lo), hi(lp.hi);
    for (const auto& r : lp.rows) {
        lo.push_back(r.lo);
        hi.push_back(r.hi);
    }
    // dense column matrix of [A | -I]
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, total);
    for (int r = 0; r < m; ++r) {
        for (auto [j, v] : lp.rows[static_cast<size_t>(r)].terms)
            a(r, j) += v;
        a(r, n + r) = -1.0;
    }

    std::optional<double> best;
    std::vector<int> pick(static_cast<size_t>(m));
    std::vector<int> comb;
    // iterate combinations of m basis columns out of `total`
    std::vector<int> idx(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i)
        idx[static_cast<size_t>(i)] = i;
    for (;;) {
        Eigen::MatrixXd b(m, m);
        for (int i = 0; i < m; ++i)
            b.col(i) = a.col(idx[static_cast<size_t>(i)]);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(b);
        if (lu.isInvertible()) {
            std::vector<int> nonbasic;
            std::vector<bool> is_basic(static_cast<size_t>(total), false);
            for (int i : idx)
                is_basic[static_cast<size_t>(i)] = true;
            for (int j = 0; j < total; ++j)
                if (!is_basic[static_cast<size_t>(j)])
                    nonbasic.push_back(j);
            int patterns = 1 << nonbasic.size();
            for (int p = 0; p < patterns; ++p) {
                Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
                std::vector<double> x(static_cast<size_t>(total), 0.0);
                for (size_t k = 0; k < nonbasic.size(); ++k) {
                    int j = nonbasic[k];
                    double v = (p >> k) & 1 ? hi[static_cast<size_t>(j)] : lo[static_cast<size_t>(j)];
                    x[static_cast<size_t>(j)] = v;
                    rhs -= a.col(j) * v;
                }
                Eigen::VectorXd xb = lu.solve(rhs);
                bool ok = true;
                for (int i = 0; i < m && ok; ++i) {
                    int j = idx[static_cast<size_t>(i)];
                    if (xb(i) < lo[static_cast<size_t>(j)] - 1e-7 ||
                        xb(i) > hi[static_cast<size_t>(j)] + 1e-7)
                        ok = false;
                    x[static_cast<size_t>(j)] = xb(i);
                }
                if (!ok)
                    continue;
                double obj = 0.0;
                for (int j = 0; j < n; ++j)
                    obj += lp.cost[static_cast<size_t>(j)] * x[static_cast<size_t>(j)];
                if (!best || obj < *best)
                    best = obj;
            }
        }
        // next combination
        int i = m - 1;
        while (i >= 0 && idx[static_cast<size_t>(i)] == total - m + i)
            --i;
        if (i < 0)
            break;
        ++idx[static_cast<size_t>(i)];
        for (int k = i + 1; k < m; ++k)
            idx[static_cast<size_t>(k)] = idx[static_cast<size_t>(k - 1)] + 1;
    }
    return best;
}

LinearProgram random_lp(uint64_t seed, int n, int m) {
    LinearProgram lp;
    for (int j = 0; j < n; ++j) {
        double lo = -2.0 * rng::uniform(seed, 1, static_cast<uint64_t>(j));
        double hi = 2.0 * rng::uniform(seed, 2, static_cast<uint64_t>(j)) + 0.05;
        lp.add_var(lo, hi, 2.0 * rng::uniform(seed, 3, static_cast<uint64_t>(j)) - 1.0);
    }
    for (int r = 0; r < m; ++r) {
        LinearProgram::Row rr;
        for (int j = 0; j < n; ++j) {
            double u = rng::uniform(seed, 4, static_cast<uint64_t>(r), static_cast<uint64_t>(j));
            if (u < 0.55)
                continue;
            rr.terms.emplace_back(j, 4.0 * u - 3.0);
        }
        if (rr.terms.empty())
            rr.terms.emplace_back(r % n, 1.0);
        double c = 2.0 * rng::uniform(seed, 5, static_cast<uint64_t>(r)) - 1.0;
        double w = 0.4 + rng::uniform(seed, 6, static_cast<uint64_t>(r));
        if (rng::uniform(seed, 7, static_cast<uint64_t>(r)) < 0.25) {
            rr.lo = c; // equality
            rr.hi = c;
        } else {
            rr.lo = c - w;
            rr.hi = c + w;
        }
        lp.rows.push_back(std::move(rr));
    }
    return lp;
}

} // namespace

TEST_CASE("classic textbook instances reach the known optima") {
    {
        LinearProgram lp;
        lp.add_var(0.0, 3.0, -1.0);
        lp.add_var(0.0, 2.0, -2.0);
        lp.rows.push_back(row({{0, 1.0}, {1, 1.0}}, -kInf, 4.0));
        BoundedSimplex s(lp);
        LpResult r = s.solve();
        REQUIRE(r.status == LpStatus::optimal);
        CHECK(r.objective == doctest::Approx(-6.0).epsilon(1e-10));
        CHECK(r.x[0] == doctest::Approx(2.0));
        CHECK(r.x[1] == doctest::Approx(2.0));
        CHECK(r.cs_residual <= 1e-8);
    }
    {
        LinearProgram lp;
        lp.add_var(0.0, 5.0, 1.0);
        lp.add_var(0.0, 5.0, 1.0);
        lp.rows.push_back(row({{0, 1.0}, {1, 2.0}}, 3.0, 3.0));
        BoundedSimplex s(lp);
        LpResult r = s.solve();
        REQUIRE(r.status == LpStatus::optimal);
        CHECK(r.objective == doctest::Approx(1.5).epsilon(1e-10));
        CHECK(r.x[1] == doctest::Approx(1.5));
    }
    {
        // crossing requirements on one variable
        LinearProgram lp;
        lp.add_var(0.0, 10.0, 1.0);
        lp.rows.push_back(row({{0, 1.0}}, 2.0, kInf));
        lp.rows.push_back(row({{0, 1.0}}, -kInf, 1.0));
        BoundedSimplex s(lp);
        CHECK(s.solve().status == LpStatus::infeasible);
    }
    {
        LinearProgram lp;
        lp.add_var(0.0, kInf, -1.0);
        lp.rows.push_back(row({{0, 1.0}}, 0.0, kInf));
        BoundedSimplex s(lp);
        CHECK(s.solve().status == LpStatus::unbounded);
    }
}

TEST_CASE("absolute-deviation epigraph recovers the weighted median") {
    const double z[3] = {1.0, 2.0, 10.0};
    LinearProgram lp;
    int x = lp.add_var(-kInf, kInf, 0.0);
    for (int i = 0; i < 3; ++i) {
        int rho = lp.add_var(0.0, kInf, 1.0);
        lp.rows.push_back(row({{rho, 1.0}, {x, -1.0}}, -z[i], kInf)); // rho >= x - z
        lp.rows.push_back(row({{rho, 1.0}, {x, 1.0}}, z[i], kInf));   // rho >= z - x
    }
    BoundedSimplex s(lp);
    LpResult r = s.solve();
    REQUIRE(r.status == LpStatus::optimal);
    CHECK(r.objective == doctest::Approx(9.0).epsilon(1e-10));
    CHECK(r.x[static_cast<size_t>(x)] == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(r.cs_residual <= 1e-8);
}

TEST_CASE("random instances agree with exhaustive vertex enumeration") {
    int feasible = 0, infeasible = 0;
    for (uint64_t seed = 1; seed <= 40; ++seed) {
        int n = seed % 2 == 0 ? 4 : 5;
        int m = seed % 2 == 0 ? 3 : 4;
        LinearProgram lp = random_lp(seed, n, m);
        std::optional<double> want = enumerate_optimum(lp);
        BoundedSimplex s(lp);
        LpResult r = s.solve();
        CAPTURE(seed);
        if (want) {
            ++feasible;
            REQUIRE(r.status == LpStatus::optimal);
            CHECK(r.objective ==
                  doctest::Approx(*want).epsilon(1e-7).scale(1.0 + std::abs(*want)));
            CHECK(r.cs_residual <= 1e-8);
        } else {
            ++infeasible;
            REQUIRE(r.status == LpStatus::infeasible);
        }
    }
    // the generator must exercise both outcomes to be a meaningful oracle
    CHECK(feasible >= 10);
    CHECK(infeasible >= 3);
}

TEST_CASE("dual reoptimization after bound changes matches a fresh solve") {
    for (uint64_t seed = 50; seed < 62; ++seed) {
        LinearProgram lp = random_lp(seed, 5, 4);
        BoundedSimplex warm(lp);
        LpResult base = warm.solve();
        if (base.status != LpStatus::optimal)
            continue;

        // fix the first variable to its upper bound, then relax it again
        double lo0 = lp.lo[0], hi0 = lp.hi[0];
        warm.set_bounds(0, hi0, hi0);
        LpResult fixed = warm.resolve();

        LinearProgram mod = lp;
        mod.lo[0] = hi0;
        BoundedSimplex cold(mod);
        LpResult fresh = cold.solve();
        CAPTURE(seed);
        REQUIRE(fixed.status == fresh.status);
        if (fresh.status == LpStatus::optimal) {
            CHECK(fixed.objective ==
                  doctest::Approx(fresh.objective).epsilon(1e-8).scale(1.0 + std::abs(fresh.objective)));
            CHECK(fixed.cs_residual <= 1e-8);
        }

        warm.set_bounds(0, lo0, hi0);
        LpResult back = warm.resolve();
        REQUIRE(back.status == LpStatus::optimal);
        CHECK(back.objective ==
              doctest::Approx(base.objective).epsilon(1e-8).scale(1.0 + std::abs(base.objective)));
    }
}

TEST_CASE("infeasible boxes are detected and recovery works") {
    LinearProgram lp;
    lp.add_var(0.0, 1.0, 0.0);
    lp.add_var(0.0, 1.0, 0.0);
    lp.add_var(0.0, kInf, 1.0); // slack-ish third variable keeps the row satisfiable
    lp.rows.push_back(row({{0, 1.0}, {1, 1.0}, {2, 1.0}}, 1.5, 1.5));
    BoundedSimplex s(lp);
    REQUIRE(s.solve().status == LpStatus::optimal);

    s.set_bounds(0, 0.0, 0.0);
    s.set_bounds(1, 0.0, 0.0);
    LpResult r = s.resolve();
    REQUIRE(r.status == LpStatus::optimal);
    CHECK(r.objective == doctest::Approx(1.5));

    s.set_bounds(2, 0.0, 0.0); // now the row cannot reach 1.5
    CHECK(s.resolve().status == LpStatus::infeasible);

    s.set_bounds(0, 0.0, 1.0);
    s.set_bounds(1, 0.0, 1.0);
    LpResult again = s.resolve();
    REQUIRE(again.status == LpStatus::optimal);
    CHECK(again.objective == doctest::Approx(0.0));
}

TEST_CASE("identical runs are bit-identical and iterations accumulate") {
    LinearProgram lp = random_lp(99, 5, 4);
    BoundedSimplex a(lp), b(lp);
    LpResult ra = a.solve(), rb = b.solve();
    REQUIRE(ra.status == rb.status);
    CHECK(ra.iterations == rb.iterations);
    for (size_t j = 0; j < ra.x.size(); ++j)
        CHECK(ra.x[j] == rb.x[j]);

    int before = a.iterations_total();
    a.set_bounds(0, lp.lo[0], lp.lo[0]);
    a.resolve();
    CHECK(a.iterations_total() >= before);
}
