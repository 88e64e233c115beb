#include "phaseid/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace phaseid::lp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFeasTol = 1e-9;
constexpr double kCostTol = 1e-9;
constexpr double kPivotTol = 1e-10;
constexpr double kPhase1Tol = 1e-7;
constexpr int kRefactorEvery = 64;
constexpr int kStallLimit = 600;
constexpr int kIterationCap = 200000;

} // namespace

int LinearProgram::add_var(double lo_b, double hi_b, double c) {
    lo.push_back(lo_b);
    hi.push_back(hi_b);
    cost.push_back(c);
    return num_vars() - 1;
}

struct BoundedSimplex::Impl {
    enum class Tag : uint8_t { basic, at_lo, at_hi, free_zero };

    int n = 0; ///< structural variables
    int m = 0; ///< rows (one slack each)
    int n_art = 0;
    std::vector<std::vector<std::pair<int, double>>> cols; ///< structural columns
    std::vector<int> art_row;
    std::vector<double> art_sign;

    std::vector<double> vlo, vhi, vcost;
    std::vector<double> rscale, cscale; ///< equilibration, powers of two
    std::vector<Tag> tag;
    std::vector<double> xval; ///< authoritative for nonbasic variables
    std::vector<int> basic;   ///< basis position -> variable
    std::vector<int> pos_of;  ///< variable -> basis position, -1 if nonbasic

    Eigen::MatrixXd binv;
    Eigen::VectorXd xb;
    Eigen::VectorXd y;
    bool xb_stale = true; ///< xb/y are maintained incrementally across pivots
    bool y_stale = true;  ///< and recomputed whenever this is flagged
    int pivots_since_refactor = 0;
    int iterations_call = 0;
    int iterations_life = 0;
    int stall = 0;
    bool has_basis = false;

    [[nodiscard]] int total() const { return n + m + n_art; }

    template <class F> void for_col(int j, F&& f) const {
        if (j < n) {
            for (auto [r, v] : cols[static_cast<size_t>(j)])
                f(r, v);
        } else if (j < n + m) {
            f(j - n, -1.0);
        } else {
            int k = j - n - m;
            f(art_row[static_cast<size_t>(k)], -art_sign[static_cast<size_t>(k)]);
        }
    }

    /// Nearest power of two to the geometric mean of the extreme magnitudes;
    /// power-of-two scales keep every scaled entry exact.
    static double equil_scale(double lo_mag, double hi_mag) {
        if (hi_mag <= 0.0)
            return 1.0;
        return std::exp2(std::round(-0.5 * (std::log2(lo_mag) + std::log2(hi_mag))));
    }

    void load(const LinearProgram& lp) {
        n = lp.num_vars();
        m = static_cast<int>(lp.rows.size());
        cols.assign(static_cast<size_t>(n), {});
        for (int r = 0; r < m; ++r)
            for (auto [j, v] : lp.rows[static_cast<size_t>(r)].terms) {
                if (j < 0 || j >= n)
                    throw ValidationError("row references an unknown variable");
                if (v != 0.0)
                    cols[static_cast<size_t>(j)].emplace_back(r, v);
            }

        // equilibrate: coefficient magnitudes near one keep pivot tests and
        // the dense inverse trustworthy when sigma weights span decades;
        // alternate row and column passes until the scales settle
        rscale.assign(static_cast<size_t>(m), 1.0);
        cscale.assign(static_cast<size_t>(n), 1.0);
        for (int pass = 0; pass < 20; ++pass) {
            bool changed = false;
            std::vector<double> row_min(static_cast<size_t>(m), kInf),
                row_max(static_cast<size_t>(m), 0.0);
            for (int j = 0; j < n; ++j)
                for (auto [r, v] : cols[static_cast<size_t>(j)]) {
                    auto sr = static_cast<size_t>(r);
                    double s = std::abs(v) * rscale[sr] * cscale[static_cast<size_t>(j)];
                    row_min[sr] = std::min(row_min[sr], s);
                    row_max[sr] = std::max(row_max[sr], s);
                }
            for (int r = 0; r < m; ++r) {
                auto sr = static_cast<size_t>(r);
                double f = equil_scale(row_min[sr], row_max[sr]);
                if (f != 1.0) {
                    rscale[sr] *= f;
                    changed = true;
                }
            }
            for (int j = 0; j < n; ++j) {
                double lo_mag = kInf, hi_mag = 0.0;
                for (auto [r, v] : cols[static_cast<size_t>(j)]) {
                    double s = std::abs(v) * rscale[static_cast<size_t>(r)] *
                               cscale[static_cast<size_t>(j)];
                    lo_mag = std::min(lo_mag, s);
                    hi_mag = std::max(hi_mag, s);
                }
                double f = equil_scale(lo_mag, hi_mag);
                if (f != 1.0) {
                    cscale[static_cast<size_t>(j)] *= f;
                    changed = true;
                }
            }
            if (!changed)
                break;
        }
        for (int j = 0; j < n; ++j)
            for (auto& [r, v] : cols[static_cast<size_t>(j)])
                v *= rscale[static_cast<size_t>(r)] * cscale[static_cast<size_t>(j)];

        vlo.assign(static_cast<size_t>(n + m), 0.0);
        vhi.assign(static_cast<size_t>(n + m), 0.0);
        vcost.assign(static_cast<size_t>(n + m), 0.0);
        for (int j = 0; j < n; ++j) {
            auto sj = static_cast<size_t>(j);
            if (lp.lo[sj] > lp.hi[sj])
                throw ValidationError("variable has crossing bounds");
            // x_scaled = x / cscale, so bounds shrink and costs grow with it
            vlo[sj] = lp.lo[sj] / cscale[sj];
            vhi[sj] = lp.hi[sj] / cscale[sj];
            vcost[sj] = lp.cost[sj] * cscale[sj];
        }
        for (int r = 0; r < m; ++r) {
            auto sr = static_cast<size_t>(r);
            if (lp.rows[sr].lo > lp.rows[sr].hi)
                throw ValidationError("row has crossing bounds");
            vlo[static_cast<size_t>(n + r)] = lp.rows[sr].lo * rscale[sr];
            vhi[static_cast<size_t>(n + r)] = lp.rows[sr].hi * rscale[sr];
        }
    }

    void refactor() {
        Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, m);
        for (int p = 0; p < m; ++p)
            for_col(basic[static_cast<size_t>(p)], [&](int r, double v) { b(r, p) = v; });
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(b);
        double diag_max = 0.0, diag_min = kInf;
        for (int i = 0; i < m; ++i) {
            double u = std::abs(lu.matrixLU()(i, i));
            diag_max = std::max(diag_max, u);
            diag_min = std::min(diag_min, u);
        }
        double eps = std::numeric_limits<double>::epsilon();
        if (diag_max == 0.0 || diag_min <= diag_max * eps * static_cast<double>(m))
            throw SolverError("simplex basis became singular");
        binv = lu.inverse();
        pivots_since_refactor = 0;
        xb_stale = y_stale = true;
    }

    [[nodiscard]] Eigen::VectorXd basic_rhs() const {
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
        for (int j = 0; j < total(); ++j) {
            if (tag[static_cast<size_t>(j)] == Tag::basic)
                continue;
            double v = xval[static_cast<size_t>(j)];
            if (v == 0.0)
                continue;
            for_col(j, [&](int r, double a) { rhs(r) -= a * v; });
        }
        return rhs;
    }

    void compute_xb() {
        xb.noalias() = binv * basic_rhs();
        xb_stale = false;
    }

    /// One step of iterative refinement squeezes inverse roundoff out of the
    /// reported basic values.
    void compute_xb_refined() {
        Eigen::VectorXd rhs = basic_rhs();
        xb.noalias() = binv * rhs;
        Eigen::VectorXd resid = rhs;
        for (int p = 0; p < m; ++p)
            for_col(basic[static_cast<size_t>(p)],
                    [&](int r, double v) { resid(r) -= v * xb(p); });
        xb.noalias() += binv * resid;
        xb_stale = false;
    }

    void compute_y() {
        Eigen::VectorXd cb(m);
        for (int p = 0; p < m; ++p)
            cb(p) = vcost[static_cast<size_t>(basic[static_cast<size_t>(p)])];
        y.noalias() = binv.transpose() * cb;
        y_stale = false;
    }

    [[nodiscard]] double reduced_cost(int j) const {
        double d = vcost[static_cast<size_t>(j)];
        for_col(j, [&](int r, double v) { d -= y(r) * v; });
        return d;
    }

    Eigen::VectorXd ftran(int j) const {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(m);
        for_col(j, [&](int r, double v) { a(r) = v; });
        return binv * a;
    }

    /// `enter_wd` is the entering reduced cost priced through the fresh
    /// column, which is exactly the multiplier of the dual-value update.
    void pivot(int leave_pos, int enter, const Eigen::VectorXd& w, Tag leave_tag,
               double leave_value, double enter_value, double enter_wd) {
        int lv = basic[static_cast<size_t>(leave_pos)];
        tag[static_cast<size_t>(lv)] = leave_tag;
        xval[static_cast<size_t>(lv)] = leave_value;
        pos_of[static_cast<size_t>(lv)] = -1;
        basic[static_cast<size_t>(leave_pos)] = enter;
        pos_of[static_cast<size_t>(enter)] = leave_pos;
        tag[static_cast<size_t>(enter)] = Tag::basic;
        xval[static_cast<size_t>(enter)] = enter_value;

        Eigen::RowVectorXd prow = binv.row(leave_pos) / w(leave_pos);
        if (!y_stale)
            y.noalias() += enter_wd * prow.transpose();
        binv.noalias() -= w * prow;
        binv.row(leave_pos) = prow;
        // refactor right away after a small pivot so its error cannot compound
        if (++pivots_since_refactor >= kRefactorEvery || std::abs(w(leave_pos)) < 1e-7)
            refactor();
    }

    /// Primal simplex on the current costs. Returns optimal, unbounded or
    /// iteration_limit.
    LpStatus primal() {
        stall = 0;
        bool bland = false;
        for (;;) {
            if (iterations_call >= kIterationCap)
                return LpStatus::iteration_limit;
            if (xb_stale)
                compute_xb();
            if (y_stale)
                compute_y();

            int enter = -1;
            double best = kCostTol;
            double enter_d = 0.0;
            int dir = 0;
            for (int j = 0; j < total(); ++j) {
                Tag tg = tag[static_cast<size_t>(j)];
                if (tg == Tag::basic)
                    continue;
                auto sj = static_cast<size_t>(j);
                if (vhi[sj] - vlo[sj] <= kPivotTol)
                    continue; // fixed
                double d = reduced_cost(j);
                int t = 0;
                if ((tg == Tag::at_lo || tg == Tag::free_zero) && d < -kCostTol)
                    t = 1;
                else if ((tg == Tag::at_hi || tg == Tag::free_zero) && d > kCostTol)
                    t = -1;
                if (t == 0)
                    continue;
                if (bland) { // first eligible index, guaranteed to escape cycles
                    enter = j;
                    dir = t;
                    enter_d = d;
                    break;
                }
                if (std::abs(d) > best) {
                    enter = j;
                    dir = t;
                    enter_d = d;
                    best = std::abs(d);
                }
            }
            if (enter < 0)
                return LpStatus::optimal;

            auto se = static_cast<size_t>(enter);
            Eigen::VectorXd w = ftran(enter);
            // price the column through the basic costs: disagreement with the
            // btran estimate means the eta updates drifted
            double wd = vcost[se];
            for (int i = 0; i < m; ++i)
                wd -= vcost[static_cast<size_t>(basic[static_cast<size_t>(i)])] * w(i);
            if (pivots_since_refactor > 0 &&
                std::abs(wd - enter_d) > 1e-6 * (1.0 + std::abs(enter_d))) {
                refactor();
                continue;
            }
            double span = vhi[se] - vlo[se];
            double theta = span; // bound flip distance, may be infinite
            int leave_pos = -1;
            bool leave_upper = false;
            double leave_w = 0.0;
            for (int i = 0; i < m; ++i) {
                double g = -dir * w(i);
                auto bi = static_cast<size_t>(basic[static_cast<size_t>(i)]);
                double cand;
                bool upper;
                if (g > kPivotTol) {
                    if (vhi[bi] == kInf)
                        continue;
                    cand = (vhi[bi] - xb(i)) / g;
                    upper = true;
                } else if (g < -kPivotTol) {
                    if (vlo[bi] == -kInf)
                        continue;
                    cand = (vlo[bi] - xb(i)) / g;
                    upper = false;
                } else {
                    continue;
                }
                cand = std::max(cand, 0.0);
                // near-ties go to the biggest pivot to protect the basis
                bool better = cand < theta - 1e-12;
                if (!better && leave_pos >= 0 && cand <= theta + kFeasTol * (1.0 + theta))
                    better = bland ? basic[static_cast<size_t>(i)] <
                                         basic[static_cast<size_t>(leave_pos)]
                                   : std::abs(w(i)) > std::abs(leave_w);
                if (better) {
                    theta = std::min(cand, theta);
                    leave_pos = i;
                    leave_upper = upper;
                    leave_w = w(i);
                }
            }
            ++iterations_call;
            ++iterations_life;
            if (theta == kInf)
                return LpStatus::unbounded;
            if (theta <= kFeasTol) {
                if (++stall >= kStallLimit)
                    bland = true;
            } else {
                stall = 0;
                bland = false;
            }
            if (leave_pos < 0) {
                // bound flip: the entering variable crosses its box
                tag[se] = dir > 0 ? Tag::at_hi : Tag::at_lo;
                xval[se] = dir > 0 ? vhi[se] : vlo[se];
                xb.noalias() -= (dir * theta) * w;
                continue;
            }
            double start = tag[se] == Tag::at_hi ? vhi[se] : tag[se] == Tag::at_lo ? vlo[se] : 0.0;
            double enter_value = start + dir * theta;
            auto lb = static_cast<size_t>(basic[static_cast<size_t>(leave_pos)]);
            xb.noalias() -= (dir * theta) * w;
            xb(leave_pos) = enter_value;
            pivot(leave_pos, enter, w, leave_upper ? Tag::at_hi : Tag::at_lo,
                  leave_upper ? vhi[lb] : vlo[lb], enter_value, wd);
        }
    }

    /// Dual simplex after bound changes; assumes the tags were made dual
    /// feasible by `restore_dual_feasibility`.
    LpStatus dual() {
        stall = 0;
        bool bland = false;
        for (;;) {
            if (iterations_call >= kIterationCap)
                return LpStatus::iteration_limit;
            if (xb_stale)
                compute_xb();
            if (y_stale)
                compute_y();

            int leave_pos = -1;
            double worst = kFeasTol;
            double sigma = 0.0;
            for (int i = 0; i < m; ++i) {
                auto bi = static_cast<size_t>(basic[static_cast<size_t>(i)]);
                double over = xb(i) - vhi[bi];
                double under = vlo[bi] - xb(i);
                double scale = 1.0 + std::max(std::abs(vlo[bi]) == kInf ? 0.0 : std::abs(vlo[bi]),
                                              std::abs(vhi[bi]) == kInf ? 0.0 : std::abs(vhi[bi]));
                double v = std::max(over, under) / scale;
                if (v <= kFeasTol)
                    continue;
                bool better = leave_pos < 0 ||
                              (bland ? basic[static_cast<size_t>(i)] <
                                           basic[static_cast<size_t>(leave_pos)]
                                     : v > worst);
                if (better) {
                    worst = v;
                    leave_pos = i;
                    sigma = over >= under ? 1.0 : -1.0;
                }
            }
            if (leave_pos < 0)
                return LpStatus::optimal;

            Eigen::VectorXd br = binv.row(leave_pos).transpose();
            int enter = -1;
            double best_ratio = kInf;
            double best_alpha = 0.0;
            for (int j = 0; j < total(); ++j) {
                Tag tg = tag[static_cast<size_t>(j)];
                if (tg == Tag::basic)
                    continue;
                auto sj = static_cast<size_t>(j);
                if (vhi[sj] - vlo[sj] <= kPivotTol)
                    continue;
                double alpha = 0.0;
                for_col(j, [&](int r, double v) { alpha += br(r) * v; });
                double salpha = sigma * alpha;
                bool ok = (tg == Tag::at_lo || tg == Tag::free_zero) ? salpha > kPivotTol
                                                                     : salpha < -kPivotTol;
                if (tg == Tag::free_zero)
                    ok = std::abs(salpha) > kPivotTol;
                if (!ok)
                    continue;
                double ratio = std::max(reduced_cost(j) / salpha, 0.0);
                if (bland) {
                    enter = j;
                    best_alpha = alpha;
                    break;
                }
                // near-ties go to the biggest pivot to protect the basis
                if (ratio < best_ratio - 1e-12 ||
                    (ratio <= best_ratio + kCostTol * (1.0 + best_ratio) &&
                     std::abs(alpha) > std::abs(best_alpha))) {
                    best_ratio = std::min(ratio, best_ratio);
                    enter = j;
                    best_alpha = alpha;
                }
            }
            if (enter < 0)
                return LpStatus::infeasible;

            ++iterations_call;
            ++iterations_life;
            if (best_ratio <= kFeasTol) {
                if (++stall >= kStallLimit)
                    bland = true;
            } else {
                stall = 0;
                bland = false;
            }
            auto lb = static_cast<size_t>(basic[static_cast<size_t>(leave_pos)]);
            Eigen::VectorXd w = ftran(enter);
            // the row estimate and the fresh column must agree on the pivot
            // element; a mismatch means the eta updates drifted
            if (pivots_since_refactor > 0 &&
                (std::abs(w(leave_pos)) <= kPivotTol ||
                 std::abs(w(leave_pos) - best_alpha) > 1e-6 * (1.0 + std::abs(best_alpha)))) {
                refactor();
                continue;
            }
            auto se = static_cast<size_t>(enter);
            double wd = vcost[se];
            for (int i = 0; i < m; ++i)
                wd -= vcost[static_cast<size_t>(basic[static_cast<size_t>(i)])] * w(i);
            double target = sigma > 0 ? vhi[lb] : vlo[lb];
            double tmove = (xb(leave_pos) - target) / w(leave_pos);
            double enter_value = xval[se] + tmove;
            xb.noalias() -= tmove * w;
            xb(leave_pos) = enter_value;
            pivot(leave_pos, enter, w, sigma > 0 ? Tag::at_hi : Tag::at_lo, target,
                  enter_value, wd);
        }
    }

    /// Bound changes can leave a nonbasic tag on the dual-infeasible side;
    /// flipping it to the opposite bound restores the invariant.
    void restore_dual_feasibility() {
        if (y_stale)
            compute_y();
        xb_stale = true;
        for (int j = 0; j < total(); ++j) {
            Tag tg = tag[static_cast<size_t>(j)];
            if (tg == Tag::basic || tg == Tag::free_zero)
                continue;
            auto sj = static_cast<size_t>(j);
            if (vhi[sj] - vlo[sj] <= kPivotTol)
                continue;
            double d = reduced_cost(j);
            if (tg == Tag::at_lo && d < -kCostTol && vhi[sj] < kInf) {
                tag[sj] = Tag::at_hi;
                xval[sj] = vhi[sj];
            } else if (tg == Tag::at_hi && d > kCostTol && vlo[sj] > -kInf) {
                tag[sj] = Tag::at_lo;
                xval[sj] = vlo[sj];
            }
        }
    }

    void start_basis() {
        n_art = 0;
        art_row.clear();
        art_sign.clear();
        vlo.resize(static_cast<size_t>(n + m));
        vhi.resize(static_cast<size_t>(n + m));
        vcost.resize(static_cast<size_t>(n + m));
        tag.assign(static_cast<size_t>(n + m), Tag::at_lo);
        xval.assign(static_cast<size_t>(n + m), 0.0);
        pos_of.assign(static_cast<size_t>(n + m), -1);
        basic.assign(static_cast<size_t>(m), -1);

        for (int j = 0; j < n; ++j) {
            auto sj = static_cast<size_t>(j);
            if (vlo[sj] > -kInf) {
                tag[sj] = Tag::at_lo;
                xval[sj] = vlo[sj];
            } else if (vhi[sj] < kInf) {
                tag[sj] = Tag::at_hi;
                xval[sj] = vhi[sj];
            } else {
                tag[sj] = Tag::free_zero;
                xval[sj] = 0.0;
            }
        }
        std::vector<double> act(static_cast<size_t>(m), 0.0);
        for (int j = 0; j < n; ++j) {
            double v = xval[static_cast<size_t>(j)];
            if (v == 0.0)
                continue;
            for (auto [r, a] : cols[static_cast<size_t>(j)])
                act[static_cast<size_t>(r)] += a * v;
        }
        for (int r = 0; r < m; ++r) {
            auto slack = static_cast<size_t>(n + r);
            double v = act[static_cast<size_t>(r)];
            if (v >= vlo[slack] - kFeasTol && v <= vhi[slack] + kFeasTol) {
                basic[static_cast<size_t>(r)] = n + r;
                pos_of[slack] = r;
                tag[slack] = Tag::basic;
                xval[slack] = v;
            } else {
                double clamp = std::min(std::max(v, vlo[slack]), vhi[slack]);
                tag[slack] = clamp == vlo[slack] ? Tag::at_lo : Tag::at_hi;
                xval[slack] = clamp;
                int k = n_art++;
                art_row.push_back(r);
                art_sign.push_back(v > clamp ? 1.0 : -1.0);
                vlo.push_back(0.0);
                vhi.push_back(kInf);
                vcost.push_back(0.0);
                tag.push_back(Tag::basic);
                xval.push_back(std::abs(v - clamp));
                pos_of.push_back(r);
                basic[static_cast<size_t>(r)] = n + m + k;
            }
        }
        refactor();
        has_basis = true;
    }

    [[nodiscard]] double value_of(int j) const {
        return tag[static_cast<size_t>(j)] == Tag::basic
                   ? xb(pos_of[static_cast<size_t>(j)])
                   : xval[static_cast<size_t>(j)];
    }

    /// Worst relative bound violation over the basic variables, the same
    /// measure the dual simplex prices leaving candidates by.
    [[nodiscard]] double primal_violation() const {
        double worst = 0.0;
        for (int i = 0; i < m; ++i) {
            auto bi = static_cast<size_t>(basic[static_cast<size_t>(i)]);
            double over = xb(i) - vhi[bi];
            double under = vlo[bi] - xb(i);
            double scale =
                1.0 + std::max(std::abs(vlo[bi]) == kInf ? 0.0 : std::abs(vlo[bi]),
                               std::abs(vhi[bi]) == kInf ? 0.0 : std::abs(vhi[bi]));
            worst = std::max(worst, std::max(over, under) / scale);
        }
        return worst;
    }

    LpResult finish(LpStatus status) {
        // The iteration loops see basic values through the eta-updated
        // inverse, which can drift enough to hide a real bound violation at
        // the moment optimality is declared. Recheck against a fresh
        // factorization; a dirty basis is still dual feasible here, so the
        // dual simplex is the natural way to finish the job.
        for (int round = 0; status == LpStatus::optimal; ++round) {
            if (pivots_since_refactor > 0)
                refactor();
            compute_xb_refined();
            if (primal_violation() <= kFeasTol)
                break;
            if (round >= 4)
                throw SolverError("basis verification keeps failing after refactoring");
            status = dual();
        }
        LpResult res;
        res.status = status;
        res.iterations = iterations_call;
        if (status != LpStatus::optimal)
            compute_xb();
        res.x.resize(static_cast<size_t>(n));
        for (int j = 0; j < n; ++j)
            res.x[static_cast<size_t>(j)] = value_of(j) * cscale[static_cast<size_t>(j)];
        if (status != LpStatus::optimal)
            return res;

        for (int j = 0; j < n; ++j)
            res.objective += vcost[static_cast<size_t>(j)] * value_of(j);

        // honest certificate in original units: bound, row, dual violations
        double viol = 0.0;
        for (int j = 0; j < n; ++j) {
            double v = value_of(j);
            auto sj = static_cast<size_t>(j);
            viol = std::max(viol, (vlo[sj] - v) * cscale[sj]);
            viol = std::max(viol, (v - vhi[sj]) * cscale[sj]);
        }
        std::vector<double> act(static_cast<size_t>(m), 0.0); // scaled space
        for (int j = 0; j < n; ++j) {
            double v = value_of(j);
            if (v == 0.0)
                continue;
            for (auto [r, a] : cols[static_cast<size_t>(j)])
                act[static_cast<size_t>(r)] += a * v;
        }
        for (int r = 0; r < m; ++r) {
            auto slack = static_cast<size_t>(n + r);
            auto sr = static_cast<size_t>(r);
            double unscaled = act[sr] / rscale[sr];
            double scale = (1.0 + std::abs(unscaled)) * rscale[sr];
            viol = std::max(viol, (vlo[slack] - act[sr]) / scale);
            viol = std::max(viol, (act[sr] - vhi[slack]) / scale);
        }
        compute_y();
        for (int j = 0; j < total(); ++j) {
            Tag tg = tag[static_cast<size_t>(j)];
            if (tg == Tag::basic)
                continue;
            auto sj = static_cast<size_t>(j);
            if (vhi[sj] - vlo[sj] <= kPivotTol)
                continue;
            double d = reduced_cost(j);
            if (tg == Tag::at_lo)
                viol = std::max(viol, -d);
            else if (tg == Tag::at_hi)
                viol = std::max(viol, d);
            else
                viol = std::max(viol, std::abs(d));
        }
        res.cs_residual = std::max(viol, 0.0);
        return res;
    }
};

BoundedSimplex::BoundedSimplex(const LinearProgram& lp) : impl_(std::make_unique<Impl>()) {
    impl_->load(lp);
}

BoundedSimplex::~BoundedSimplex() = default;
BoundedSimplex::BoundedSimplex(BoundedSimplex&&) noexcept = default;
BoundedSimplex& BoundedSimplex::operator=(BoundedSimplex&&) noexcept = default;

LpResult BoundedSimplex::solve() {
    Impl& s = *impl_;
    s.iterations_call = 0;
    s.start_basis();

    // phase 1: price the artificial gap out of the basis
    if (s.n_art > 0) {
        std::vector<double> real_cost(s.vcost.begin(), s.vcost.begin() + s.n);
        std::fill(s.vcost.begin(), s.vcost.begin() + s.n + s.m, 0.0);
        std::fill(s.vcost.begin() + s.n + s.m, s.vcost.end(), 1.0);
        LpStatus st = s.primal();
        double infeas = 0.0;
        for (int k = 0; k < s.n_art; ++k)
            infeas += s.value_of(s.n + s.m + k);
        std::copy(real_cost.begin(), real_cost.end(), s.vcost.begin());
        std::fill(s.vcost.begin() + s.n + s.m, s.vcost.end(), 0.0);
        s.y_stale = true;
        // pin the artificials on every exit, or a later warm resolve would
        // keep them around as free absorbers of the row residuals
        for (int k = 0; k < s.n_art; ++k)
            s.vhi[static_cast<size_t>(s.n + s.m + k)] = 0.0;
        for (int k = 0; k < s.n_art; ++k)
            if (s.tag[static_cast<size_t>(s.n + s.m + k)] != Impl::Tag::basic)
                s.xval[static_cast<size_t>(s.n + s.m + k)] = 0.0;
        if (st == LpStatus::iteration_limit)
            return s.finish(st);
        if (infeas > kPhase1Tol)
            return s.finish(LpStatus::infeasible);
    }
    return s.finish(s.primal());
}

void BoundedSimplex::set_bounds(int var, double lo, double hi) {
    Impl& s = *impl_;
    if (var < 0 || var >= s.n)
        throw ValidationError("bound change on an unknown variable");
    if (lo > hi)
        throw ValidationError("variable has crossing bounds");
    auto sj = static_cast<size_t>(var);
    s.vlo[sj] = lo / s.cscale[sj];
    s.vhi[sj] = hi / s.cscale[sj];
    if (s.tag.empty())
        return; // not started yet: the first solve picks the bounds up
    s.xb_stale = true;
    if (s.tag[sj] == Impl::Tag::at_lo) {
        if (lo > -kInf)
            s.xval[sj] = s.vlo[sj];
        else {
            s.tag[sj] = Impl::Tag::free_zero;
            s.xval[sj] = 0.0;
        }
    } else if (s.tag[sj] == Impl::Tag::at_hi) {
        if (hi < kInf)
            s.xval[sj] = s.vhi[sj];
        else {
            s.tag[sj] = Impl::Tag::free_zero;
            s.xval[sj] = 0.0;
        }
    }
}

LpResult BoundedSimplex::resolve() {
    Impl& s = *impl_;
    if (!s.has_basis)
        return solve();
    try {
        s.iterations_call = 0;
        s.restore_dual_feasibility();
        return s.finish(s.dual());
    } catch (const SolverError&) {
        // the warm basis degraded beyond repair; a cold start is still exact
        return solve();
    }
}

int BoundedSimplex::iterations_total() const { return impl_->iterations_life; }

} // namespace phaseid::lp
