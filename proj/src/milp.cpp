#include "phaseid/milp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "phaseid/pf_sim.hpp"

namespace phaseid::milp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Injection entity: one per single-phase user; one per meter channel for
/// three-phase users under models a/b; one per user under model c.
struct Entity {
    int user = -1;
    int channel = -1;
    int bus = -1;
    std::array<double, 3> p_lo{}, p_hi{}, q_lo{}, q_hi{};
    bool zero_forced = true; ///< off-phase injections pinned to zero
};

struct Builder {
    const net::FeederModel& model;
    const MeasurementSet& ms;
    const BuildOptions& opt;
    PiProblem pb;
    std::vector<Entity> entities;
    std::vector<std::array<int, 3>> entity_of_channel; ///< [user][meter channel]
    double wmax;

    Builder(const net::FeederModel& m, const MeasurementSet& s, const BuildOptions& o)
        : model(m), ms(s), opt(o), wmax(o.vmax_pu * o.vmax_pu) {}

    void push_row(ld3f::Row row, RowFamily family) {
        pb.rows.push_back(std::move(row));
        pb.families.push_back(family);
    }

    void make_entities() {
        entity_of_channel.assign(model.users.size(), {-1, -1, -1});
        for (size_t u = 0; u < model.users.size(); ++u) {
            const net::User& usr = model.users[u];
            bool three = usr.arity == net::UserArity::three_phase;
            int copies = three && opt.model != Model::c ? 3 : 1;
            for (int k = 0; k < copies; ++k) {
                Entity e;
                e.user = static_cast<int>(u);
                e.channel = copies == 3 ? k : -1;
                e.bus = usr.bus;
                for (int p = 0; p < 3; ++p) {
                    auto sp = static_cast<size_t>(p);
                    e.p_lo[sp] = std::max(usr.bounds.p_lo[sp], -opt.edge_bound_pu);
                    e.p_hi[sp] = std::min(usr.bounds.p_hi[sp], opt.edge_bound_pu);
                    e.q_lo[sp] = std::max(usr.bounds.q_lo[sp], -opt.edge_bound_pu);
                    e.q_hi[sp] = std::min(usr.bounds.q_hi[sp], opt.edge_bound_pu);
                }
                e.zero_forced = !(three && opt.model == Model::c);
                int id = static_cast<int>(entities.size());
                entities.push_back(e);
                if (copies == 3)
                    entity_of_channel[u][static_cast<size_t>(k)] = id;
                else
                    entity_of_channel[u] = {id, id, id};
            }
        }
    }

    void make_groups() {
        std::vector<double> peak(model.users.size(), 0.0);
        for (const Channel& c : ms.channels) {
            if (c.owner == kTransformerOwner || c.quantity != Quantity::p)
                continue;
            int u = model.user_index(c.owner);
            for (double v : c.values)
                peak[static_cast<size_t>(u)] = std::max(peak[static_cast<size_t>(u)], std::abs(v));
        }
        for (int e = 0; e < static_cast<int>(entities.size()); ++e) {
            const Entity& ent = entities[static_cast<size_t>(e)];
            const net::User& usr = model.users[static_cast<size_t>(ent.user)];
            bool perm = usr.arity == net::UserArity::three_phase && opt.model == Model::c;
            DeltaGroup g;
            g.user = ent.user;
            g.channel = ent.channel;
            g.entity = e;
            g.kind = perm ? GroupKind::perm6 : GroupKind::phase3;
            g.weight = peak[static_cast<size_t>(ent.user)];
            int slots = perm ? 6 : 3;
            std::string stem = "d_" + usr.id;
            if (ent.channel >= 0)
                stem += "c" + std::to_string(ent.channel + 1);
            for (int s = 0; s < slots; ++s) {
                std::string name = stem + (perm ? "_s" : "_p") + std::to_string(s + 1);
                int id = pb.vars.get_or_add(ld3f::VarRole::delta, e, s, -1, name, 0.0, 1.0);
                pb.vars.mark_binary(id);
                g.vars.push_back(id);
                pb.binaries.push_back(id);
            }
            ld3f::Row sos;
            sos.sense = ld3f::RowSense::eq;
            sos.rhs = 1.0;
            for (int id : g.vars)
                sos.terms.emplace_back(id, 1.0);
            push_row(std::move(sos), RowFamily::sos1);
            pb.groups.push_back(std::move(g));
        }
        if (opt.model == Model::b) {
            for (size_t u = 0; u < model.users.size(); ++u) {
                if (model.users[u].arity != net::UserArity::three_phase)
                    continue;
                for (int phase = 0; phase < 3; ++phase) {
                    ld3f::Row row;
                    row.sense = ld3f::RowSense::eq;
                    row.rhs = 1.0;
                    for (int k = 0; k < 3; ++k) {
                        int e = entity_of_channel[u][static_cast<size_t>(k)];
                        row.terms.emplace_back(pb.vars.find(ld3f::VarRole::delta, e, phase, -1), 1.0);
                    }
                    push_row(std::move(row), RowFamily::cover);
                }
            }
        }
        if (opt.count_lo || opt.count_hi) {
            for (int phase = 0; phase < 3; ++phase) {
                std::vector<std::pair<int, double>> terms;
                for (size_t u = 0; u < model.users.size(); ++u) {
                    if (model.users[u].arity != net::UserArity::single_phase)
                        continue;
                    int e = entity_of_channel[u][0];
                    terms.emplace_back(pb.vars.find(ld3f::VarRole::delta, e, phase, -1), 1.0);
                }
                if (terms.empty())
                    continue;
                if (opt.count_lo) {
                    ld3f::Row row;
                    row.terms = terms;
                    row.sense = ld3f::RowSense::ge;
                    row.rhs = (*opt.count_lo)[static_cast<size_t>(phase)];
                    push_row(std::move(row), RowFamily::tighten);
                }
                if (opt.count_hi) {
                    ld3f::Row row;
                    row.terms = terms;
                    row.sense = ld3f::RowSense::le;
                    row.rhs = (*opt.count_hi)[static_cast<size_t>(phase)];
                    push_row(std::move(row), RowFamily::tighten);
                }
            }
        }
    }

    void make_network(int t) {
        ld3f::Taps taps;
        for (int e = 0; e < static_cast<int>(entities.size()); ++e)
            taps.emplace_back(e, entities[static_cast<size_t>(e)].bus);
        ld3f::LinearBlock balance = ld3f::power_balance_block(model, t, pb.vars, taps);
        for (ld3f::Row& row : balance.rows)
            push_row(std::move(row), RowFamily::balance);
        ld3f::LinearBlock ohm = ld3f::ohm_block(model, t, pb.vars);
        for (ld3f::Row& row : ohm.rows)
            push_row(std::move(row), RowFamily::ohm);

        for (int bus = 0; bus < static_cast<int>(model.buses.size()); ++bus)
            for (int phase = 0; phase < 3; ++phase) {
                int id = pb.vars.find(ld3f::VarRole::omega, bus, phase, t);
                if (id < 0)
                    continue;
                if (bus == model.slack)
                    pb.vars.set_bounds(id, 1.0, 1.0); // the reference node
                else
                    pb.vars.set_bounds(id, 0.0, wmax);
            }
        for (int e = 0; e < static_cast<int>(entities.size()); ++e) {
            const Entity& ent = entities[static_cast<size_t>(e)];
            for (int phase = 0; phase < 3; ++phase) {
                auto sp = static_cast<size_t>(phase);
                int xp = pb.vars.find(ld3f::VarRole::inj_p, e, phase, t);
                int xq = pb.vars.find(ld3f::VarRole::inj_q, e, phase, t);
                if (ent.zero_forced) {
                    // zero must stay feasible for the phases not selected
                    pb.vars.set_bounds(xp, std::min(0.0, ent.p_lo[sp]), std::max(0.0, ent.p_hi[sp]));
                    pb.vars.set_bounds(xq, std::min(0.0, ent.q_lo[sp]), std::max(0.0, ent.q_hi[sp]));
                } else {
                    pb.vars.set_bounds(xp, ent.p_lo[sp], ent.p_hi[sp]);
                    pb.vars.set_bounds(xq, ent.q_lo[sp], ent.q_hi[sp]);
                }
            }
        }
    }

    void make_zero_forcing(int t) {
        for (int e = 0; e < static_cast<int>(entities.size()); ++e) {
            const Entity& ent = entities[static_cast<size_t>(e)];
            if (!ent.zero_forced)
                continue;
            for (int phase = 0; phase < 3; ++phase) {
                auto sp = static_cast<size_t>(phase);
                int delta = pb.vars.find(ld3f::VarRole::delta, e, phase, -1);
                for (int kind = 0; kind < 2; ++kind) {
                    int x = pb.vars.find(kind == 0 ? ld3f::VarRole::inj_p : ld3f::VarRole::inj_q, e,
                                         phase, t);
                    double hi = kind == 0 ? ent.p_hi[sp] : ent.q_hi[sp];
                    double lo = kind == 0 ? ent.p_lo[sp] : ent.q_lo[sp];
                    ld3f::Row up;
                    up.window = t;
                    up.sense = ld3f::RowSense::le;
                    up.rhs = 0.0;
                    up.terms = {{x, 1.0}, {delta, -hi}};
                    push_row(std::move(up), RowFamily::zero_force);
                    ld3f::Row dn;
                    dn.window = t;
                    dn.sense = ld3f::RowSense::ge;
                    dn.rhs = 0.0;
                    dn.terms = {{x, 1.0}, {delta, -lo}};
                    push_row(std::move(dn), RowFamily::zero_force);
                }
            }
        }
    }

    /// rho >= +/-(estimate - z)/sigma as two ge-rows; `estimate` is either
    /// the aux variable of a user channel or a direct network expression.
    void make_wlav(int m, int t, const std::vector<std::pair<int, double>>& estimate) {
        const Channel& c = ms.channels[static_cast<size_t>(m)];
        double z = c.values[static_cast<size_t>(t)];
        double inv = 1.0 / c.sigma;
        int rho = pb.vars.get_or_add(ld3f::VarRole::residual, m, 0, t,
                                     "r_m" + std::to_string(m) + "_t" + std::to_string(t), 0.0, kInf);
        pb.vars.set_cost(rho, 1.0);

        ld3f::Row pos;
        pos.window = t;
        pos.sense = ld3f::RowSense::ge;
        pos.rhs = z * inv;
        pos.terms.emplace_back(rho, 1.0);
        for (auto [id, coeff] : estimate)
            pos.terms.emplace_back(id, coeff * inv);
        int row_pos = static_cast<int>(pb.rows.size());
        push_row(std::move(pos), RowFamily::wlav);

        ld3f::Row neg;
        neg.window = t;
        neg.sense = ld3f::RowSense::ge;
        neg.rhs = -z * inv;
        neg.terms.emplace_back(rho, 1.0);
        for (auto [id, coeff] : estimate)
            neg.terms.emplace_back(id, -coeff * inv);
        int row_neg = static_cast<int>(pb.rows.size());
        push_row(std::move(neg), RowFamily::wlav);

        pb.wlav.push_back({m, t, rho, row_pos, row_neg});
    }

    /// y tied to `target` whenever the group binary of `slot` is one, slack
    /// elsewhere. The big-M pair is derived from the variable bounds so the
    /// relaxation stays valid for any configuration.
    void couple(int y, int target, int delta, double target_lo_off, double target_hi_off, int t,
                RowFamily family) {
        const ld3f::VarInfo& yi = pb.vars.info(y);
        double m_up = yi.hi - target_lo_off;
        double m_dn = target_hi_off - yi.lo;
        ld3f::Row up;
        up.window = t;
        up.sense = ld3f::RowSense::le;
        up.rhs = m_up;
        up.terms = {{y, 1.0}, {target, -1.0}, {delta, m_up}};
        push_row(std::move(up), family);
        ld3f::Row dn;
        dn.window = t;
        dn.sense = ld3f::RowSense::ge;
        dn.rhs = -m_dn;
        dn.terms = {{y, 1.0}, {target, -1.0}, {delta, -m_dn}};
        push_row(std::move(dn), family);
    }

    void make_user_channel(int m, int t) {
        const Channel& c = ms.channels[static_cast<size_t>(m)];
        int u = model.user_index(c.owner);
        const net::User& usr = model.users[static_cast<size_t>(u)];
        int arity = usr.arity == net::UserArity::three_phase ? 3 : 1;
        if (c.index < 0 || c.index >= arity)
            throw ValidationError("channel of '" + c.owner + "' exceeds the user's meter arity");
        int e = entity_of_channel[static_cast<size_t>(u)][static_cast<size_t>(c.index)];
        const Entity& ent = entities[static_cast<size_t>(e)];
        const DeltaGroup& g = pb.groups[static_cast<size_t>(e)];

        double y_lo, y_hi;
        if (c.quantity == Quantity::w) {
            y_lo = 0.0;
            y_hi = wmax;
        } else {
            const auto& lo = c.quantity == Quantity::p ? ent.p_lo : ent.q_lo;
            const auto& hi = c.quantity == Quantity::p ? ent.p_hi : ent.q_hi;
            y_lo = std::min({lo[0], lo[1], lo[2], 0.0});
            y_hi = std::max({hi[0], hi[1], hi[2], 0.0});
        }
        int y = pb.vars.get_or_add(ld3f::VarRole::aux_y, m, 0, t,
                                   "y_m" + std::to_string(m) + "_t" + std::to_string(t), y_lo, y_hi);

        if (g.kind == GroupKind::phase3) {
            for (int phase = 0; phase < 3; ++phase) {
                auto sp = static_cast<size_t>(phase);
                int delta = g.vars[sp];
                if (c.quantity == Quantity::w) {
                    int w = pb.vars.find(ld3f::VarRole::omega, ent.bus, phase, t);
                    couple(y, w, delta, 0.0, wmax, t, RowFamily::node_coupling);
                } else {
                    bool p = c.quantity == Quantity::p;
                    int x = pb.vars.find(p ? ld3f::VarRole::inj_p : ld3f::VarRole::inj_q, e, phase, t);
                    // zero-forcing pins the off-phase injection at zero
                    couple(y, x, delta, 0.0, 0.0, t, RowFamily::edge_coupling);
                }
            }
        } else {
            for (int s = 0; s < 6; ++s) {
                int phase = kPermTable[static_cast<size_t>(s)][static_cast<size_t>(c.index)];
                auto sp = static_cast<size_t>(phase);
                int delta = g.vars[static_cast<size_t>(s)];
                if (c.quantity == Quantity::w) {
                    int w = pb.vars.find(ld3f::VarRole::omega, ent.bus, phase, t);
                    couple(y, w, delta, 0.0, wmax, t, RowFamily::node_coupling);
                } else {
                    bool p = c.quantity == Quantity::p;
                    int x = pb.vars.find(p ? ld3f::VarRole::inj_p : ld3f::VarRole::inj_q, e, phase, t);
                    double lo = p ? ent.p_lo[sp] : ent.q_lo[sp];
                    double hi = p ? ent.p_hi[sp] : ent.q_hi[sp];
                    couple(y, x, delta, lo, hi, t, RowFamily::edge_coupling);
                }
            }
        }
        make_wlav(m, t, {{y, 1.0}});
    }

    void make_transformer_channel(int m, int t) {
        const Channel& c = ms.channels[static_cast<size_t>(m)];
        if (c.index < 0 || c.index > 2)
            throw ValidationError("transformer channel index out of range");
        std::vector<std::pair<int, double>> estimate;
        if (c.quantity == Quantity::w) {
            int head = sim::transformer_bus(model);
            estimate.emplace_back(pb.vars.find(ld3f::VarRole::omega, head, c.index, t), 1.0);
        } else {
            ld3f::VarRole role = c.quantity == Quantity::p ? ld3f::VarRole::flow_p : ld3f::VarRole::flow_q;
            for (auto [br, child] : model.children[static_cast<size_t>(model.slack)])
                estimate.emplace_back(pb.vars.find(role, br, c.index, t),
                                      model.branch_sign[static_cast<size_t>(br)]);
        }
        make_wlav(m, t, estimate);
    }

    PiProblem run() {
        validate_measurements(model, ms);
        pb.windows = ms.windows;
        pb.users = static_cast<int>(model.users.size());
        make_entities();
        make_groups();
        for (int t = 0; t < pb.windows; ++t) {
            make_network(t);
            make_zero_forcing(t);
            for (int m = 0; m < static_cast<int>(ms.channels.size()); ++m) {
                if (ms.channels[static_cast<size_t>(m)].owner == kTransformerOwner)
                    make_transformer_channel(m, t);
                else
                    make_user_channel(m, t);
            }
        }
        return std::move(pb);
    }
};

} // namespace

PiProblem build_problem(const net::FeederModel& model, const MeasurementSet& ms,
                        const BuildOptions& options) {
    Builder b(model, ms, options);
    return b.run();
}

Assignment decode_assignment(const net::FeederModel& model, const PiProblem& problem,
                             const std::vector<double>& values, double tol) {
    Assignment a;
    a.phase.assign(model.users.size(), -1);
    a.sequence.assign(model.users.size(), -1);
    std::vector<std::array<int, 3>> channel_phase(model.users.size(), {-1, -1, -1});

    for (const DeltaGroup& g : problem.groups) {
        int best = 0;
        double best_v = -1.0;
        double sum = 0.0;
        for (int s = 0; s < static_cast<int>(g.vars.size()); ++s) {
            double v = values[static_cast<size_t>(g.vars[static_cast<size_t>(s)])];
            sum += v;
            if (v > best_v) {
                best_v = v;
                best = s;
            }
            if (v > tol && v < 1.0 - tol)
                a.integral = false;
        }
        if (std::abs(sum - 1.0) > tol * static_cast<double>(g.vars.size()))
            a.integral = false;
        auto u = static_cast<size_t>(g.user);
        if (g.kind == GroupKind::perm6)
            a.sequence[u] = best;
        else if (g.channel < 0)
            a.phase[u] = best;
        else
            channel_phase[u][static_cast<size_t>(g.channel)] = best;
    }
    for (size_t u = 0; u < model.users.size(); ++u) {
        if (channel_phase[u][0] < 0)
            continue;
        int seq = perm_index(channel_phase[u][0], channel_phase[u][1], channel_phase[u][2]);
        if (seq < 0)
            a.consistent = false;
        a.sequence[u] = seq;
    }
    return a;
}

int count_correct(const net::FeederModel& model, const Assignment& a) {
    int hits = 0;
    for (size_t u = 0; u < model.users.size(); ++u) {
        const net::User& usr = model.users[u];
        if (usr.arity == net::UserArity::single_phase) {
            if (!usr.true_phase)
                throw ValidationError("user '" + usr.id + "' has no ground truth to score against");
            hits += a.phase[u] == *usr.true_phase ? 1 : 0;
        } else {
            if (!usr.true_sequence)
                throw ValidationError("user '" + usr.id + "' has no ground truth to score against");
            hits += a.sequence[u] == *usr.true_sequence ? 1 : 0;
        }
    }
    return hits;
}

} // namespace phaseid::milp
