#include "phaseid/pf_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "phaseid/ld3f.hpp"

namespace phaseid::sim {
namespace {

constexpr int kMaxSweeps = 200;
constexpr double kSweepTol = 1e-13;
constexpr double kMismatchTol = 1e-10;

Cvec3 reference_voltage() {
    const double r3h = std::sqrt(3.0) / 2.0;
    return {cd{1.0, 0.0}, cd{-0.5, -r3h}, cd{-0.5, r3h}};
}

int user_channels(const net::User& u) {
    return u.arity == net::UserArity::three_phase ? 3 : 1;
}

} // namespace

int LoadProfiles::channel_count(const net::FeederModel& m, int user) const {
    return user_channels(m.users[static_cast<size_t>(user)]);
}

int transformer_bus(const net::FeederModel& model) {
    const auto& kids = model.children[static_cast<size_t>(model.slack)];
    return kids.size() == 1 ? kids[0].second : model.slack;
}

PfSlice solve_powerflow(const net::FeederModel& model, const std::vector<Cvec3>& bus_load) {
    if (!model.radial)
        throw ValidationError("exact power flow requires a radial model");
    if (bus_load.size() != model.buses.size())
        throw ValidationError("bus load vector does not match the bus count");

    const size_t n = model.buses.size();
    const size_t e = model.branches.size();
    std::vector<std::array<cd, 9>> z(e);
    for (size_t b = 0; b < e; ++b)
        for (int i = 0; i < 9; ++i)
            z[b][static_cast<size_t>(i)] = cd{model.branches[b].r_pu[static_cast<size_t>(i)],
                                              model.branches[b].x_pu[static_cast<size_t>(i)]};

    PfSlice out;
    out.v.assign(n, reference_voltage());
    std::vector<Cvec3> current(n), subtree(n);
    auto load_current = [&](size_t bus, const Cvec3& v) {
        Cvec3 i{};
        for (int p = 0; p < 3; ++p) {
            auto sp = static_cast<size_t>(p);
            if (bus_load[bus][sp] == cd{0.0, 0.0})
                continue;
            if (std::abs(v[sp]) < 0.2)
                throw SolverError("power flow collapse: voltage below 0.2 pu");
            i[sp] = std::conj(bus_load[bus][sp] / v[sp]);
        }
        return i;
    };

    double mismatch = std::numeric_limits<double>::infinity();
    int iter = 0;
    while (iter < kMaxSweeps) {
        ++iter;
        for (size_t bus = 0; bus < n; ++bus)
            current[bus] = load_current(bus, out.v[bus]);
        // backward: aggregate subtree currents toward the slack
        for (auto it = model.bfs_order.rbegin(); it != model.bfs_order.rend(); ++it) {
            auto bus = static_cast<size_t>(*it);
            subtree[bus] = current[bus];
            for (auto [br, child] : model.children[bus])
                for (int p = 0; p < 3; ++p)
                    subtree[bus][static_cast<size_t>(p)] +=
                        subtree[static_cast<size_t>(child)][static_cast<size_t>(p)];
        }
        // forward: push voltage drops from the slack outward
        double max_dv = 0.0;
        for (int bus_i : model.bfs_order) {
            if (bus_i == model.slack)
                continue;
            auto bus = static_cast<size_t>(bus_i);
            auto parent = static_cast<size_t>(model.parent_bus[bus]);
            auto br = static_cast<size_t>(model.parent_branch[bus]);
            Cvec3 vnew;
            for (int p = 0; p < 3; ++p) {
                cd drop{0.0, 0.0};
                for (int o = 0; o < 3; ++o)
                    drop += z[br][static_cast<size_t>(p * 3 + o)] * subtree[bus][static_cast<size_t>(o)];
                vnew[static_cast<size_t>(p)] = out.v[parent][static_cast<size_t>(p)] - drop;
            }
            for (int p = 0; p < 3; ++p)
                max_dv = std::max(max_dv,
                                  std::abs(vnew[static_cast<size_t>(p)] - out.v[bus][static_cast<size_t>(p)]));
            out.v[bus] = vnew;
        }
        // mismatch: how stale were the injected currents
        mismatch = 0.0;
        for (size_t bus = 0; bus < n; ++bus) {
            Cvec3 fresh = load_current(bus, out.v[bus]);
            for (int p = 0; p < 3; ++p)
                mismatch = std::max(mismatch, std::abs(fresh[static_cast<size_t>(p)] -
                                                       current[bus][static_cast<size_t>(p)]));
        }
        if (max_dv < kSweepTol && mismatch <= kMismatchTol)
            break;
    }
    if (mismatch > kMismatchTol)
        throw SolverError("power flow did not converge within the sweep limit");
    out.iterations = iter;
    out.mismatch = mismatch;

    out.flow.assign(e, Cvec3{});
    for (int bus_i : model.bfs_order) {
        if (bus_i == model.slack)
            continue;
        auto bus = static_cast<size_t>(bus_i);
        auto br = static_cast<size_t>(model.parent_branch[bus]);
        double sign = model.branch_sign[br];
        auto from = static_cast<size_t>(model.branches[br].from);
        for (int p = 0; p < 3; ++p) {
            auto sp = static_cast<size_t>(p);
            cd j_f2t = sign * subtree[bus][sp];
            out.flow[br][sp] = out.v[from][sp] * std::conj(j_f2t);
        }
    }
    return out;
}

Ld3fSlice forward_ld3f(const net::FeederModel& model, const std::vector<Dvec3>& p_load,
                       const std::vector<Dvec3>& q_load) {
    if (!model.radial)
        throw ValidationError("forward linear solve requires a radial model");
    if (p_load.size() != model.buses.size() || q_load.size() != model.buses.size())
        throw ValidationError("bus load vectors do not match the bus count");

    const size_t n = model.buses.size();
    const size_t e = model.branches.size();
    Ld3fSlice out;
    out.omega.assign(n, Dvec3{1.0, 1.0, 1.0});
    out.fp.assign(e, Dvec3{});
    out.fq.assign(e, Dvec3{});

    std::vector<Dvec3> psub(n), qsub(n);
    for (auto it = model.bfs_order.rbegin(); it != model.bfs_order.rend(); ++it) {
        auto bus = static_cast<size_t>(*it);
        psub[bus] = p_load[bus];
        qsub[bus] = q_load[bus];
        for (auto [br, child] : model.children[bus])
            for (int p = 0; p < 3; ++p) {
                psub[bus][static_cast<size_t>(p)] += psub[static_cast<size_t>(child)][static_cast<size_t>(p)];
                qsub[bus][static_cast<size_t>(p)] += qsub[static_cast<size_t>(child)][static_cast<size_t>(p)];
            }
    }
    for (int bus_i : model.bfs_order) {
        if (bus_i == model.slack)
            continue;
        auto bus = static_cast<size_t>(bus_i);
        auto parent = static_cast<size_t>(model.parent_bus[bus]);
        auto br = static_cast<size_t>(model.parent_branch[bus]);
        net::Mat3 a, b;
        ld3f::ohm_coefficients(model.branches[br], a, b);
        for (int p = 0; p < 3; ++p) {
            double drop = 0.0;
            for (int o = 0; o < 3; ++o) {
                auto idx = static_cast<size_t>(p * 3 + o);
                drop += a[idx] * psub[bus][static_cast<size_t>(o)] +
                        b[idx] * qsub[bus][static_cast<size_t>(o)];
            }
            out.omega[bus][static_cast<size_t>(p)] = out.omega[parent][static_cast<size_t>(p)] - drop;
        }
        double sign = model.branch_sign[br];
        for (int p = 0; p < 3; ++p) {
            out.fp[br][static_cast<size_t>(p)] = sign * psub[bus][static_cast<size_t>(p)];
            out.fq[br][static_cast<size_t>(p)] = sign * qsub[bus][static_cast<size_t>(p)];
        }
    }
    return out;
}

std::vector<Cvec3> true_bus_loads(const net::FeederModel& model, const LoadProfiles& profiles,
                                  int step) {
    if (profiles.series.size() != model.users.size())
        throw ValidationError("profiles do not cover the model's users");
    if (step < 0 || step >= profiles.steps)
        throw ValidationError("profile step out of range");
    std::vector<Cvec3> loads(model.buses.size(), Cvec3{});
    for (size_t u = 0; u < model.users.size(); ++u) {
        const net::User& usr = model.users[u];
        if (usr.arity == net::UserArity::single_phase) {
            if (!usr.true_phase)
                throw ValidationError("user '" + usr.id + "' lacks ground truth for simulation");
            loads[static_cast<size_t>(usr.bus)][static_cast<size_t>(*usr.true_phase)] +=
                profiles.series[u][0][static_cast<size_t>(step)];
        } else {
            if (!usr.true_sequence)
                throw ValidationError("user '" + usr.id + "' lacks ground truth for simulation");
            const auto& perm = kPermTable[static_cast<size_t>(*usr.true_sequence)];
            for (int c = 0; c < 3; ++c)
                loads[static_cast<size_t>(usr.bus)][static_cast<size_t>(perm[static_cast<size_t>(c)])] +=
                    profiles.series[u][static_cast<size_t>(c)][static_cast<size_t>(step)];
        }
    }
    return loads;
}

namespace {

struct RawChannel {
    std::string owner;
    Quantity quantity;
    int index;
    bool indexed;
    std::vector<double> raw;  ///< per raw step, noiseless
    bool squared_domain = false; ///< linear-source voltage, kept in pu^2
};

} // namespace

MeasurementSet synthesize_measurements(const net::FeederModel& model, const LoadProfiles& profiles,
                                       const SynthesisOptions& options) {
    if (options.avg_window < 1)
        throw ValidationError("avg_window must be at least 1");
    if (options.sm_max_error < 0.0)
        throw ValidationError("sm_max_error must be non-negative");
    if (profiles.steps < options.avg_window)
        throw ValidationError("profile too short for one reporting window");
    if (profiles.steps % options.avg_window != 0)
        throw ValidationError("profile length must be a multiple of avg_window");
    const int windows = profiles.steps / options.avg_window;
    const bool linear = options.source == PfSource::linear;

    std::vector<RawChannel> chans;
    for (size_t u = 0; u < model.users.size(); ++u) {
        const net::User& usr = model.users[u];
        int nc = user_channels(usr);
        for (int c = 0; c < nc; ++c)
            for (Quantity q : {Quantity::w, Quantity::p, Quantity::q})
                chans.push_back({usr.id, q, c, nc == 3, {}, linear && q == Quantity::w});
    }
    if (options.transformer_channels) {
        for (int c = 0; c < 3; ++c)
            for (Quantity q : {Quantity::w, Quantity::p, Quantity::q})
                chans.push_back({kTransformerOwner, q, c, true, {}, linear && q == Quantity::w});
    }
    for (RawChannel& c : chans)
        c.raw.reserve(static_cast<size_t>(profiles.steps));

    const int head = transformer_bus(model);
    for (int k = 0; k < profiles.steps; ++k) {
        std::vector<Cvec3> loads = true_bus_loads(model, profiles, k);
        std::vector<Dvec3> w_bus(model.buses.size());
        Dvec3 supply_p{}, supply_q{};
        if (linear) {
            std::vector<Dvec3> pl(model.buses.size()), ql(model.buses.size());
            for (size_t b = 0; b < model.buses.size(); ++b)
                for (int p = 0; p < 3; ++p) {
                    pl[b][static_cast<size_t>(p)] = loads[b][static_cast<size_t>(p)].real();
                    ql[b][static_cast<size_t>(p)] = loads[b][static_cast<size_t>(p)].imag();
                }
            Ld3fSlice sol = forward_ld3f(model, pl, ql);
            w_bus = sol.omega; // squared domain
            for (auto [br, child] : model.children[static_cast<size_t>(model.slack)]) {
                double sign = model.branch_sign[static_cast<size_t>(br)];
                for (int p = 0; p < 3; ++p) {
                    supply_p[static_cast<size_t>(p)] += sign * sol.fp[static_cast<size_t>(br)][static_cast<size_t>(p)];
                    supply_q[static_cast<size_t>(p)] += sign * sol.fq[static_cast<size_t>(br)][static_cast<size_t>(p)];
                }
            }
        } else {
            PfSlice sol = solve_powerflow(model, loads);
            for (size_t b = 0; b < model.buses.size(); ++b)
                for (int p = 0; p < 3; ++p)
                    w_bus[b][static_cast<size_t>(p)] = std::abs(sol.v[b][static_cast<size_t>(p)]);
            for (auto [br, child] : model.children[static_cast<size_t>(model.slack)]) {
                double sign = model.branch_sign[static_cast<size_t>(br)];
                for (int p = 0; p < 3; ++p) {
                    cd s = sign * sol.flow[static_cast<size_t>(br)][static_cast<size_t>(p)];
                    supply_p[static_cast<size_t>(p)] += s.real();
                    supply_q[static_cast<size_t>(p)] += s.imag();
                }
            }
        }

        for (RawChannel& c : chans) {
            double value = 0.0;
            if (c.owner == kTransformerOwner) {
                if (c.quantity == Quantity::w)
                    value = w_bus[static_cast<size_t>(head)][static_cast<size_t>(c.index)];
                else if (c.quantity == Quantity::p)
                    value = supply_p[static_cast<size_t>(c.index)];
                else
                    value = supply_q[static_cast<size_t>(c.index)];
            } else {
                int ui = model.user_index(c.owner);
                const net::User& usr = model.users[static_cast<size_t>(ui)];
                int phase = usr.arity == net::UserArity::single_phase
                                ? *usr.true_phase
                                : kPermTable[static_cast<size_t>(*usr.true_sequence)][static_cast<size_t>(c.index)];
                if (c.quantity == Quantity::w)
                    value = w_bus[static_cast<size_t>(usr.bus)][static_cast<size_t>(phase)];
                else {
                    cd s = profiles.series[static_cast<size_t>(ui)][static_cast<size_t>(c.index)]
                                          [static_cast<size_t>(k)];
                    value = c.quantity == Quantity::p ? s.real() : s.imag();
                }
            }
            c.raw.push_back(value);
        }
    }

    // noise, then averaging; voltage magnitudes are squared after averaging
    const double rel_noise = options.sm_max_error / 3.0;
    const double rel_sigma = std::max(rel_noise, 1e-3);
    MeasurementSet ms;
    ms.windows = windows;
    for (size_t m = 0; m < chans.size(); ++m) {
        RawChannel& rc = chans[m];
        double nominal = 1.0;
        if (rc.quantity != Quantity::w) {
            double acc = 0.0;
            for (double v : rc.raw)
                acc += std::abs(v);
            nominal = std::max(acc / static_cast<double>(rc.raw.size()), 1e-2);
        }
        Channel ch;
        ch.owner = rc.owner;
        ch.quantity = rc.quantity;
        ch.index = rc.index;
        ch.indexed = rc.indexed;
        ch.sigma = rel_sigma * nominal;
        ch.values.resize(static_cast<size_t>(windows));
        for (int t = 0; t < windows; ++t) {
            double acc = 0.0;
            for (int j = 0; j < options.avg_window; ++j) {
                auto k = static_cast<size_t>(t * options.avg_window + j);
                double noisy = rc.raw[k] * (1.0 + rel_noise * rng::normal(options.seed, m, k));
                acc += noisy;
            }
            acc /= options.avg_window;
            bool magnitude_domain = rc.quantity == Quantity::w && !rc.squared_domain;
            ch.values[static_cast<size_t>(t)] = magnitude_domain ? acc * acc : acc;
        }
        ms.channels.push_back(std::move(ch));
    }
    return ms;
}

LoadProfiles load_profiles_csv(const net::FeederModel& model, const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open profiles file '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw ValidationError("profiles file '" + path + "' is empty");
    if (line != "user_id,timestep,p_kw,q_kvar")
        throw ValidationError("unexpected profiles header: " + line);

    const double to_pu = 1.0 / model.base_kva;
    std::map<std::pair<int, int>, std::map<int, cd>> rows; // (user, channel) -> step -> s
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string id, field;
        std::getline(ss, id, ',');
        int channel = 0;
        if (auto pos = id.find(':'); pos != std::string::npos) {
            channel = std::stoi(id.substr(pos + 1)) - 1;
            id = id.substr(0, pos);
            if (channel < 0 || channel > 2)
                throw ValidationError("profiles line " + std::to_string(line_no) +
                                      ": channel suffix must be 1..3");
        }
        int user = model.user_index(id);
        if (user < 0)
            throw ValidationError("profiles line " + std::to_string(line_no) + ": unknown user '" +
                                  id + "'");
        try {
            std::getline(ss, field, ',');
            int step = std::stoi(field) - 1;
            std::getline(ss, field, ',');
            double p = std::stod(field);
            std::getline(ss, field, ',');
            double q = std::stod(field);
            if (step < 0)
                throw ValidationError("timesteps are 1-based");
            rows[{user, channel}][step] = cd{p * to_pu, q * to_pu};
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception&) {
            throw ValidationError("profiles line " + std::to_string(line_no) +
                                  ": malformed numeric field");
        }
    }

    LoadProfiles out;
    out.series.resize(model.users.size());
    int steps = -1;
    for (size_t u = 0; u < model.users.size(); ++u) {
        int nc = user_channels(model.users[u]);
        for (int c = 0; c < nc; ++c) {
            auto it = rows.find({static_cast<int>(u), c});
            if (it == rows.end())
                throw ValidationError("user '" + model.users[u].id + "' has no profile for channel " +
                                      std::to_string(c + 1));
            const auto& per_step = it->second;
            int max_step = per_step.rbegin()->first;
            if (static_cast<int>(per_step.size()) != max_step + 1)
                throw ValidationError("user '" + model.users[u].id + "' profile has gaps");
            if (steps < 0)
                steps = max_step + 1;
            else if (steps != max_step + 1)
                throw ValidationError("profiles disagree on series length");
            auto& dst = out.series[u][static_cast<size_t>(c)];
            dst.resize(static_cast<size_t>(steps));
            for (auto [k, s] : per_step)
                dst[static_cast<size_t>(k)] = s;
        }
    }
    out.steps = std::max(steps, 0);
    return out;
}

void save_profiles_csv(const net::FeederModel& model, const LoadProfiles& profiles,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write profiles file '" + path + "'");
    out << "user_id,timestep,p_kw,q_kvar\n";
    char buf[64];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (size_t u = 0; u < model.users.size(); ++u) {
        int nc = user_channels(model.users[u]);
        for (int c = 0; c < nc; ++c) {
            std::string id = model.users[u].id;
            if (nc == 3)
                id += ":" + std::to_string(c + 1);
            const auto& series = profiles.series[u][static_cast<size_t>(c)];
            for (size_t k = 0; k < series.size(); ++k)
                out << id << ',' << k + 1 << ',' << fmt(series[k].real() * model.base_kva) << ','
                    << fmt(series[k].imag() * model.base_kva) << '\n';
        }
    }
    if (!out)
        throw IoError("failed while writing '" + path + "'");
}

} // namespace phaseid::sim
