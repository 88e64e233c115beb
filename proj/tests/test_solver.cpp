#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <sstream>

#include "phaseid/pf_sim.hpp"
#include "phaseid/solver.hpp"

using namespace phaseid;
using namespace phaseid::solver;
using phaseid::milp::BuildOptions;
using phaseid::milp::Model;
using phaseid::milp::PiProblem;
using phaseid::net::FeederModel;
using phaseid::sim::LoadProfiles;

namespace {

std::string fixture(const std::string& name) {
    return std::string(PHASEID_FIXTURES) + "/" + name;
}

LoadProfiles varied_profiles(const FeederModel& m, int steps) {
    LoadProfiles prof;
    prof.steps = steps;
    prof.series.resize(m.users.size());
    for (size_t u = 0; u < m.users.size(); ++u) {
        int nc = m.users[u].arity == net::UserArity::three_phase ? 3 : 1;
        for (int c = 0; c < nc; ++c) {
            auto& dst = prof.series[u][static_cast<size_t>(c)];
            dst.resize(static_cast<size_t>(steps));
            for (int k = 0; k < steps; ++k) {
                double p = 0.05 + 0.013 * static_cast<double>(u) + 0.005 * c +
                           0.02 * std::sin(0.9 * k + 1.3 * static_cast<double>(u));
                dst[static_cast<size_t>(k)] = std::complex<double>{p, 0.35 * p};
            }
        }
    }
    return prof;
}

MeasurementSet make_set(const FeederModel& m, int steps, double sm, uint64_t seed,
                        sim::PfSource source) {
    sim::SynthesisOptions opt;
    opt.sm_max_error = sm;
    opt.avg_window = 3;
    opt.seed = seed;
    opt.source = source;
    return sim::synthesize_measurements(m, varied_profiles(m, steps), opt);
}

milp::Assignment truth_of(const FeederModel& m) {
    milp::Assignment a;
    a.phase.assign(m.users.size(), -1);
    a.sequence.assign(m.users.size(), -1);
    for (size_t u = 0; u < m.users.size(); ++u) {
        if (m.users[u].arity == net::UserArity::single_phase)
            a.phase[u] = *m.users[u].true_phase;
        else
            a.sequence[u] = *m.users[u].true_sequence;
    }
    return a;
}

bool same_assignment(const milp::Assignment& a, const milp::Assignment& b) {
    return a.phase == b.phase && a.sequence == b.sequence;
}

const char* kOneUserC = R"({
  "base_kv": 0.23,
  "base_kva": 10.0,
  "radial": true,
  "buses": [
    { "id": "slack", "kind": "slack" },
    { "id": "b1", "kind": "user_attach" }
  ],
  "branches": [
    { "id": "line1", "from": "slack", "to": "b1",
      "r_ohm": [0.048, 0.012, 0.011, 0.012, 0.050, 0.013, 0.011, 0.013, 0.047],
      "x_ohm": [0.014, 0.007, 0.006, 0.007, 0.015, 0.008, 0.006, 0.008, 0.014] }
  ],
  "users": [
    { "id": "t1", "bus": "b1", "arity": "three_phase", "true_sequence": 4 }
  ]
})";

} // namespace

TEST_CASE("the true assignment fits clean linear data exactly") {
    for (const char* name : {"two_bus.json", "eight_bus.json"}) {
        FeederModel m = net::load_feeder(fixture(name));
        MeasurementSet ms = make_set(m, 6, 0.0, 1, sim::PfSource::linear);
        PiProblem pb = milp::build_problem(m, ms);
        SolveResult fixed = solve_fixed(pb, truth_of(m));
        CAPTURE(name);
        REQUIRE(fixed.status == SolveStatus::optimal);
        CHECK(fixed.objective <= 1e-9);
        CHECK(fixed.cs_residual <= 1e-8);
        CHECK(fixed.values.size() == static_cast<size_t>(pb.vars.size()));

        SolveResult relax = solve_lp(pb);
        REQUIRE(relax.status == SolveStatus::optimal);
        CHECK(relax.objective <= fixed.objective + 1e-9);
        CHECK(relax.cs_residual <= 1e-8);
    }
}

TEST_CASE("conflicting readings of one quantity cost the scaled spread") {
    const double inf = std::numeric_limits<double>::infinity();
    PiProblem pb;
    pb.windows = 1;
    int y = pb.vars.get_or_add(ld3f::VarRole::aux_y, 0, 0, 0, "y_m0_t0", -inf, inf);
    double sigma = 0.5, z1 = 1.0, z2 = 3.0;
    for (int i = 0; i < 2; ++i) {
        double z = i == 0 ? z1 : z2;
        int rho = pb.vars.get_or_add(ld3f::VarRole::residual, i, 0, 0,
                                     "r_m" + std::to_string(i) + "_t0", 0.0, inf);
        pb.vars.set_cost(rho, 1.0);
        ld3f::Row pos;
        pos.sense = ld3f::RowSense::ge;
        pos.rhs = z / sigma;
        pos.window = 0;
        pos.terms = {{rho, 1.0}, {y, 1.0 / sigma}};
        pb.rows.push_back(pos);
        pb.families.push_back(milp::RowFamily::wlav);
        ld3f::Row neg;
        neg.sense = ld3f::RowSense::ge;
        neg.rhs = -z / sigma;
        neg.window = 0;
        neg.terms = {{rho, 1.0}, {y, -1.0 / sigma}};
        pb.rows.push_back(neg);
        pb.families.push_back(milp::RowFamily::wlav);
    }
    SolveResult r = solve_lp(pb);
    REQUIRE(r.status == SolveStatus::optimal);
    CHECK(r.objective == doctest::Approx(std::abs(z1 - z2) / sigma).epsilon(1e-10));
    CHECK(r.cs_residual <= 1e-8);
}

TEST_CASE("enumeration counts follow the assignment census") {
    FeederModel m8 = net::load_feeder(fixture("eight_bus.json"));
    MeasurementSet ms8 = make_set(m8, 6, 0.0, 1, sim::PfSource::linear);
    PiProblem pb8 = milp::build_problem(m8, ms8);
    SolveResult r8 = brute_force(pb8);
    REQUIRE(r8.status == SolveStatus::optimal);
    CHECK(r8.assignments_evaluated == 81); // 3^4 single-phase users
    CHECK(r8.objective <= 1e-9);
    milp::Assignment dec = milp::decode_assignment(m8, pb8, r8.values);
    CHECK(milp::count_correct(m8, dec) == 4);
    CHECK(r8.second_best_gap > 1e-6);
    CHECK_THROWS_AS(brute_force(pb8, 80), ValidationError);

    FeederModel m1 = net::parse_feeder(kOneUserC);
    MeasurementSet ms1 = make_set(m1, 6, 0.0, 1, sim::PfSource::linear);
    BuildOptions optc;
    optc.model = Model::c;
    PiProblem pb1 = milp::build_problem(m1, ms1, optc);
    SolveResult r1 = brute_force(pb1);
    REQUIRE(r1.status == SolveStatus::optimal);
    CHECK(r1.assignments_evaluated == 6); // one three-phase user
    CHECK(r1.objective <= 1e-9);
    milp::Assignment dec1 = milp::decode_assignment(m1, pb1, r1.values);
    CHECK(dec1.sequence[0] == 3); // feeder files number sequences from one
}

TEST_CASE("branch and bound agrees with enumeration under noise") {
    struct Case {
        const char* file;
        Model model;
        long census;
    };
    for (const Case& c : {Case{"eight_bus.json", Model::b, 81},
                          Case{"threep2.json", Model::a, 729},
                          Case{"mixed4.json", Model::b, 324},
                          Case{"mixed4.json", Model::c, 324}}) {
        for (uint64_t seed : {1ULL, 2ULL}) {
            FeederModel m = net::load_feeder(fixture(c.file));
            MeasurementSet ms = make_set(m, 9, 0.01, seed, sim::PfSource::exact);
            BuildOptions opt;
            opt.model = c.model;
            PiProblem pb = milp::build_problem(m, ms, opt);
            SolveResult exact = brute_force(pb);
            SolveResult bnb = solve_bnb(pb);
            CAPTURE(c.file);
            CAPTURE(static_cast<int>(c.model));
            CAPTURE(seed);
            REQUIRE(exact.status == SolveStatus::optimal);
            REQUIRE(bnb.status == SolveStatus::optimal);
            CHECK(exact.assignments_evaluated == c.census);
            CHECK(bnb.gap <= 1e-4);
            CHECK(std::abs(bnb.objective - exact.objective) <=
                  1e-6 * (1.0 + std::abs(exact.objective)));
            if (exact.second_best_gap > 1e-6) {
                milp::Assignment de = milp::decode_assignment(m, pb, exact.values);
                milp::Assignment db = milp::decode_assignment(m, pb, bnb.values);
                CHECK(same_assignment(de, db));
            }
        }
    }
}

TEST_CASE("a warm start cannot worsen the result") {
    FeederModel m = net::load_feeder(fixture("eight_bus.json"));
    MeasurementSet ms = make_set(m, 9, 0.01, 3, sim::PfSource::exact);
    PiProblem pb = milp::build_problem(m, ms);
    SolveResult plain = solve_bnb(pb);
    SolveOptions opt;
    opt.mip_start = truth_of(m);
    SolveResult warm = solve_bnb(pb, opt);
    REQUIRE(plain.status == SolveStatus::optimal);
    REQUIRE(warm.status == SolveStatus::optimal);
    CHECK(warm.nodes >= 1);
    CHECK(std::abs(warm.objective - plain.objective) <= 1e-9 * (1.0 + std::abs(plain.objective)));
}

TEST_CASE("repeat solves are identical") {
    FeederModel m = net::load_feeder(fixture("mixed4.json"));
    MeasurementSet ms = make_set(m, 9, 0.01, 5, sim::PfSource::exact);
    BuildOptions opt;
    opt.model = Model::c;
    PiProblem pb = milp::build_problem(m, ms, opt);
    SolveResult a = solve_bnb(pb);
    SolveResult b = solve_bnb(pb);
    REQUIRE(a.status == b.status);
    CHECK(a.objective == b.objective);
    CHECK(a.nodes == b.nodes);
    CHECK(a.lp_iterations == b.lp_iterations);
    CHECK(a.assignments_evaluated == b.assignments_evaluated);
    REQUIRE(a.values.size() == b.values.size());
    for (size_t j = 0; j < a.values.size(); ++j)
        CHECK(a.values[j] == b.values[j]);
}

TEST_CASE("search trace has monotone bounds and non-increasing incumbents") {
    FeederModel m = net::load_feeder(fixture("eight_bus.json"));
    MeasurementSet ms = make_set(m, 9, 0.01, 7, sim::PfSource::exact);
    PiProblem pb = milp::build_problem(m, ms);
    std::vector<NodeTrace> trace;
    std::ostringstream log;
    SolveOptions opt;
    opt.trace = &trace;
    opt.log = &log;
    SolveResult r = solve_bnb(pb, opt);
    REQUIRE(r.status == SolveStatus::optimal);
    REQUIRE(!trace.empty());

    std::map<long, double> branched;
    for (const NodeTrace& t : trace)
        if (t.event == 'b')
            branched[t.id] = t.bound;
    int checked = 0;
    double last_incumbent = std::numeric_limits<double>::infinity();
    for (const NodeTrace& t : trace) {
        if (t.event == 'u') {
            CHECK(t.bound <= last_incumbent);
            last_incumbent = t.bound;
            continue;
        }
        if (t.parent >= 0 && branched.count(t.parent) &&
            (t.event == 'b' || t.event == 'i' || t.event == 'p' || t.event == 'x')) {
            CHECK(t.bound >= branched[t.parent] - 1e-9);
            ++checked;
        }
    }
    CHECK(checked > 0);
    CHECK(log.str().find("obj=") != std::string::npos);
}

TEST_CASE("bound tightening shrinks boxes without moving the optimum") {
    FeederModel m = net::load_feeder(fixture("eight_bus.json"));
    MeasurementSet ms = make_set(m, 6, 0.0, 1, sim::PfSource::linear);
    PiProblem pb = milp::build_problem(m, ms);
    PiProblem tight = pb;
    PresolveStats stats = tighten_bounds(tight);
    CHECK(stats.rows == static_cast<int>(pb.rows.size()));
    CHECK(stats.cols == pb.vars.size());
    CHECK(stats.nonzeros > 0);
    CHECK(stats.bounds_tightened > 0);
    for (int j = 0; j < pb.vars.size(); ++j) {
        CHECK(tight.vars.info(j).lo >= pb.vars.info(j).lo - 1e-12);
        CHECK(tight.vars.info(j).hi <= pb.vars.info(j).hi + 1e-12);
    }
    // the truth stays feasible and exact after tightening
    SolveResult fixed = solve_fixed(tight, truth_of(m));
    REQUIRE(fixed.status == SolveStatus::optimal);
    CHECK(fixed.objective <= 1e-9);
    // solving with and without the presolve step lands on the same optimum
    MeasurementSet noisy = make_set(m, 9, 0.01, 11, sim::PfSource::exact);
    PiProblem pbn = milp::build_problem(m, noisy);
    SolveOptions raw;
    raw.presolve = false;
    SolveResult with = solve_bnb(pbn);
    SolveResult without = solve_bnb(pbn, raw);
    REQUIRE(with.status == SolveStatus::optimal);
    REQUIRE(without.status == SolveStatus::optimal);
    CHECK(std::abs(with.objective - without.objective) <=
          1e-9 * (1.0 + std::abs(without.objective)));
}

TEST_CASE("count rows bind exactly when they exclude the truth") {
    FeederModel m = net::load_feeder(fixture("eight_bus.json"));
    MeasurementSet ms = make_set(m, 6, 0.0, 1, sim::PfSource::linear);
    // truth phases are 0,1,2,1: one on a, two on b, one on c
    BuildOptions wide;
    wide.count_lo = {{0, 0, 0}};
    wide.count_hi = {{4, 4, 4}};
    PiProblem free_pb = milp::build_problem(m, ms);
    PiProblem wide_pb = milp::build_problem(m, ms, wide);
    SolveResult base = solve_bnb(free_pb);
    SolveResult roomy = solve_bnb(wide_pb);
    REQUIRE(base.status == SolveStatus::optimal);
    REQUIRE(roomy.status == SolveStatus::optimal);
    CHECK(std::abs(base.objective - roomy.objective) <= 1e-9 * (1.0 + std::abs(base.objective)));

    BuildOptions narrow;
    narrow.count_hi = {{4, 1, 4}}; // phase b may host at most one user
    PiProblem narrow_pb = milp::build_problem(m, ms, narrow);
    SolveResult fixed = solve_fixed(narrow_pb, truth_of(m));
    CHECK(fixed.status == SolveStatus::infeasible);
    SolveResult best = solve_bnb(narrow_pb);
    REQUIRE(best.status == SolveStatus::optimal);
    milp::Assignment dec = milp::decode_assignment(m, narrow_pb, best.values);
    CHECK(milp::count_correct(m, dec) < 4);
}

TEST_CASE("the cutoff returns the best known incumbent") {
    FeederModel m = net::load_feeder(fixture("eight_bus.json"));
    MeasurementSet ms = make_set(m, 9, 0.01, 13, sim::PfSource::exact);
    PiProblem pb = milp::build_problem(m, ms);
    SolveOptions opt;
    opt.cutoff_seconds = 0.0;
    SolveResult bare = solve_bnb(pb, opt);
    CHECK(bare.status == SolveStatus::cutoff_best);
    CHECK(bare.values.empty());

    opt.mip_start = truth_of(m);
    SolveResult seeded = solve_bnb(pb, opt);
    CHECK(seeded.status == SolveStatus::cutoff_best);
    CHECK(!seeded.values.empty());
    SolveResult fixed = solve_fixed(pb, truth_of(m));
    CHECK(seeded.objective == doctest::Approx(fixed.objective).epsilon(1e-9));
}
