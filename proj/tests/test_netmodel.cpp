#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "phaseid/netmodel.hpp"

using namespace phaseid;
using namespace phaseid::net;

namespace {

std::string fixture(const std::string& name) {
    return std::string(PHASEID_FIXTURES) + "/" + name;
}

const char* kTwoBusInline = R"({
  "base_kv": 0.23, "base_kva": 10.0,
  "buses": [{"id":"slack","kind":"slack"},{"id":"b1","kind":"user_attach"}],
  "branches": [{"id":"l1","from":"slack","to":"b1",
    "r_ohm":[0.05,0.01,0.01,0.01,0.05,0.01,0.01,0.01,0.05],
    "x_ohm":[0.015,0.005,0.005,0.005,0.015,0.005,0.005,0.005,0.015]}],
  "users": [{"id":"u1","bus":"b1","arity":"single_phase","true_phase":2}]
})";

} // namespace

TEST_CASE("minimal two-bus model parses and roots at the slack") {
    FeederModel m = parse_feeder(kTwoBusInline);
    CHECK(m.buses.size() == 2);
    CHECK(m.branches.size() == 1);
    CHECK(m.slack == 0);
    CHECK(m.parent_bus[1] == 0);
    CHECK(m.parent_branch[1] == 0);
    CHECK(m.branch_sign[0] == 1.0);
    CHECK(m.depth[1] == 1);
    CHECK(m.users[0].true_phase.value() == 1); // zero-based internally
    CHECK(m.users_by_bus[1].size() == 1);
}

TEST_CASE("impedances are converted to per-unit and back within 1e-12") {
    FeederModel m = parse_feeder(kTwoBusInline);
    const double z_base = m.z_base_ohm();
    CHECK(z_base == doctest::Approx(230.0 * 230.0 / 10000.0).epsilon(1e-15));
    CHECK(std::abs(m.branches[0].r_pu[0] * z_base - 0.05) / 0.05 < 1e-12);
    CHECK(std::abs(m.branches[0].x_pu[4] * z_base - 0.015) / 0.015 < 1e-12);
}

TEST_CASE("eight-bus fixture loads with seven branches") {
    FeederModel m = load_feeder(fixture("eight_bus.json"));
    CHECK(m.buses.size() == 8);
    CHECK(m.branches.size() == 7);
    CHECK(m.users.size() == 4);
    // ub3 hangs off j2: slack -> head -> j1 -> j2 -> ub3
    int ub3 = m.bus_index("ub3");
    CHECK(m.depth[static_cast<size_t>(ub3)] == 4);
    int j2 = m.bus_index("j2");
    CHECK(m.parent_bus[static_cast<size_t>(ub3)] == j2);
    // unique path to the slack: parent chain terminates in depth steps
    int cur = ub3, hops = 0;
    while (cur != m.slack) {
        cur = m.parent_bus[static_cast<size_t>(cur)];
        ++hops;
    }
    CHECK(hops == 4);
}

TEST_CASE("branch referencing an unknown bus is a topology error") {
    std::string bad = R"({"base_kv":0.23,"base_kva":10,
      "buses":[{"id":"slack","kind":"slack"}],
      "branches":[{"id":"l1","from":"slack","to":"ghost",
        "r_ohm":[1,0,0,0,1,0,0,0,1],"x_ohm":[0,0,0,0,0,0,0,0,0]}]})";
    CHECK_THROWS_AS(parse_feeder(bad), ValidationError);
}

TEST_CASE("duplicate identifiers are rejected") {
    std::string dup_bus = R"({"base_kv":0.23,"base_kva":10,
      "buses":[{"id":"a","kind":"slack"},{"id":"a","kind":"junction"}],
      "branches":[{"id":"l1","from":"a","to":"a",
        "r_ohm":[1,0,0,0,1,0,0,0,1],"x_ohm":[0,0,0,0,0,0,0,0,0]}]})";
    CHECK_THROWS_AS(parse_feeder(dup_bus), ValidationError);
}

TEST_CASE("disconnected bus is rejected") {
    std::string disc = R"({"base_kv":0.23,"base_kva":10,
      "buses":[{"id":"slack","kind":"slack"},{"id":"b1","kind":"junction"},
               {"id":"iso","kind":"junction"}],
      "branches":[{"id":"l1","from":"slack","to":"b1",
        "r_ohm":[1,0,0,0,1,0,0,0,1],"x_ohm":[0,0,0,0,0,0,0,0,0]}],
      "radial": false})";
    CHECK_THROWS_AS(parse_feeder(disc), ValidationError);
}

TEST_CASE("radial flag with a cycle is rejected") {
    std::string cyc = R"({"base_kv":0.23,"base_kva":10,
      "buses":[{"id":"slack","kind":"slack"},{"id":"b1","kind":"junction"}],
      "branches":[
        {"id":"l1","from":"slack","to":"b1",
         "r_ohm":[1,0,0,0,1,0,0,0,1],"x_ohm":[0,0,0,0,0,0,0,0,0]},
        {"id":"l2","from":"b1","to":"slack",
         "r_ohm":[1,0,0,0,1,0,0,0,1],"x_ohm":[0,0,0,0,0,0,0,0,0]}]})";
    CHECK_THROWS_AS(parse_feeder(cyc), ValidationError);
}

TEST_CASE("malformed JSON reports a parse failure") {
    CHECK_THROWS_AS(parse_feeder("{ not json"), ValidationError);
    CHECK_THROWS_AS(load_feeder(fixture("no_such_file.json")), IoError);
}

TEST_CASE("user validation") {
    std::string on_slack = R"({"base_kv":0.23,"base_kva":10,
      "buses":[{"id":"slack","kind":"slack"},{"id":"b1","kind":"junction"}],
      "branches":[{"id":"l1","from":"slack","to":"b1",
        "r_ohm":[1,0,0,0,1,0,0,0,1],"x_ohm":[0,0,0,0,0,0,0,0,0]}],
      "users":[{"id":"u1","bus":"slack","true_phase":1}]})";
    CHECK_THROWS_AS(parse_feeder(on_slack), ValidationError);

    std::string bad_phase = R"({"base_kv":0.23,"base_kva":10,
      "buses":[{"id":"slack","kind":"slack"},{"id":"b1","kind":"junction"}],
      "branches":[{"id":"l1","from":"slack","to":"b1",
        "r_ohm":[1,0,0,0,1,0,0,0,1],"x_ohm":[0,0,0,0,0,0,0,0,0]}],
      "users":[{"id":"u1","bus":"b1","true_phase":4}]})";
    CHECK_THROWS_AS(parse_feeder(bad_phase), ValidationError);
}

TEST_CASE("perturb with zero error is the identity") {
    FeederModel m = load_feeder(fixture("eight_bus.json"));
    FeederModel p = perturb_impedances(m, 0.0, 42);
    for (size_t b = 0; b < m.branches.size(); ++b)
        for (int i = 0; i < 9; ++i)
            CHECK(p.branches[b].r_pu[static_cast<size_t>(i)] ==
                  doctest::Approx(m.branches[b].r_pu[static_cast<size_t>(i)]).epsilon(1e-15));
}

TEST_CASE("perturbation is deterministic in the seed and scales like max/3") {
    // synthetic many-branch model, bypassing the parser
    FeederModel m;
    const int n = 10000;
    m.branches.resize(n);
    for (int b = 0; b < n; ++b) {
        m.branches[static_cast<size_t>(b)].r_pu.fill(0.0);
        for (int p = 0; p < 3; ++p)
            m.branches[static_cast<size_t>(b)].r_pu[static_cast<size_t>(p * 3 + p)] = 1.0;
        m.branches[static_cast<size_t>(b)].x_pu.fill(0.1);
    }
    FeederModel a = perturb_impedances(m, 0.5, 7);
    FeederModel b = perturb_impedances(m, 0.5, 7);
    FeederModel c = perturb_impedances(m, 0.5, 8);
    double mean = 0.0, sq = 0.0;
    bool identical_ab = true, identical_ac = true;
    for (int i = 0; i < n; ++i) {
        double mult = a.branches[static_cast<size_t>(i)].r_pu[0];
        CHECK(mult > 0.0);
        mean += mult - 1.0;
        sq += (mult - 1.0) * (mult - 1.0);
        identical_ab = identical_ab && mult == b.branches[static_cast<size_t>(i)].r_pu[0];
        identical_ac = identical_ac && mult == c.branches[static_cast<size_t>(i)].r_pu[0];
    }
    CHECK(identical_ab);
    CHECK_FALSE(identical_ac);
    mean /= n;
    double sd = std::sqrt(sq / n - mean * mean);
    CHECK(std::abs(sd - 0.5 / 3.0) / (0.5 / 3.0) < 0.05);
    CHECK(std::abs(mean) < 0.05 * (0.5 / 3.0));
}
