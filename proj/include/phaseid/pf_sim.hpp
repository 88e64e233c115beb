#pragma once

#include <array>
#include <complex>
#include <vector>

#include "phaseid/measurements.hpp"
#include "phaseid/netmodel.hpp"

namespace phaseid::sim {

using cd = std::complex<double>;
using Cvec3 = std::array<cd, 3>;
using Dvec3 = std::array<double, 3>;

/// Raw per-user load series, per unit, consumption positive. Three-phase
/// users occupy channels 0..2, single-phase users only channel 0 (the channel
/// is tied to a physical phase by the user's ground truth).
struct LoadProfiles {
    int steps = 0;
    int resolution_min = 5;
    std::vector<std::array<std::vector<cd>, 3>> series; ///< [user][channel][step]

    [[nodiscard]] int channel_count(const net::FeederModel& m, int user) const;
};

LoadProfiles load_profiles_csv(const net::FeederModel& model, const std::string& path);
void save_profiles_csv(const net::FeederModel& model, const LoadProfiles& profiles,
                       const std::string& path);

struct PfSlice {
    std::vector<Cvec3> v;    ///< bus voltage phasors
    std::vector<Cvec3> flow; ///< complex power at the from-end, from->to positive
    int iterations = 0;
    double mismatch = 0.0; ///< max per-bus current mismatch at the returned state
};

/// Exact fixed-point solution of the unbalanced power flow on a radial
/// feeder via backward/forward sweeps with full 3x3 branch impedances.
PfSlice solve_powerflow(const net::FeederModel& model, const std::vector<Cvec3>& bus_load);

struct Ld3fSlice {
    std::vector<Dvec3> omega; ///< squared voltage magnitude per bus
    std::vector<Dvec3> fp, fq; ///< branch flows, stored orientation
};

/// Direct solve of the linear model on a radial feeder: flows aggregate the
/// downstream injections, squared voltages accumulate the branch drops.
Ld3fSlice forward_ld3f(const net::FeederModel& model, const std::vector<Dvec3>& p_load,
                       const std::vector<Dvec3>& q_load);

enum class PfSource { exact, linear };

struct SynthesisOptions {
    double sm_max_error = 0.01; ///< meter max relative error; sigma is a third of it
    int avg_window = 3;         ///< raw steps averaged into one reporting window
    uint64_t seed = 1;
    PfSource source = PfSource::exact;
    bool transformer_channels = true;
};

/// Runs the chosen power flow per raw step at the ground-truth connection,
/// overlays multiplicative Gaussian meter noise, then averages each window.
/// Voltage magnitudes are squared after averaging; the linear source works in
/// the squared domain throughout so zero-noise sets stay model-consistent.
MeasurementSet synthesize_measurements(const net::FeederModel& model, const LoadProfiles& profiles,
                                       const SynthesisOptions& options);

/// Per-bus complex consumption at one raw step under the true assignment.
std::vector<Cvec3> true_bus_loads(const net::FeederModel& model, const LoadProfiles& profiles,
                                  int step);

/// Bus carrying the transformer voltage reference: the slack's only child,
/// or the slack itself when the head is ambiguous.
int transformer_bus(const net::FeederModel& model);

} // namespace phaseid::sim
