#pragma once

#include <string>
#include <vector>

#include "phaseid/netmodel.hpp"

namespace phaseid {

/// Reserved owner id for the feeder-head reference measurements.
inline const std::string kTransformerOwner = "transformer";

enum class Quantity : uint8_t { w, p, q };

/// One metered series. Single-phase user channels use index 0; three-phase
/// users and the transformer carry one channel per meter terminal (0..2).
/// Units are per unit (w in squared per-unit voltage), consumption positive.
struct Channel {
    std::string owner;
    Quantity quantity = Quantity::w;
    int index = 0;
    bool indexed = false; ///< true when the CSV tag carries a terminal digit
    double sigma = 0.0;
    std::vector<double> values; ///< one entry per window
};

struct MeasurementSet {
    int windows = 0;
    std::vector<Channel> channels;

    [[nodiscard]] const Channel* find(const std::string& owner, Quantity q, int index = 0) const;
    [[nodiscard]] bool has_transformer() const;
};

/// Checks the set against a model: every user carries voltage and active
/// power channels of the right arity over the same window count, sigmas are
/// positive. Throws ValidationError (observability) otherwise.
void validate_measurements(const net::FeederModel& model, const MeasurementSet& ms);

MeasurementSet load_measurements_csv(const std::string& path);
void save_measurements_csv(const MeasurementSet& ms, const std::string& path);

std::string quantity_name(Quantity q);

} // namespace phaseid
