#include "phaseid/measurements.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace phaseid {
namespace {

struct ChannelKey {
    std::string owner;
    Quantity q;
    int index;
    bool indexed;
    bool operator<(const ChannelKey& o) const {
        return std::tie(owner, q, index) < std::tie(o.owner, o.q, o.index);
    }
};

bool parse_channel_tag(const std::string& tag, Quantity& q, int& index, bool& indexed) {
    if (tag.empty())
        return false;
    switch (tag[0]) {
    case 'w': q = Quantity::w; break;
    case 'p': q = Quantity::p; break;
    case 'q': q = Quantity::q; break;
    default: return false;
    }
    if (tag.size() == 1) {
        index = 0;
        indexed = false;
        return true;
    }
    if (tag.size() == 2 && tag[1] >= '1' && tag[1] <= '3') {
        index = tag[1] - '1';
        indexed = true;
        return true;
    }
    return false;
}

} // namespace

std::string quantity_name(Quantity q) {
    switch (q) {
    case Quantity::w: return "w";
    case Quantity::p: return "p";
    default: return "q";
    }
}

const Channel* MeasurementSet::find(const std::string& owner, Quantity q, int index) const {
    for (const Channel& c : channels)
        if (c.owner == owner && c.quantity == q && c.index == index)
            return &c;
    return nullptr;
}

bool MeasurementSet::has_transformer() const {
    return find(kTransformerOwner, Quantity::w, 0) != nullptr ||
           find(kTransformerOwner, Quantity::p, 0) != nullptr;
}

void validate_measurements(const net::FeederModel& model, const MeasurementSet& ms) {
    if (ms.windows <= 0)
        throw ValidationError("measurement set is empty");
    for (const Channel& c : ms.channels) {
        if (static_cast<int>(c.values.size()) != ms.windows)
            throw ValidationError("channel of '" + c.owner + "' has inconsistent window count");
        if (!(c.sigma > 0.0))
            throw ValidationError("channel of '" + c.owner + "' has non-positive sigma");
        if (c.owner != kTransformerOwner && model.user_index(c.owner) < 0)
            throw ValidationError("measurement owner '" + c.owner + "' is not a model user");
    }
    for (const net::User& u : model.users) {
        int arity = u.arity == net::UserArity::three_phase ? 3 : 1;
        for (int k = 0; k < arity; ++k) {
            if (!ms.find(u.id, Quantity::w, k))
                throw ValidationError("user '" + u.id + "' lacks a voltage channel: unobservable");
            if (!ms.find(u.id, Quantity::p, k))
                throw ValidationError("user '" + u.id + "' lacks an active-power channel: unobservable");
        }
    }
}

MeasurementSet load_measurements_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open measurements file '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw ValidationError("measurements file '" + path + "' is empty");
    if (line != "user_id,channel,window,value,sigma")
        throw ValidationError("unexpected measurements header: " + line);

    std::map<ChannelKey, std::map<int, double>> rows;
    std::map<ChannelKey, double> sigmas;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string owner, tag, field;
        if (!std::getline(ss, owner, ',') || !std::getline(ss, tag, ','))
            throw ValidationError("measurements line " + std::to_string(line_no) + ": too few fields");
        Quantity q;
        int index;
        bool indexed;
        if (!parse_channel_tag(tag, q, index, indexed))
            throw ValidationError("measurements line " + std::to_string(line_no) +
                                  ": bad channel tag '" + tag + "'");
        int window;
        double value, sigma;
        try {
            std::getline(ss, field, ',');
            window = std::stoi(field);
            std::getline(ss, field, ',');
            value = std::stod(field);
            std::getline(ss, field, ',');
            sigma = std::stod(field);
        } catch (const std::exception&) {
            throw ValidationError("measurements line " + std::to_string(line_no) +
                                  ": malformed numeric field");
        }
        if (window < 1)
            throw ValidationError("measurements line " + std::to_string(line_no) +
                                  ": windows are 1-based");
        ChannelKey key{owner, q, index, indexed};
        rows[key][window - 1] = value;
        sigmas[key] = sigma;
    }

    MeasurementSet ms;
    for (auto& [key, per_window] : rows) {
        Channel c;
        c.owner = key.owner;
        c.quantity = key.q;
        c.index = key.index;
        c.indexed = key.indexed;
        c.sigma = sigmas[key];
        int max_window = per_window.rbegin()->first;
        if (static_cast<int>(per_window.size()) != max_window + 1)
            throw ValidationError("channel '" + key.owner + "/" + quantity_name(key.q) +
                                  "' has gaps in its window sequence");
        c.values.resize(static_cast<size_t>(max_window) + 1);
        for (auto [w, v] : per_window)
            c.values[static_cast<size_t>(w)] = v;
        ms.windows = std::max(ms.windows, max_window + 1);
        ms.channels.push_back(std::move(c));
    }
    for (const Channel& c : ms.channels)
        if (static_cast<int>(c.values.size()) != ms.windows)
            throw ValidationError("channel '" + c.owner + "' covers fewer windows than the set");
    return ms;
}

void save_measurements_csv(const MeasurementSet& ms, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write measurements file '" + path + "'");
    out << "user_id,channel,window,value,sigma\n";
    char buf[64];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const Channel& c : ms.channels) {
        std::string tag = quantity_name(c.quantity);
        if (c.indexed)
            tag += std::to_string(c.index + 1);
        for (int t = 0; t < static_cast<int>(c.values.size()); ++t)
            out << c.owner << ',' << tag << ',' << t + 1 << ','
                << fmt(c.values[static_cast<size_t>(t)]) << ',' << fmt(c.sigma) << '\n';
    }
    if (!out)
        throw IoError("failed while writing '" + path + "'");
}

} // namespace phaseid
