#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <array>

namespace phaseid {

inline constexpr int kPhases = 3;

/// Meter-channel to phase maps for the six three-phase connection sequences.
/// kPermTable[p][k] is the phase (0-based) seen by meter channel k under
/// sequence p; sequence 0 is the identity.
inline constexpr std::array<std::array<int, 3>, 6> kPermTable{
    {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};

/// Index of the sequence mapping channels (0,1,2) to phases (a,b,c), or -1
/// when the triple is not a permutation.
inline int perm_index(int a, int b, int c) {
    for (int p = 0; p < 6; ++p)
        if (kPermTable[static_cast<size_t>(p)][0] == a && kPermTable[static_cast<size_t>(p)][1] == b &&
            kPermTable[static_cast<size_t>(p)][2] == c)
            return p;
    return -1;
}

/// Sequence applying `inner` first, then `outer`: result[k] = outer[inner[k]].
inline int perm_compose(int outer, int inner) {
    const auto& o = kPermTable[static_cast<size_t>(outer)];
    const auto& i = kPermTable[static_cast<size_t>(inner)];
    return perm_index(o[static_cast<size_t>(i[0])], o[static_cast<size_t>(i[1])],
                      o[static_cast<size_t>(i[2])]);
}

/// Error taxonomy; categories map one-to-one onto CLI exit codes.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace rng {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based stream derivation: the draw depends only on (seed, ids),
/// never on call order, so parallel synthesis stays reproducible.
inline uint64_t derive(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc909ULL);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    return h;
}

inline double u01(uint64_t x) {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two derived uniforms. Hand-rolled so the
/// byte stream does not depend on the standard library's distribution choices.
inline double normal(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t h1 = derive(seed, a, b, c);
    uint64_t h2 = splitmix64(h1 ^ 0x2545f4914f6cdd1dULL);
    double u1 = u01(h1);
    double u2 = u01(h2);
    if (u1 <= 0.0)
        u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline double uniform(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    return u01(derive(seed, a, b, c));
}

} // namespace rng
} // namespace phaseid
