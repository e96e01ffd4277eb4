#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lssltc {

struct GradCheckCase {
    std::string name;
    std::size_t coordinates = 0;
    double max_rel_error = 0.0;     // against the extended-precision reference
    double native_rel_error = 0.0;  // against a difference taken in the checked precision
    bool passed = false;
};

struct GradCheckReport {
    int bits = 64;
    double step = 0.0;
    double tolerance = 0.0;
    std::vector<GradCheckCase> cases;

    bool passed() const;
    double max_rel_error() const;
    std::size_t coordinates() const;
    std::string to_text() const;
};

/// |a - c| / max(|a|, |c|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central-difference check of every primitive, the losses, an LTC rollout
/// and a tiny network. 64 bits: h = 1e-6, tol 1e-5, reference differences in
/// long double; 32 bits: h = 1e-3, tol 1e-3, reference differences in double.
GradCheckReport run_gradcheck(int bits, std::uint64_t seed);

}  // namespace lssltc
