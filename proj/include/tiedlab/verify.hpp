#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace tiedlab {

/// Aggregate of one property checked over many seeded instances.
struct CheckLine {
    std::string name;
    std::size_t passed = 0;
    std::size_t total = 0;
    double max_error = 0.0;
    double tolerance = 0.0;  // 0 means bitwise / exact
    std::vector<std::string> failures;  // reproducible descriptions (spec + seed)

    explicit CheckLine(std::string n, double tol = 0.0) : name(std::move(n)), tolerance(tol) {}

    bool pass() const { return passed == total; }
    void record(bool ok, double err, const std::string& instance);
};

struct SuiteResult {
    std::string suite;
    std::vector<CheckLine> checks;

    bool pass() const;
    /// One line per check: "<suite>/<name> passed/total max_err=... tol=... PASS|FAIL",
    /// followed by the failing instances.
    std::string report() const;
};

/// Two-path identity, expansion oracles, degeneracy chain and TiedSE composition.
SuiteResult run_equiv_suite(std::size_t seeds, std::uint64_t base_seed);
/// Finite-difference gradcheck of every layer kind.
SuiteResult run_gradcheck_suite(std::size_t seeds, std::uint64_t base_seed);
/// Exact parameter / MAC identities plus the fixed reference counts.
SuiteResult run_counts_suite(std::size_t seeds, std::uint64_t base_seed);

/// Per-instance seed: base_seed + i, pushed through one splitmix step.
std::uint64_t instance_seed(std::uint64_t base_seed, std::size_t i);

}  // namespace tiedlab
