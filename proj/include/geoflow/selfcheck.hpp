#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace geoflow {

struct CheckResult {
    std::string suite;
    std::string name;
    bool passed = false;
    double value = 0.0;     // measured quantity
    double threshold = 0.0; // bound it was compared against
};

// Central differences (h = 1e-5) against reverse mode for every differentiable op and
// the two training objectives; passes when the max relative error is below 1e-4.
std::vector<CheckResult> gradient_suite(std::uint64_t seed);

// Encoder latents under 10 random node permutations for m in {8, 64, 333}, within 1e-8.
std::vector<CheckResult> permutation_suite(std::uint64_t seed);

// Latent shape across node counts and decoder outputs under query batching splits (1e-12).
std::vector<CheckResult> discretization_suite(std::uint64_t seed);

// Sorting vs assignment, the Gaussian sample check and Bures closed forms.
std::vector<CheckResult> w2_suite(std::uint64_t seed);

// Randomized linear-decoder theorem trials and the scaled-orthogonal equality case.
std::vector<CheckResult> theorem_suite(std::uint64_t seed, std::size_t trials = 1000);

std::vector<CheckResult> run_selfcheck(std::uint64_t seed);

} // namespace geoflow
