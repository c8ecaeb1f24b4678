#pragma once
// Finite-difference verification of every trainable operation: the analytic
// tape gradients are compared against central differences at random smooth
// points (hinge and clamp kinks are excluded by resampling).

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace kgdialog::gradcheck {

struct OpResult {
  std::string op;
  double max_rel_error = 0.0;
  std::size_t points = 0;
  bool passed = false;
};

inline constexpr double kTolerance = 1e-4;

// Runs all checks; one result per operation. points is the number of random
// evaluation points per op.
std::vector<OpResult> run_suite(std::uint64_t seed, std::size_t points = 100);

// Prints one line per op; returns true iff everything passed.
bool run_and_report(std::uint64_t seed, std::size_t points, std::ostream& out);

}  // namespace kgdialog::gradcheck
