#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace flowstyle::selftest {

struct SuiteResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;   // worst error seen
  double threshold = 0.0;
  double seconds = 0.0;
  std::string detail;
};

/// iaf_invert(iaf_step(z)) for every step and for the whole chain over
/// `draws` random (z, h), D=8, K=4.
SuiteResult iaf_invertibility(std::uint64_t seed, int draws = 1000);

/// log q(z_K) against log N(eps) - log|det J| with J the central-difference
/// Jacobian of eps -> z_K, on small random flows (D <= 4, K <= 3).
SuiteResult log_density_check(std::uint64_t seed, int trials = 100);

/// Conditioner Jacobians w.r.t. z_prev vanish on and above the diagonal in
/// each step's ordering.
SuiteResult masking_check(std::uint64_t seed, int inputs = 100);

/// Reverse-mode against central differences for every loss term and the
/// weighted total, end to end through a tiny instance of every network.
std::vector<SuiteResult> gradient_oracle(std::uint64_t seed);

std::vector<SuiteResult> run_all(std::uint64_t seed);

std::string format(const SuiteResult& r);

}  // namespace flowstyle::selftest
