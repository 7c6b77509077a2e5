#pragma once

#include "smsrecon/core/encoding.hpp"

#include <optional>
#include <vector>

namespace smsrecon {

struct CgSenseOptions {
  double mu = 0.0;   // optional quadratic pull toward `prior`
  int max_iter = 50;
  double tol = 1e-8; // on ||r_k|| / ||E^H y + mu prior||
};

struct CgSenseResult {
  SliceStackImage x;
  /// ||r_k|| / ||b|| for k = 0..iterations, r = b - (E^H E + mu) x.
  std::vector<double> residual_history;
  /// ||y - E x_k||^2 + mu ||x_k - prior||^2 for k = 0..iterations.
  std::vector<double> objective_history;
  int iterations = 0;
  bool converged = false;
};

/// CG on (E^H E + mu I) x = E^H y + mu prior starting from zero. Returns the
/// last iterate with converged = false when max_iter is reached first.
CgSenseResult cg_sense(KSpaceVolume const &y, SmsEncoding const &E, CgSenseOptions const &opts = {},
                       std::optional<SliceStackImage> const &prior = std::nullopt);

} // namespace smsrecon
