#pragma once

#include "smsrecon/core/types.hpp"

#include <cstdint>
#include <vector>

namespace smsrecon {

/// K disjoint splits of an acquired set: theta[k] feeds the network's DC
/// units, lambda[k] is held out for the loss. theta[k] keeps the ACS block.
struct MaskPartition {
  std::vector<SamplingMask> theta;
  std::vector<SamplingMask> lambda;
  double rho = 0;
  std::uint64_t seed = 0;

  Index size() const { return Index(theta.size()); }
};

/// For each k independently, draws round(rho * |Omega \ ACS|) points of the
/// acquired non-ACS set uniformly without replacement into Lambda_k.
MaskPartition partition_mask(SamplingMask const &omega, Index K, double rho, std::uint64_t seed);

/// Number of points partition_mask puts in each Lambda_k.
Index lambda_size(SamplingMask const &omega, double rho);

/// ||y - yhat||_2 / ||y||_2 + ||y - yhat||_1 / ||y||_1 over the samples where
/// `where` is true, with |.| the complex modulus. Other samples are never
/// read. When grad is given it receives d(loss)/d(yhat) as d/dRe + i d/dIm
/// on `where` and zero elsewhere.
double l1l2_loss(std::vector<CxImage const *> const &ref, std::vector<CxImage const *> const &est,
                 BoolGrid const &where, std::vector<CxImage> *grad = nullptr);
double l1l2_loss(KSpaceVolume const &ref, KSpaceVolume const &est, BoolGrid const &where,
                 KSpaceVolume *grad = nullptr);

/// Squared error over `where` divided by the reference energy there.
double nmse(CxImage const &est, CxImage const &ref, BoolGrid const &where);

} // namespace smsrecon
