#include "smsrecon/baseline/cg_sense.hpp"

#include <cmath>

namespace smsrecon {

namespace {

double objective(KSpaceVolume const &y, SmsEncoding const &E, SliceStackImage const &x, double mu,
                 std::optional<SliceStackImage> const &prior)
{
  auto Ex = E.forward(x);
  double f = 0;
  for (size_t c = 0; c < Ex.coils.size(); ++c) f += (E.mask().kept.select(y.coils[c], Complex(0)) - Ex.coils[c]).abs2().sum();
  if (mu > 0) f += mu * (prior ? (x.data - prior->data).abs2().sum() : x.data.abs2().sum());
  return f;
}

} // namespace

CgSenseResult cg_sense(KSpaceVolume const &y, SmsEncoding const &E, CgSenseOptions const &opts,
                       std::optional<SliceStackImage> const &prior)
{
  if (opts.mu < 0) throw ConfigError("cg_sense: mu must be >= 0");
  if (opts.max_iter < 1) throw ConfigError("cg_sense: max_iter must be >= 1");
  SliceStackImage b = E.adjoint(y);
  if (prior && opts.mu > 0) {
    if (prior->data.rows() != b.data.rows() || prior->data.cols() != b.data.cols()) {
      throw ShapeError("cg_sense: prior shape mismatch");
    }
    b.data += opts.mu * prior->data;
  }
  auto apply = [&](SliceStackImage const &p) {
    SliceStackImage q = E.normal(p);
    if (opts.mu > 0) q.data += opts.mu * p.data;
    return q;
  };

  CgSenseResult res;
  res.x = SliceStackImage(E.num_slices(), E.grid());
  double const bnorm = std::sqrt(b.data.abs2().sum());
  res.residual_history.push_back(bnorm > 0 ? 1.0 : 0.0);
  res.objective_history.push_back(objective(y, E, res.x, opts.mu, prior));
  if (bnorm == 0) {
    res.converged = true;
    return res;
  }

  CxImage r = b.data;
  CxImage p = r;
  double rs = r.abs2().sum();
  for (int k = 0; k < opts.max_iter; ++k) {
    SliceStackImage const q = apply(SliceStackImage(p, E.num_slices()));
    double const pq = real_dot(p, q.data);
    if (!(pq > 0)) break;
    double const alpha = rs / pq;
    res.x.data += alpha * p;
    r -= alpha * q.data;
    double const rs_new = r.abs2().sum();
    ++res.iterations;
    res.residual_history.push_back(std::sqrt(rs_new) / bnorm);
    res.objective_history.push_back(objective(y, E, res.x, opts.mu, prior));
    if (std::sqrt(rs_new) / bnorm < opts.tol) {
      res.converged = true;
      break;
    }
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  return res;
}

} // namespace smsrecon
