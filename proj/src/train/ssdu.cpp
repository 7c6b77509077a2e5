#include "smsrecon/train/ssdu.hpp"

#include "smsrecon/phantom/phantom.hpp"

#include <cmath>
#include <random>

namespace smsrecon {

namespace {

BoolGrid candidates(SamplingMask const &omega)
{
  if (!omega.has_acs()) return omega.kept;
  return omega.kept && !omega.acs;
}

} // namespace

Index lambda_size(SamplingMask const &omega, double rho)
{
  return Index(std::llround(rho * double(candidates(omega).count())));
}

MaskPartition partition_mask(SamplingMask const &omega, Index K, double rho, std::uint64_t seed)
{
  if (K < 1) throw ConfigError("partition_mask: K must be >= 1");
  if (!(rho > 0 && rho < 1)) throw ConfigError("partition_mask: rho must be in (0, 1)");
  if (omega.has_acs() && (omega.acs.rows() != omega.kept.rows() || omega.acs.cols() != omega.kept.cols())) {
    throw ShapeError("partition_mask: ACS grid mismatch");
  }
  BoolGrid const cand = candidates(omega);
  std::vector<Index> pool;
  for (Index p = 0; p < cand.size(); ++p)
    if (cand.data()[p]) pool.push_back(p);
  Index const n = Index(pool.size());
  Index const m = lambda_size(omega, rho);
  if (m < 1) throw ConfigError("partition_mask: rho leaves Lambda empty");
  if (m >= n) throw ConfigError("partition_mask: rho leaves no non-ACS samples in Theta");

  MaskPartition part;
  part.rho = rho;
  part.seed = seed;
  for (Index k = 0; k < K; ++k) {
    std::mt19937_64 rng(derive_seed(seed, {std::uint64_t(k)}));
    std::vector<Index> order = pool;
    // partial Fisher-Yates: the first m entries are a uniform m-subset
    for (Index i = 0; i < m; ++i) {
      std::uniform_int_distribution<Index> pick(i, n - 1);
      std::swap(order[size_t(i)], order[size_t(pick(rng))]);
    }
    SamplingMask lam;
    lam.kept = BoolGrid::Constant(omega.kept.rows(), omega.kept.cols(), false);
    for (Index i = 0; i < m; ++i) lam.kept.data()[order[size_t(i)]] = true;
    lam.acceleration = double(lam.kept.size()) / double(m);
    SamplingMask th;
    th.kept = omega.kept && !lam.kept;
    th.acs = omega.acs;
    th.acceleration = double(th.kept.size()) / double(th.kept.count());
    part.theta.push_back(std::move(th));
    part.lambda.push_back(std::move(lam));
  }
  return part;
}

double l1l2_loss(std::vector<CxImage const *> const &ref, std::vector<CxImage const *> const &est,
                 BoolGrid const &where, std::vector<CxImage> *grad)
{
  if (ref.size() != est.size() || ref.empty()) throw ShapeError("l1l2_loss: channel count mismatch");
  for (size_t c = 0; c < ref.size(); ++c) {
    if (ref[c]->rows() != where.rows() || ref[c]->cols() != where.cols() || est[c]->rows() != where.rows() ||
        est[c]->cols() != where.cols()) {
      throw ShapeError("l1l2_loss: grid mismatch");
    }
  }
  double ref2 = 0, ref1 = 0, d2 = 0, d1 = 0;
  Index const n = where.size();
  for (size_t c = 0; c < ref.size(); ++c) {
    Complex const *r = ref[c]->data();
    Complex const *e = est[c]->data();
    for (Index p = 0; p < n; ++p) {
      if (!where.data()[p]) continue;
      ref2 += std::norm(r[p]);
      ref1 += std::abs(r[p]);
      d2 += std::norm(r[p] - e[p]);
      d1 += std::abs(r[p] - e[p]);
    }
  }
  if (!(ref2 > 0)) throw ConfigError("l1l2_loss: reference is zero on the loss set");
  double const nref2 = std::sqrt(ref2), nd2 = std::sqrt(d2);
  if (grad) {
    grad->assign(ref.size(), CxImage::Zero(where.rows(), where.cols()));
    for (size_t c = 0; c < ref.size(); ++c) {
      Complex const *r = ref[c]->data();
      Complex const *e = est[c]->data();
      Complex *g = (*grad)[c].data();
      for (Index p = 0; p < n; ++p) {
        if (!where.data()[p]) continue;
        Complex const d = e[p] - r[p];
        double const a = std::abs(d);
        if (nd2 > 0) g[p] += d / (nref2 * nd2);
        if (a > 0) g[p] += d / (a * ref1);
      }
    }
  }
  return nd2 / nref2 + d1 / ref1;
}

double l1l2_loss(KSpaceVolume const &ref, KSpaceVolume const &est, BoolGrid const &where, KSpaceVolume *grad)
{
  std::vector<CxImage const *> r, e;
  for (auto const &c : ref.coils) r.push_back(&c);
  for (auto const &c : est.coils) e.push_back(&c);
  if (!grad) return l1l2_loss(r, e, where);
  std::vector<CxImage> g;
  double const v = l1l2_loss(r, e, where, &g);
  grad->coils = std::move(g);
  return v;
}

double nmse(CxImage const &est, CxImage const &ref, BoolGrid const &where)
{
  if (est.rows() != ref.rows() || est.cols() != ref.cols() || where.rows() != ref.rows() || where.cols() != ref.cols()) {
    throw ShapeError("nmse: shape mismatch");
  }
  double const den = where.select(ref.abs2(), 0.0).sum();
  if (!(den > 0)) throw ConfigError("nmse: reference is zero on the region");
  return where.select((est - ref).abs2(), 0.0).sum() / den;
}

} // namespace smsrecon
