#include "smsrecon/unrolled/resnet.hpp"

#include <cmath>
#include <string>

namespace smsrecon {

namespace {

using WeightMap = Eigen::Map<Eigen::MatrixXd const>;
using GradMap = Eigen::Map<Eigen::MatrixXd>;

// Activations inside the network live on a zero-padded (H+2r) x (W+2r) grid,
// so every kernel tap is a plain column offset and a conv is k*k GEMMs over
// one contiguous span of padded pixels.
struct Padded {
  Index h, w, r, q; // q = padded row length
  Index first, span;
  Eigen::RowVectorXd interior;

  Padded(Index h_, Index w_, Index k) : h(h_), w(w_), r(k / 2), q(w_ + 2 * (k / 2))
  {
    first = r * q + r;
    span = (h - 1) * q + w;
    interior = Eigen::RowVectorXd::Zero(size());
    for (Index i = 0; i < h; ++i) interior.segment((i + r) * q + r, w).setOnes();
  }
  Index size() const { return (h + 2 * r) * q; }
  Index offset(Index dy, Index dx) const { return (dy - r) * q + (dx - r); }

  Activation pad(Activation const &x) const
  {
    Activation out = Activation::Zero(x.rows(), size());
    for (Index i = 0; i < h; ++i) out.middleCols((i + r) * q + r, w) = x.middleCols(i * w, w);
    return out;
  }
  Activation unpad(Activation const &x) const
  {
    Activation out(x.rows(), h * w);
    for (Index i = 0; i < h; ++i) out.middleCols(i * w, w) = x.middleCols((i + r) * q + r, w);
    return out;
  }
};

} // namespace

Index ResNetSpec::num_params() const
{
  Index const kk = kernel * kernel;
  auto conv = [&](Index in, Index out) { return out * in * kk + out; };
  return conv(io_channels, channels) + blocks * 2 * conv(channels, channels) + conv(channels, io_channels);
}

void ResNetSpec::validate() const
{
  if (blocks < 0) throw ConfigError("resnet: blocks must be >= 0");
  if (channels < 1 || io_channels < 1) throw ConfigError("resnet: channels must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("resnet: kernel must be odd");
  if (!std::isfinite(residual_scale)) throw ConfigError("resnet: residual_scale must be finite");
}

ResNet::ResNet(ResNetSpec spec) : spec_(spec)
{
  spec_.validate();
  Index const kk = spec_.kernel * spec_.kernel;
  Index off = 0;
  auto add = [&](Index in, Index out) {
    layers_.push_back({in, out, off});
    off += out * in * kk + out;
  };
  add(spec_.io_channels, spec_.channels);
  for (Index b = 0; b < 2 * spec_.blocks; ++b) add(spec_.channels, spec_.channels);
  add(spec_.channels, spec_.io_channels);
}

ParamVector ResNet::init(std::mt19937_64 &rng) const
{
  ParamVector theta = ParamVector::Zero(num_params());
  Index const kk = spec_.kernel * spec_.kernel;
  for (size_t l = 0; l + 1 < layers_.size(); ++l) {
    auto const &L = layers_[l];
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / double(L.in * kk)));
    for (Index i = 0; i < L.out * L.in * kk; ++i) theta(L.offset + i) = nd(rng);
  }
  return theta;
}

Activation ResNet::forward(Eigen::Ref<ParamVector const> theta, Activation const &x, Index height, Index width,
                           ResNetTape *tape) const
{
  if (theta.size() != num_params()) {
    throw ShapeError("resnet: expected " + std::to_string(num_params()) + " parameters, got " +
                     std::to_string(theta.size()));
  }
  if (x.rows() != spec_.io_channels || x.cols() != height * width) throw ShapeError("resnet: input shape mismatch");
  Index const k = spec_.kernel, kk = k * k;
  Padded const P(height, width, k);
  auto conv = [&](Layer const &L, Activation const &in) {
    WeightMap W(theta.data() + L.offset, L.out, L.in * kk);
    Eigen::Map<Eigen::VectorXd const> b(theta.data() + L.offset + L.out * L.in * kk, L.out);
    Activation out = Activation::Zero(L.out, P.size());
    auto o = out.middleCols(P.first, P.span);
    for (Index dy = 0; dy < k; ++dy)
      for (Index dx = 0; dx < k; ++dx)
        o.noalias() += W.middleCols((dy * k + dx) * L.in, L.in) * in.middleCols(P.first + P.offset(dy, dx), P.span);
    o.colwise() += b;
    out.array().rowwise() *= P.interior.array();
    return out;
  };

  Activation const xp = P.pad(x);
  if (tape) {
    tape->height = height;
    tape->width = width;
    tape->input = xp;
    tape->trunk.clear();
    tape->hidden.clear();
  }
  Activation h = conv(layers_[0], xp);
  for (Index b = 0; b < spec_.blocks; ++b) {
    if (tape) tape->trunk.push_back(h);
    Activation t = conv(layers_[size_t(1 + 2 * b)], h).cwiseMax(0.0);
    h += spec_.residual_scale * conv(layers_[size_t(2 + 2 * b)], t);
    if (tape) tape->hidden.push_back(std::move(t));
  }
  if (tape) tape->trunk.push_back(h);
  return x + P.unpad(conv(layers_.back(), h));
}

Activation ResNet::backward(Eigen::Ref<ParamVector const> theta, ResNetTape const &tape, Activation const &grad_out,
                            Eigen::Ref<ParamVector> grad_theta) const
{
  if (grad_theta.size() != num_params()) throw ShapeError("resnet: gradient size mismatch");
  Index const k = spec_.kernel, kk = k * k;
  Padded const P(tape.height, tape.width, k);
  // Given d/d(out) of conv L applied to `in` (zero on the padding), accumulate
  // weight grads and return d/d(in) restricted to the interior.
  auto conv_back = [&](Layer const &L, Activation const &in, Activation const &g) {
    WeightMap W(theta.data() + L.offset, L.out, L.in * kk);
    GradMap gW(grad_theta.data() + L.offset, L.out, L.in * kk);
    Eigen::Map<Eigen::VectorXd> gb(grad_theta.data() + L.offset + L.out * L.in * kk, L.out);
    auto gs = g.middleCols(P.first, P.span);
    gb += gs.rowwise().sum();
    Activation gin = Activation::Zero(L.in, P.size());
    for (Index dy = 0; dy < k; ++dy) {
      for (Index dx = 0; dx < k; ++dx) {
        Index const tap = (dy * k + dx) * L.in, off = P.first + P.offset(dy, dx);
        gW.middleCols(tap, L.in).noalias() += gs * in.middleCols(off, P.span).transpose();
        gin.middleCols(off, P.span).noalias() += W.middleCols(tap, L.in).transpose() * gs;
      }
    }
    gin.array().rowwise() *= P.interior.array();
    return gin;
  };

  Activation const go = P.pad(grad_out);
  Activation gh = conv_back(layers_.back(), tape.trunk.back(), go);
  for (Index b = spec_.blocks - 1; b >= 0; --b) {
    Activation const &t = tape.hidden[size_t(b)];
    Activation gt = conv_back(layers_[size_t(2 + 2 * b)], t, spec_.residual_scale * gh);
    gt = (t.array() > 0.0).select(gt, 0.0);
    gh += conv_back(layers_[size_t(1 + 2 * b)], tape.trunk[size_t(b)], gt);
  }
  return grad_out + P.unpad(conv_back(layers_[0], tape.input, gh));
}

Activation to_channels(CxImage const &x)
{
  Activation a(2, x.size());
  Eigen::Map<Eigen::Array<Complex, 1, Eigen::Dynamic> const> flat(x.data(), x.size());
  a.row(0) = flat.real().matrix();
  a.row(1) = flat.imag().matrix();
  return a;
}

CxImage from_channels(Activation const &a, Index rows, Index cols)
{
  if (a.rows() != 2 || a.cols() != rows * cols) throw ShapeError("from_channels: shape mismatch");
  CxImage x(rows, cols);
  for (Index p = 0; p < rows * cols; ++p) x.data()[p] = Complex(a(0, p), a(1, p));
  return x;
}

} // namespace smsrecon
