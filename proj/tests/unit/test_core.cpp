#include "oracles.hpp"

#include "smsrecon/core/encoding.hpp"
#include "smsrecon/core/fft.hpp"

#include <doctest.h>

using namespace smsrecon;
using namespace smsrecon::testing;

namespace {

SmsEncoding tiny_operator(std::mt19937_64 &rng, Index S = 2, Index C = 2, int R = 2)
{
  Grid const g{4, 4};
  return SmsEncoding(random_sensitivities(S, C, g, rng), make_uniform_mask(g, R, 0));
}

double max_abs(CxVector const &v) { return v.cwiseAbs().maxCoeff(); }

} // namespace

TEST_CASE("centered FFT matches the dense DFT and is unitary")
{
  std::mt19937_64 rng(1);
  for (auto [M, N] : {std::pair<Index, Index>{4, 4}, {5, 6}, {8, 3}}) {
    CxImage x = random_image(M, N, rng);
    CxImage k = x;
    fft_for(M, N).forward(k);
    CxMatrix const ref = centered_dft_matrix(M) * x.matrix() * centered_dft_matrix(N).transpose();
    CHECK((k.matrix() - ref).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(k.abs2().sum() - x.abs2().sum()) < 1e-10 * x.abs2().sum());
    fft_for(M, N).inverse(k);
    CHECK((k - x).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("forward_sms")
{
  std::mt19937_64 rng(2);

  SUBCASE("zero stack gives zero k-space")
  {
    auto E = tiny_operator(rng);
    auto y = E.forward(SliceStackImage(2, E.grid()));
    CHECK(y.squared_norm() == 0.0);
  }

  SUBCASE("single slice, unit coil, full mask is the 2-D DFT")
  {
    Grid const g{6, 8};
    CoilSensitivities sens;
    sens.maps = {{CxImage::Constant(6, 8, Complex(1.0))}};
    SmsEncoding E(sens, SamplingMask::full(g), {0.0});
    CxImage x = random_image(6, 8, rng);
    auto y = E.forward(SliceStackImage(x, 1));
    CxImage k = x;
    fft_for(6, 8).forward(k);
    CHECK((y.coils[0] - k).abs().maxCoeff() < 1e-14);
  }

  SUBCASE("tiny instance equals the dense oracle")
  {
    auto E = tiny_operator(rng);
    CxMatrix const D = dense_sms_matrix(E.sensitivities(), E.mask().kept, E.fov_shifts());
    for (int trial = 0; trial < 5; ++trial) {
      auto x = random_stack(2, E.grid(), rng);
      CHECK(max_abs(vec(E.forward(x)) - D * vec(x.data)) < 1e-12);
    }
  }

  SUBCASE("linearity")
  {
    auto E = tiny_operator(rng, 3, 3);
    auto x1 = random_stack(3, E.grid(), rng), x2 = random_stack(3, E.grid(), rng);
    Complex const a(0.3, -1.2), b(2.5, 0.7);
    auto lhs = E.forward(SliceStackImage(a * x1.data + b * x2.data, 3));
    auto y1 = E.forward(x1), y2 = E.forward(x2);
    double err = 0, ref = 0;
    for (size_t c = 0; c < lhs.coils.size(); ++c) {
      err += (lhs.coils[c] - a * y1.coils[c] - b * y2.coils[c]).abs2().sum();
      ref += lhs.coils[c].abs2().sum();
    }
    CHECK(std::sqrt(err / ref) < 1e-12);
  }

  SUBCASE("mask is idempotent")
  {
    auto E = tiny_operator(rng);
    auto y = random_kspace(2, E.grid(), rng);
    auto once = E.apply_mask(y);
    auto twice = E.apply_mask(once);
    for (size_t c = 0; c < once.coils.size(); ++c) CHECK((once.coils[c] == twice.coils[c]).all());
  }

  SUBCASE("shape errors")
  {
    auto E = tiny_operator(rng);
    CHECK_THROWS_AS(E.forward(SliceStackImage(3, E.grid())), ShapeError);
    CHECK_THROWS_AS(E.forward(SliceStackImage(2, Grid{4, 5})), ShapeError);
    CHECK_THROWS_AS(E.adjoint(KSpaceVolume(3, E.grid())), ShapeError);
    CoilSensitivities empty;
    CHECK_THROWS_AS(SmsEncoding(empty, SamplingMask::full({4, 4}), {}), ShapeError);
  }
}

TEST_CASE("adjoint_sms")
{
  std::mt19937_64 rng(3);

  SUBCASE("zero k-space gives zero stack")
  {
    auto E = tiny_operator(rng);
    CHECK(E.adjoint(KSpaceVolume(2, E.grid())).data.abs().maxCoeff() == 0.0);
  }

  SUBCASE("conjugate transpose of the dense oracle")
  {
    auto E = tiny_operator(rng);
    CxMatrix const D = dense_sms_matrix(E.sensitivities(), E.mask().kept, E.fov_shifts());
    auto y = random_kspace(2, E.grid(), rng);
    CHECK(max_abs(vec(E.adjoint(y).data) - D.adjoint() * vec(y)) < 1e-12);
  }

  SUBCASE("dot-product test over operator configurations")
  {
    struct Cfg {
      Grid g;
      Index S, C;
      int R;
      Index acs;
    };
    for (Cfg cfg : {Cfg{{4, 4}, 2, 2, 2, 0}, Cfg{{8, 12}, 3, 4, 2, 4}, Cfg{{10, 10}, 5, 3, 2, 2}, Cfg{{6, 9}, 1, 1, 1, 0}}) {
      SmsEncoding E(random_sensitivities(cfg.S, cfg.C, cfg.g, rng), make_uniform_mask(cfg.g, cfg.R, cfg.acs));
      double worst = 0;
      for (int trial = 0; trial < 100; ++trial) {
        auto x = random_stack(cfg.S, cfg.g, rng);
        auto y = random_kspace(cfg.C, cfg.g, rng);
        auto Ex = E.forward(x);
        Complex const lhs = inner(Ex, y);
        Complex const rhs = (x.data.conjugate() * E.adjoint(y).data).sum();
        worst = std::max(worst, std::abs(lhs - rhs) / std::sqrt(Ex.squared_norm() * y.squared_norm()));
      }
      CHECK(worst < 1e-10);
    }
  }
}

TEST_CASE("apply_fov_shift")
{
  std::mt19937_64 rng(4);
  CxImage x = random_image(8, 16, rng);

  CHECK((apply_fov_shift(x, 0.0) - x).abs().maxCoeff() == 0.0);

  CxImage half = apply_fov_shift(x, 0.5);
  CHECK((apply_fov_shift(half, 0.5, true) - x).abs().maxCoeff() < 1e-12);

  CxImage third = apply_fov_shift(x, 1.0 / 3.0);
  CHECK((apply_fov_shift(third, 1.0 / 3.0, true) - x).abs().maxCoeff() < 1e-12);

  Index const N = 16;
  for (Index r : {0, 3, 13}) {
    CxImage imp = CxImage::Zero(8, N);
    imp(2, r) = 1.0;
    CxImage moved = apply_fov_shift(imp, 0.25);
    CxImage expect = CxImage::Zero(8, N);
    expect(2, (r + N / 4) % N) = 1.0;
    CHECK((moved - expect).abs().maxCoeff() < 1e-12);
  }

  CHECK_THROWS_AS(apply_fov_shift(x, 1.0), ShapeError);
}

TEST_CASE("forward applies the FOV shift before the Fourier transform")
{
  std::mt19937_64 rng(5);
  Grid const g{6, 12};
  CoilSensitivities sens;
  sens.maps = {{CxImage::Constant(6, 12, Complex(1.0))}};
  double const shift = 1.0 / 3.0;
  SmsEncoding E(sens, SamplingMask::full(g), {shift});
  CxImage x = random_image(6, 12, rng);
  CxImage k = apply_fov_shift(x, shift);
  fft_for(6, 12).forward(k);
  CHECK((E.forward(SliceStackImage(x, 1)).coils[0] - k).abs().maxCoeff() < 1e-12);
}

TEST_CASE("split_stack and concat_slices")
{
  std::mt19937_64 rng(6);
  auto x = random_stack(4, Grid{5, 7}, rng);
  auto parts = split_stack(x);
  REQUIRE(parts.size() == 4);
  CHECK((parts[2] == x.data.middleRows(10, 5)).all());
  CHECK((concat_slices(parts).data == x.data).all());

  auto single = random_stack(1, Grid{5, 7}, rng);
  auto one = split_stack(single);
  REQUIRE(one.size() == 1);
  CHECK((one[0] == single.data).all());

  std::vector<CxImage> five(5, CxImage::Zero(64, 48));
  auto stacked = concat_slices(five);
  CHECK(stacked.data.rows() == 320);
  CHECK(stacked.data.cols() == 48);

  CHECK_THROWS_AS(concat_slices({CxImage::Zero(4, 4), CxImage::Zero(5, 4)}), ShapeError);
  CHECK_THROWS_AS(concat_slices({}), ShapeError);
}

TEST_CASE("uniform mask")
{
  auto m = make_uniform_mask({16, 64}, 2, 24);
  CHECK_NOTHROW(validate_line_mask(m));
  // 32 grid lines plus the 12 off-grid lines inside the 24-line block
  CHECK(m.count() == 16 * 44);
  CHECK(m.acs.count() == 16 * 24);
  auto plain = make_uniform_mask({16, 64}, 2, 0);
  CHECK(plain.count() == 16 * 64 / 2);
  CHECK(plain.kept(0, 32));
}
