#include "smsrecon/core/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <atomic>
#include <map>
#include <mutex>
#include <numbers>

namespace smsrecon {

namespace {
std::mutex &planner_mutex()
{
  static std::mutex m;
  return m;
}

std::atomic<bool> g_measure{false};
} // namespace

void set_fft_measured_planning(bool on) { g_measure = on; }

struct CenteredFft2::Plans {
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;
  ~Plans()
  {
    std::lock_guard lock(planner_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (inv) fftw_destroy_plan(inv);
  }
};

CenteredFft2::CenteredFft2(Index rows, Index cols)
  : rows_(rows), cols_(cols), pre_(rows, cols), post_(rows, cols)
{
  if (rows < 1 || cols < 1) throw ShapeError("fft: empty grid");
  double const two_pi = 2.0 * std::numbers::pi;
  Index const cr = rows / 2, cc = cols / 2;
  for (Index m = 0; m < rows; ++m) {
    for (Index n = 0; n < cols; ++n) {
      double const a = two_pi * (double(cr * m) / rows + double(cc * n) / cols);
      double const b = two_pi * (double(cr * (m - cr)) / rows + double(cc * (n - cc)) / cols);
      pre_(m, n) = std::polar(1.0, a);
      post_(m, n) = std::polar(1.0 / std::sqrt(double(rows * cols)), b);
    }
  }
  auto plans = std::make_shared<Plans>();
  CxImage scratch(rows, cols);
  auto *buf = reinterpret_cast<fftw_complex *>(scratch.data());
  {
    std::lock_guard lock(planner_mutex());
    unsigned const flags = (g_measure ? FFTW_MEASURE : FFTW_ESTIMATE) | FFTW_UNALIGNED;
    plans->fwd = fftw_plan_dft_2d(int(rows), int(cols), buf, buf, FFTW_FORWARD, flags);
    plans->inv = fftw_plan_dft_2d(int(rows), int(cols), buf, buf, FFTW_BACKWARD, flags);
  }
  if (!plans->fwd || !plans->inv) throw std::runtime_error("fft: planning failed");
  plans_ = std::move(plans);
}

void CenteredFft2::forward(CxImage &img) const
{
  if (img.rows() != rows_ || img.cols() != cols_) throw ShapeError("fft: grid mismatch");
  img *= pre_;
  auto *buf = reinterpret_cast<fftw_complex *>(img.data());
  fftw_execute_dft(plans_->fwd, buf, buf);
  img *= post_;
}

void CenteredFft2::inverse(CxImage &img) const
{
  if (img.rows() != rows_ || img.cols() != cols_) throw ShapeError("fft: grid mismatch");
  img *= post_.conjugate();
  auto *buf = reinterpret_cast<fftw_complex *>(img.data());
  fftw_execute_dft(plans_->inv, buf, buf);
  img *= pre_.conjugate();
}

void CenteredFft2::raw_forward(CxImage &img) const
{
  if (img.rows() != rows_ || img.cols() != cols_) throw ShapeError("fft: grid mismatch");
  auto *buf = reinterpret_cast<fftw_complex *>(img.data());
  fftw_execute_dft(plans_->fwd, buf, buf);
}

void CenteredFft2::raw_inverse(CxImage &img) const
{
  if (img.rows() != rows_ || img.cols() != cols_) throw ShapeError("fft: grid mismatch");
  auto *buf = reinterpret_cast<fftw_complex *>(img.data());
  fftw_execute_dft(plans_->inv, buf, buf);
}

CenteredFft2 const &fft_for(Index rows, Index cols)
{
  static std::mutex cache_mutex;
  static std::map<std::pair<Index, Index>, std::unique_ptr<CenteredFft2>> cache;
  std::lock_guard lock(cache_mutex);
  auto &slot = cache[{rows, cols}];
  if (!slot) slot = std::make_unique<CenteredFft2>(rows, cols);
  return *slot;
}

} // namespace smsrecon
