#include "vibctl/fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <stdexcept>
#include <utility>

namespace vibctl {

namespace {
// FFTW planning touches global state.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

FftPlanning g_planning = FftPlanning::Measure;
}  // namespace

void set_fft_planning(FftPlanning mode) {
  std::lock_guard lock(planner_mutex());
  g_planning = mode;
}

FftPlanning fft_planning() {
  std::lock_guard lock(planner_mutex());
  return g_planning;
}

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (n == 0) throw std::invalid_argument("FftPlan: size must be positive");
  std::lock_guard lock(planner_mutex());
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  const int len = static_cast<int>(n);
  const unsigned flags = g_planning == FftPlanning::Estimate ? FFTW_ESTIMATE : FFTW_MEASURE;
  forward_ = fftw_plan_dft_1d(len, buf, buf, FFTW_FORWARD, flags);
  backward_ = fftw_plan_dft_1d(len, buf, buf, FFTW_BACKWARD, flags);
  fftw_free(buf);
  if (!forward_ || !backward_) throw std::runtime_error("FftPlan: FFTW planning failed");
}

FftPlan::~FftPlan() {
  if (!forward_ && !backward_) return;
  std::lock_guard lock(planner_mutex());
  if (forward_) fftw_destroy_plan(static_cast<fftw_plan>(forward_));
  if (backward_) fftw_destroy_plan(static_cast<fftw_plan>(backward_));
}

FftPlan::FftPlan(FftPlan&& other) noexcept
    : n_(other.n_),
      forward_(std::exchange(other.forward_, nullptr)),
      backward_(std::exchange(other.backward_, nullptr)) {}

FftPlan& FftPlan::operator=(FftPlan&& other) noexcept {
  if (this != &other) {
    std::swap(n_, other.n_);
    std::swap(forward_, other.forward_);
    std::swap(backward_, other.backward_);
  }
  return *this;
}

void FftPlan::forward(std::span<cplx> data) const {
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(static_cast<fftw_plan>(forward_), p, p);
}

void FftPlan::backward(std::span<cplx> data) const {
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(static_cast<fftw_plan>(backward_), p, p);
}

}  // namespace vibctl
