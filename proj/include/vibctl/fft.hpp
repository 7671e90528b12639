#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <new>
#include <span>
#include <vector>

namespace vibctl {

using cplx = std::complex<double>;

/// Allocator giving every buffer the same (64-byte) alignment, so a single
/// FFTW plan can be executed on any state vector.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using ComplexVector = std::vector<cplx, AlignedAllocator<cplx>>;

/// In-place 1D complex FFT pair (unnormalized) backed by FFTW.
/// Plans are created once; executing on distinct buffers is thread-safe.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);
  ~FftPlan();
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;
  FftPlan(FftPlan&&) noexcept;
  FftPlan& operator=(FftPlan&&) noexcept;

  std::size_t size() const { return n_; }
  void forward(std::span<cplx> data) const;
  void backward(std::span<cplx> data) const;

 private:
  std::size_t n_ = 0;
  void* forward_ = nullptr;
  void* backward_ = nullptr;
};

enum class FftPlanning { Measure, Estimate };

/// Planner used by plans created afterwards. Estimate always picks the same
/// algorithm, so results are bit-reproducible across runs; Measure is faster.
void set_fft_planning(FftPlanning mode);
FftPlanning fft_planning();

}  // namespace vibctl
