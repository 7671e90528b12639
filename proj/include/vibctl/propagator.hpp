#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "vibctl/control_field.hpp"
#include "vibctl/fft.hpp"
#include "vibctl/molecular_model.hpp"

namespace vibctl {

/// Grid wavefunction. Inner products are plain sums over grid points, so a
/// normalized state has sum_i |psi_i|^2 = 1.
struct WaveFunction {
  SpatialGrid grid;
  ComplexVector psi;
  double t = 0.0;  ///< fs

  WaveFunction() = default;
  WaveFunction(const SpatialGrid& g, ComplexVector amplitudes, double t_fs = 0.0);
  static WaveFunction from_real(const SpatialGrid& g, const Eigen::VectorXd& v, double t_fs = 0.0);

  double norm() const;
  void normalize();
};

cplx inner(std::span<const cplx> a, std::span<const cplx> b);
/// <a|diag(v)|b>
cplx inner(std::span<const cplx> a, std::span<const double> v, std::span<const cplx> b);
cplx inner(const Eigen::VectorXd& a, std::span<const cplx> b);
double norm_squared(std::span<const cplx> a);
ComplexVector to_complex(const Eigen::VectorXd& v);

/// Grid Hamiltonian H(t) = T + V(r) - c V_alpha(r) f(t)^2 / 4 with c = 1 + i gamma.
/// A positive gamma makes the coupling absorptive for V_alpha > 0.
struct Hamiltonian {
  SpatialGrid grid;
  double mass_au = 1.0;
  std::vector<double> potential;  ///< Hartree
  std::vector<double> coupling;   ///< V_alpha(r_i), Hartree
  double gamma = 0.0;

  static Hamiltonian from_model(const MolecularModel& m, double gamma = 0.0);
  void validate() const;
};

/// Strang split-operator stepper with the field sampled on grid times:
/// psi_{k+1} = D(f_{k+1}) K D(f_k) psi_k, D(f) = exp(-i V dt/2) exp(i c V_alpha f^2 dt/8),
/// K = exp(-i T dt).
class SplitStepper {
 public:
  SplitStepper(const Hamiltonian& h, double dt_fs);

  const Hamiltonian& hamiltonian() const { return h_; }
  double dt_fs() const { return dt_fs_; }
  std::size_t size() const { return h_.grid.size(); }

  /// One forward step from f_now to f_next.
  void step(std::span<cplx> psi, double f_now, double f_next) const;
  /// Applies the adjoint of the forward step (maps xi_{k+1} to xi_k).
  void step_adjoint(std::span<cplx> xi, double f_now, double f_next) const;

  void apply_half_potential(std::span<cplx> psi, double f, bool adjoint) const;
  void apply_kinetic(std::span<cplx> psi, bool adjoint) const;

 private:
  Hamiltonian h_;
  double dt_fs_;
  double dt_au_;
  FftPlan fft_;
  ComplexVector kinetic_;      // exp(-i k^2 dt / 2m) / N
  ComplexVector potential_;    // exp(-i V dt / 2)
  bool linear_coupling_ = false;
  double coupling_offset_ = 0.0;
  double coupling_slope_ = 0.0;  // per grid index
};

/// One Strang step for an arbitrary (possibly complex) total potential.
void split_step(std::span<cplx> psi, std::span<const cplx> v_total, const SpatialGrid& grid,
                double mass_au, double dt_fs);

/// Called with (k, psi_k) at every time point of a propagation.
using StepObserver = std::function<void(std::size_t, std::span<const cplx>)>;

/// Forward checkpoints: psi at k = 0, stride, 2 stride, ..., steps.
struct ForwardTrajectory {
  TimeGrid grid;
  std::size_t stride = 10;
  std::vector<ComplexVector> checkpoints;
  ComplexVector final_state;

  std::size_t checkpoint_index(std::size_t k) const { return k / stride; }
  /// States psi_k for k in [first, last] regenerated from the checkpoint at first.
  void regenerate(const SplitStepper& stepper, const ControlField& field, std::size_t first,
                  std::size_t last, std::vector<ComplexVector>& out) const;
};

struct PropagateOptions {
  std::size_t checkpoint_stride = 10;
  bool store_checkpoints = true;
  StepObserver observer;
};

/// Propagates psi0 across field.grid (steps forward in time).
ForwardTrajectory propagate(const ComplexVector& psi0, const ControlField& field,
                            const SplitStepper& stepper, const PropagateOptions& options = {});

/// Source of the backward equation: weights w_k = dt * y(t_k) (w_k >= 0) and the
/// operator action out = Y(t_k) psi_k.
struct SourceTerm {
  std::vector<double> weights;
  std::function<void(std::size_t, std::span<const cplx>, std::span<cplx>)> apply;

  bool active(std::size_t k) const { return k < weights.size() && weights[k] != 0.0; }
};

/// Called with (k, xi_k, psi_k) for k = steps down to 0.
using AdjointVisitor = std::function<void(std::size_t, std::span<const cplx>, std::span<const cplx>)>;

struct AdjointOptions {
  /// Record xi at every sample_stride-th step (0: do not record).
  std::size_t sample_stride = 0;
  AdjointVisitor visitor;
};

struct AdjointResult {
  std::vector<std::size_t> steps;
  std::vector<ComplexVector> states;
  ComplexVector initial;  ///< xi_0
};

/// Backward inhomogeneous recursion
/// xi_k = S_k^dagger [xi_{k+1} + (w_{k+1}/2) Y psi_{k+1}] + (w_k/2) Y psi_k, xi_steps = xi_final,
/// where S_k is the forward step and psi_k are regenerated from the forward checkpoints.
AdjointResult propagate_adjoint_inhomogeneous(const ComplexVector& xi_final,
                                              const ControlField& field,
                                              const SplitStepper& stepper,
                                              const ForwardTrajectory& forward,
                                              const SourceTerm& source,
                                              const AdjointOptions& options = {});

/// Records CSV rows (t fs, populations of levels, |<ref|psi>|^2, norm) every stride steps.
class TrajectoryRecorder {
 public:
  TrajectoryRecorder(const Eigensystem& eigs, std::vector<std::size_t> levels, ComplexVector reference,
                     const TimeGrid& grid, std::size_t stride);
  StepObserver observer();
  void write_csv(std::ostream& os) const;

  struct Row {
    double t;
    std::vector<double> populations;
    double overlap;
    double norm;
  };
  const std::vector<Row>& rows() const { return rows_; }

 private:
  const Eigensystem* eigs_;
  std::vector<std::size_t> levels_;
  ComplexVector reference_;
  TimeGrid grid_;
  std::size_t stride_;
  std::vector<Row> rows_;
};

}  // namespace vibctl
