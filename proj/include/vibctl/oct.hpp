#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vibctl/control_field.hpp"
#include "vibctl/fft.hpp"
#include "vibctl/molecular_model.hpp"
#include "vibctl/propagator.hpp"

// Optimal control of the nonresonant envelope f(t): objective
// J = <psi(tf)|X|psi(tf)> + int dt <psi|Y(t)|psi>, with X = |phi><phi| and, for the
// deformation comb, Y(t) = |phi> y(t) <phi|.
namespace vibctl {

/// Evaluation-time comb y(t) = sum_n h exp(-(t - tau_n)^2 / d^2). The final time is
/// an implicit extra peak carried by X.
struct CombSchedule {
  std::vector<double> peaks;  ///< interior tau_n (fs), strictly increasing
  double width_fs = 8.5e-3;
  double height = 10.0;       ///< 1 / dt (fs^-1)
  double search_half_width_fs = 0.0;  ///< refresh window; 0 disables refreshing

  /// Peaks at t0 + n period for n = 1..count.
  static CombSchedule regular(double t0, double period, std::size_t count);
  std::size_t count() const { return peaks.size(); }
  double y(double t_fs) const;
  void validate(const TimeGrid& grid) const;
  /// Grid indices of the peaks (nearest samples).
  std::vector<std::size_t> sample_indices(const TimeGrid& grid) const;
  /// Moves every peak to the argmax of `overlap` within +-search_half_width_fs,
  /// keeping the order and staying strictly inside the grid. Returns true if any moved.
  bool refresh(const TimeGrid& grid, const std::vector<double>& overlap);
};

void to_json(nlohmann::json& j, const CombSchedule& c);
void from_json(const nlohmann::json& j, CombSchedule& c);

/// Trapezoid integral of y(t) * overlap(t) over the grid.
double comb_quadrature(const CombSchedule& comb, const TimeGrid& grid, const std::vector<double>& overlap);

enum class TargetKind { FinalProjector, DeformationComb };

struct TargetSpec {
  TargetKind kind = TargetKind::FinalProjector;
  ComplexVector state;  ///< phi_target or psi0, normalized
  CombSchedule comb;    ///< DeformationComb only

  static TargetSpec final_projector(ComplexVector target);
  static TargetSpec deformation_comb(ComplexVector psi0, CombSchedule comb);
  void validate(const TimeGrid& grid) const;
};

/// |<phi|psi_k>|^2 for every time point of a propagation (the only quantity J needs).
using OverlapSeries = std::vector<double>;

/// J from the overlap series: overlap at tf plus the comb peak samples.
double evaluate_objective(const OverlapSeries& overlap, const TimeGrid& grid, const TargetSpec& target);

/// <F> = mean of |<psi0|psi(tau_n)>|^2 over the interior peaks and tf.
double deformation_metric(const OverlapSeries& overlap, const TimeGrid& grid, const CombSchedule& comb);

/// (e^{i theta}|v-1> + |v> + |v+1>) / sqrt 3 on the grid (v = 30 by default).
ComplexVector build_shaping_target(const Eigensystem& eigs, double theta, std::size_t v = 30);

struct ControlProblem {
  Hamiltonian hamiltonian;  ///< physical (gamma ignored; set per call)
  ComplexVector initial;    ///< psi(t0)
  TimeGrid grid;            ///< [t0, tf]
  TargetSpec target;
  double gamma = 0.0;       ///< penalty used in the design equations

  void validate() const;
};

struct Evaluation {
  double objective = 0.0;
  OverlapSeries overlap;
  ForwardTrajectory trajectory;  ///< checkpoints only if requested
};

/// Forward propagation with penalty gamma (0 for the physical dynamics).
Evaluation evaluate(const ControlProblem& problem, const ControlField& field, double gamma,
                    bool store_checkpoints = false, const StepObserver& extra = {});

struct GradientResult {
  double objective = 0.0;     ///< J with the gamma used
  std::vector<double> values; ///< dJ/df_k
  OverlapSeries overlap;
};

/// Exact derivative of the discrete objective with respect to every sample f_k:
/// g_k = -dt w'_k f_k Im((1 + i gamma) <xi_k|V_alpha|psi_k>), xi from the
/// inhomogeneous backward recursion. `forward` may be passed to skip the forward run.
GradientResult gradient(const ControlProblem& problem, const ControlField& field, double gamma,
                        const Evaluation* forward = nullptr);

enum class OptimizerMethod { Gradient, Krotov };

struct OptimizerOptions {
  OptimizerMethod method = OptimizerMethod::Gradient;
  std::size_t max_iterations = 500;
  double stall_tolerance = 1e-8;  ///< relative change of J
  std::size_t stall_window = 20;
  std::size_t memory = 8;         ///< L-BFGS pairs
  std::size_t max_backtracks = 15;
  double armijo = 1e-4;
  double initial_step = 0.05;     ///< first step as max |delta f| relative to max |f|
  double krotov_step = 1.0;       ///< 1 / lambda for the sequential update
  std::optional<double> stop_at_objective;
  std::function<void(std::size_t, double)> progress;  ///< (iteration, physical J)
};

void to_json(nlohmann::json& j, const OptimizerOptions& o);
void from_json(const nlohmann::json& j, OptimizerOptions& o);

struct IterationRecord {
  double objective = 0.0;         ///< physical J (gamma = 0)
  double design_objective = 0.0;  ///< J with gamma
  double fluence = 0.0;
  double step = 0.0;
  std::size_t backtracks = 0;
};

struct OptimizationReport {
  std::vector<IterationRecord> iterations;  ///< entry 0 is the initial field
  double final_objective = 0.0;
  double final_term = 0.0;  ///< <psi(tf)|X|psi(tf)>
  double fluence = 0.0;
  double raman_area = 0.0;  ///< set by callers that know the level pair
  double gradient_norm_initial = 0.0;
  double gradient_norm_final = 0.0;
  std::size_t iteration_count = 0;
  bool converged = false;
  std::string stop_reason;
  double gamma = 0.0;
  std::vector<double> comb_peaks;

  bool monotone() const;
};

void to_json(nlohmann::json& j, const IterationRecord& r);
void to_json(nlohmann::json& j, const OptimizationReport& r);

struct OptimizationResult {
  ControlField field;
  OptimizationReport report;
  TargetSpec target;  ///< with the refreshed comb
};

/// Monotone ascent on the penalized objective; a step is accepted only if the
/// physical objective (with refreshed comb) does not decrease either.
OptimizationResult optimize(const ControlProblem& problem, const ControlField& initial,
                            const OptimizerOptions& options = {});

/// 2 |(<v'|V_alpha|v> / 4) int dt e^{i w_{v'v} t} f(t)^2|: equals pi for a Raman pi train.
double raman_pulse_area(const ControlField& field, const MolecularModel& model, std::size_t v,
                        std::size_t v_prime);

double relative_fluence(const ControlField& field, const ControlField& reference);

/// Gaussian lobes of equal fluence at the given centres, scaled so that the Raman
/// area between v and v' (coherent sum at each centre) equals `area`.
ControlField seed_pulse_train(const TimeGrid& grid, const std::vector<double>& centres, double fwhm_fs,
                              double area, const MolecularModel& model, std::size_t v, std::size_t v_prime);

}  // namespace vibctl
