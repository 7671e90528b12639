#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <vector>

#include "json.hpp"
#include "vibctl/control_field.hpp"

// Three-state (v+1, v, v-1) model of a train of impulsive Raman kicks.
namespace vibctl::impulsive {

using State = Eigen::Vector3cd;  ///< (C_{v+1}, C_v, C_{v-1})
using StepMatrix = Eigen::Matrix3cd;

/// Sign of the kick strength for a Raman pi train, a_n = kKickSign * pi / (2N).
/// Negative because <v+1|V_alpha|v> < 0 with innermost-lobe-positive eigenvectors.
inline constexpr double kKickSign = -1.0;

/// Free propagation over one interval followed by the kick exp(i R_n), with
/// A+- = (+-1 + cos(sqrt2 a))/2 and B = sin(sqrt2 a)/sqrt2.
StepMatrix step_matrix(double a, double phi, double phi_tilde);

/// Reduces an angle to (-pi, pi].
double wrap_phase(double x);

/// Interval phases Phi = omega_{v+1,v} dtau, Phi~ = omega_{v,v-1} dtau and their
/// residuals delta = Phi - 2pi, delta~ = Phi~ - 2pi reduced to (-pi, pi].
struct PhaseLedger {
  std::vector<double> phi, phi_tilde, delta, delta_tilde;

  static PhaseLedger from_times(const std::vector<double>& times_fs, double t_initial_fs,
                                double omega_upper_cm, double omega_lower_cm);
};

struct PulseTrainSpec {
  std::vector<double> times;  ///< tau_n (fs), strictly increasing
  std::vector<double> kicks;  ///< a_n (rad)
  double t_initial = 0.0;     ///< time of the initial state (fs)
  double omega_upper_cm = 0.0;  ///< omega_{v+1,v}
  double omega_lower_cm = 0.0;  ///< omega_{v,v-1}
  int anchor_level = 30;

  /// N pulses at tau_n = t_initial + n * interval, all with kick a.
  static PulseTrainSpec regular(std::size_t n, double interval_fs, double a, double omega_upper_cm,
                                double omega_lower_cm, double t_initial = 0.0);
  void validate() const;
  PhaseLedger ledger() const;
};

void to_json(nlohmann::json& j, const PulseTrainSpec& s);
void from_json(const nlohmann::json& j, PulseTrainSpec& s);

/// States immediately after each pulse (size N).
std::vector<State> run_train(const PulseTrainSpec& spec, const State& initial);

struct PerturbativePopulations {
  double upper;  ///< P_{v+1}(tau_n)
  double lower;  ///< P_{v-1}(tau_n)
};

/// Lowest-order populations after pulse n (1-based) starting from (0,1,0):
/// C_{v+1} = sum_j a_j prod_{k>j} e^{-i delta_k}, C_{v-1} = sum_j a_j prod_{k>j} e^{+i delta~_k}.
PerturbativePopulations perturbative_population(const PulseTrainSpec& spec, std::size_t n);

/// Initial state (|C_{v+1}| e^{-i theta}, |C_v|, |C_{v-1}| e^{i theta~}).
State phased_state(const Eigen::Vector3d& moduli, double theta, double theta_tilde);

/// Mean of |<psi0|psi(tau_n)>|^2 over the post-pulse times.
double mean_fidelity(const PulseTrainSpec& spec, const State& initial);

struct ContourMap {
  std::vector<double> theta, theta_tilde;
  Eigen::MatrixXd value;  ///< value(i, j) at (theta[i], theta_tilde[j])

  double max() const { return value.maxCoeff(); }
  /// Maximum within a square window of half-width w around (t0, tt0), angles wrapped.
  double max_near(double t0, double tt0, double w) const;
  void write_csv(std::ostream& os) const;
};

/// n equally spaced angles on [-pi, pi).
std::vector<double> angle_grid(std::size_t n);

/// <F>(theta, theta~) map; rows are computed on `jobs` worker threads.
ContourMap f_contour(const Eigen::Vector3d& moduli, const PulseTrainSpec& spec,
                     const std::vector<double>& theta, const std::vector<double>& theta_tilde,
                     std::size_t jobs = 1);

/// a = (<v'|V_alpha|v> / 4) int dt e^{i omega (t - tau)} f(t)^2 in atomic units
/// (omega = omega_{v'v}); returns the complex integral scaled by the element.
std::complex<double> kick_strength(const ControlField& field, double tau_fs, double element_au,
                                   double omega_cm);
/// Same over the samples with index in [first, last].
std::complex<double> kick_strength(const ControlField& field, std::size_t first, std::size_t last,
                                   double tau_fs, double element_au, double omega_cm);

/// Real kick strength of a pulse envelope centred at tau. Sets `impulsive` to false when
/// the intensity FWHM exceeds a tenth of the vibrational period.
double kick_strength_from_pulse(const ControlField& pulse, double tau_fs, double element_au,
                                double omega_cm, bool* impulsive = nullptr);

}  // namespace vibctl::impulsive
