#pragma once

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <vector>

#include "json.hpp"
#include "vibctl/fft.hpp"
#include "vibctl/molecular_model.hpp"

namespace vibctl {

/// Weak linearly chirped Gaussian pump. The spectrum is
/// E(w) = sqrt(2 pi) sigma exp(-sigma^2 (w - w0)^2 / 2) exp(i phi2 (w - w0)^2 / 2),
/// sigma = fwhm / (2 sqrt(ln 2)) for the transform-limited intensity FWHM.
struct ChirpedPulseSpec {
  double lambda0_nm = 535.0;
  double fwhm_fs = 80.0;
  double chirp_fs2 = 0.0;   ///< phi2
  double amplitude = 1e-6;  ///< peak field of the TL pulse (a.u.), weak-field

  double sigma_fs() const;
  double omega0_cm() const { return units::nm_to_cm(lambda0_nm); }
  /// Chirp expressed in units of sigma^2.
  double chirp_sigma2() const { return chirp_fs2 / (sigma_fs() * sigma_fs()); }
  static ChirpedPulseSpec with_chirp_sigma2(double phi2_sigma2, double lambda0_nm = 535.0,
                                            double fwhm_fs = 80.0);
  void validate() const;
};

void to_json(nlohmann::json& j, const ChirpedPulseSpec& s);
void from_json(const nlohmann::json& j, ChirpedPulseSpec& s);

/// Spectral amplitude at detuning (w - w0) in rad/fs, normalized to unit TL peak field.
std::complex<double> chirped_spectrum(const ChirpedPulseSpec& spec, double detuning_rad_per_fs);

/// Complex temporal envelope eps(t) (unit TL peak) with E(t) = eps(t) exp(-i w0 t).
std::complex<double> chirped_envelope(const ChirpedPulseSpec& spec, double t_fs);

/// Coefficients over the B-state levels: psi0 = sum_v C_v |v> with C_v = |C_v| e^{-i theta_v}.
struct InitialState {
  std::vector<std::complex<double>> coefficients;
  ComplexVector psi;          ///< normalized grid state
  double excited_norm = 0.0;  ///< <psi_B|psi_B> before normalization
  double residual = 0.0;      ///< norm outside the tracked levels (decompose only)

  double population(std::size_t v) const { return std::norm(coefficients.at(v)); }
  double modulus(std::size_t v) const { return std::abs(coefficients.at(v)); }
  double theta(std::size_t v) const { return -std::arg(coefficients.at(v)); }
  /// theta = theta_{v+1} - theta_v and theta~ = theta_v - theta_{v-1}.
  double theta_upper(std::size_t v) const { return theta(v + 1) - theta(v); }
  double theta_lower(std::size_t v) const { return theta(v) - theta(v - 1); }
  std::size_t dominant_level() const;
  void write_coefficients_csv(std::ostream& os) const;
};

struct PumpWindow {
  double t_initial = -300.0;  ///< fs
  double t_final = 300.0;     ///< fs; psi(t0) = exp(-i H t0) psi0
  double dt = 0.1;
};

enum class PumpMethod { Frequency, Time };

/// Detuning Delta_v = T_e + E_v - E_X0 - w0 of level v, in rad/fs.
double pump_detuning(const MolecularModel& model, const ChirpedPulseSpec& spec, std::size_t v);

/// <v|mu|0_X> for every tracked level.
std::vector<double> transition_elements(const MolecularModel& model);

/// First-order B-state wave packet referenced to the pump centre (t = 0).
/// Frequency path: C_v = -i <v|mu|0_X> E(Delta_v).
/// Time path: rotating-frame grid propagation with H_B + Delta and a trapezoid
/// source over the window, then C_v = exp(i (E_v + Delta) t0) <v|chi(t0)>.
InitialState prepare_initial_state(const MolecularModel& model, const ChirpedPulseSpec& spec,
                                   const PumpWindow& window = {},
                                   PumpMethod method = PumpMethod::Frequency);

/// C_v = <v|psi>; flags residual > max_residual by throwing when `strict`.
InitialState decompose(std::span<const cplx> psi, const Eigensystem& eigs, bool strict = true,
                       double max_residual = 0.01);
ComplexVector reconstruct(const std::vector<std::complex<double>>& coefficients, const Eigensystem& eigs);

/// T_e such that the first-order pump populations of v-1 and v+1 around `anchor` are equal.
double calibrate_te(const ModelConfig& config, const ChirpedPulseSpec& spec, std::size_t anchor = 30);

}  // namespace vibctl
