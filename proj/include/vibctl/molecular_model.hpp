#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "vibctl/units.hpp"

namespace vibctl {

/// Uniform periodic radial grid, r_i = r_min + i * spacing for i < n_points.
class SpatialGrid {
 public:
  SpatialGrid() = default;
  SpatialGrid(double r_min_angstrom, double r_max_angstrom, std::size_t n_points);

  double r_min() const { return r_min_; }
  double r_max() const { return r_max_; }
  std::size_t size() const { return n_; }
  double spacing() const { return (r_max_ - r_min_) / static_cast<double>(n_); }
  double spacing_bohr() const { return units::angstrom_to_bohr(spacing()); }
  double position(std::size_t i) const { return r_min_ + spacing() * static_cast<double>(i); }
  std::vector<double> positions() const;
  /// Momentum grid (bohr^-1) in FFT order.
  std::vector<double> momenta() const;

  bool operator==(const SpatialGrid&) const = default;

 private:
  double r_min_ = 0.0;
  double r_max_ = 1.0;
  std::size_t n_ = 1;
};

/// Morse potential V(r) = T_e + D_e (1 - exp(-a (r - r_e)))^2.
struct MorseParams {
  double de_cm = 0.0;           ///< well depth D_e
  double a_per_angstrom = 0.0;  ///< range parameter a
  double re_angstrom = 0.0;     ///< equilibrium distance r_e
  double te_cm = 0.0;           ///< electronic term energy T_e

  /// Morse parameters from spectroscopic constants (omega_e, omega_e x_e) in cm^-1.
  static MorseParams from_spectroscopic(double we_cm, double wexe_cm, double re_angstrom,
                                        double te_cm, double mass_au);

  void validate() const;
  double omega_e_cm(double mass_au) const;
  double omega_e_xe_cm(double mass_au) const;
  /// Analytic level energy above the well bottom, omega_e (v+1/2) - omega_e x_e (v+1/2)^2.
  double level_energy_cm(int v, double mass_au) const;
  /// Number of bound levels of the untruncated Morse well.
  int bound_level_count(double mass_au) const;
  /// Potential above the well bottom (T_e excluded), in Hartree.
  double potential_hartree(double r_angstrom) const;
};

/// Fits the B-state Morse well to two adjacent vibrational spacings
/// omega_{v+1,v} (upper) and omega_{v,v-1} (lower) around level v.
MorseParams build_b_state_morse(double spacing_upper_cm, double spacing_lower_cm, double mass_au,
                                int anchor_level = 30, double re_angstrom = 3.024,
                                double te_cm = 0.0);

/// Linear polarizability interaction V_alpha(r) = V0 (1 + k (r - r_e)), V0 in Hartree.
struct PolarizabilityModel {
  double v0_au = 1.3e-3;
  double slope_per_angstrom = 1.0;
  double re_angstrom = 3.024;

  double operator()(double r_angstrom) const {
    return v0_au * (1.0 + slope_per_angstrom * (r_angstrom - re_angstrom));
  }
};

/// Vibrational eigenpairs of a grid Hamiltonian. Energies in Hartree (above
/// the potential minimum); eigenvectors are real, unit-normalized grid vectors
/// (sum_i |c_i|^2 = 1), one per column.
struct Eigensystem {
  SpatialGrid grid;
  std::vector<double> energies;
  Eigen::MatrixXd vectors;

  std::size_t levels() const { return energies.size(); }
  double energy_cm(std::size_t v) const { return units::hartree_to_cm(energies.at(v)); }
  /// omega_{v',v} in cm^-1.
  double spacing_cm(std::size_t upper, std::size_t lower) const {
    return energy_cm(upper) - energy_cm(lower);
  }
  /// T_{v+1,v} = 2 pi / omega_{v+1,v} in fs.
  double period_fs(std::size_t upper, std::size_t lower) const {
    return units::cm_to_period_fs(spacing_cm(upper, lower));
  }
  Eigen::VectorXd level(std::size_t v) const { return vectors.col(static_cast<Eigen::Index>(v)); }
  void write_csv(std::ostream& os) const;
};

/// Fourier-grid Hamiltonian diagonalization on a periodic grid. The kinetic
/// matrix is the exact DFT kinetic operator used by the split-operator
/// propagator, so the eigenvectors are stationary states of the same discrete
/// Hamiltonian. Each eigenvector is signed so that its innermost lobe is positive.
Eigensystem eigensolve(const SpatialGrid& grid, const std::vector<double>& potential_hartree,
                       double mass_au, std::size_t n_levels);

/// <v'|V|v> by grid quadrature for a real grid function V.
double matrix_element(const Eigensystem& eigs, const std::vector<double>& function,
                      std::size_t v_bra, std::size_t v_ket);

/// <v'|V_alpha|v> in Hartree.
double raman_matrix_element(const Eigensystem& eigs, const PolarizabilityModel& pol,
                            std::size_t v_bra, std::size_t v_ket);

struct ModelConfig {
  SpatialGrid grid{2.1, 6.0, 512};
  double mass_amu = 63.45;
  MorseParams b_state;
  MorseParams x_state;
  PolarizabilityModel polarizability;
  double dipole = 1.0;  ///< Condon transition dipole (arbitrary units)
  std::size_t n_levels = 50;

  double mass_au() const { return units::amu_to_au(mass_amu); }
  /// Defaults: B state fitted to (69.15, 71.25) cm^-1 at v=30 with T_e
  /// calibrated for a 535 nm / 80 fs pump; X state 214.5 / 0.61 cm^-1 at 2.666 A.
  static ModelConfig defaults();
};

/// JSON block {"grid": {...}, "mass_amu", "b_state": {...}, "x_state": {...},
/// "polarizability": {...}, "dipole", "n_levels"}. Missing keys keep defaults.
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
ModelConfig load_model_config(const nlohmann::json& j);

/// Built model: potentials on the grid and the B-state eigensystem.
struct MolecularModel {
  ModelConfig config;
  std::vector<double> b_potential;     ///< Hartree, minimum at 0 (T_e excluded)
  std::vector<double> x_potential;     ///< Hartree, minimum at 0
  std::vector<double> polarizability;  ///< V_alpha(r_i), Hartree
  std::vector<double> dipole;          ///< mu_BX(r_i)
  Eigensystem b_levels;
  double x_ground_energy = 0.0;        ///< Hartree above X minimum
  Eigen::VectorXd x_ground_state;

  static MolecularModel build(const ModelConfig& config);

  double t_upper_fs(std::size_t v = 30) const { return b_levels.period_fs(v + 1, v); }
  double t_lower_fs(std::size_t v = 30) const { return b_levels.period_fs(v, v - 1); }
  /// Averaged period (T_{v+1,v} + T_{v,v-1}) / 2.
  double t_mean_fs(std::size_t v = 30) const { return 0.5 * (t_upper_fs(v) + t_lower_fs(v)); }
};

}  // namespace vibctl
