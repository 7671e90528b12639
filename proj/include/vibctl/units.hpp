#pragma once

#include <numbers>

// Atomic units are used internally (hbar = m_e = 1). Inputs and outputs are
// in fs, cm^-1, Angstrom and amu.
namespace vibctl::units {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kFsPerAu = 0.02418884326585747;
inline constexpr double kCmPerHartree = 219474.6313632;
inline constexpr double kAngstromPerBohr = 0.529177210903;
inline constexpr double kAuMassPerAmu = 1822.888486209;
inline constexpr double kSpeedOfLightCmPerFs = 2.99792458e-5;

constexpr double fs_to_au(double t) { return t / kFsPerAu; }
constexpr double au_to_fs(double t) { return t * kFsPerAu; }
constexpr double cm_to_hartree(double e) { return e / kCmPerHartree; }
constexpr double hartree_to_cm(double e) { return e * kCmPerHartree; }
constexpr double angstrom_to_bohr(double r) { return r / kAngstromPerBohr; }
constexpr double bohr_to_angstrom(double r) { return r * kAngstromPerBohr; }
constexpr double amu_to_au(double m) { return m * kAuMassPerAmu; }

/// Angular frequency (rad/fs) of a wavenumber (cm^-1).
constexpr double cm_to_rad_per_fs(double nu) { return 2.0 * kPi * kSpeedOfLightCmPerFs * nu; }

/// Oscillation period (fs) of a wavenumber (cm^-1).
constexpr double cm_to_period_fs(double nu) { return 1.0 / (kSpeedOfLightCmPerFs * nu); }

/// Vacuum wavelength (nm) to wavenumber (cm^-1).
constexpr double nm_to_cm(double lambda_nm) { return 1.0e7 / lambda_nm; }

}  // namespace vibctl::units
