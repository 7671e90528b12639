#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

namespace vibctl {

/// Uniform time grid t_k = t_start + k dt, k = 0..steps (fs).
struct TimeGrid {
  double t_start = 0.0;
  double dt = 0.1;
  std::size_t steps = 0;

  /// Grid spanning [t0, t1] exactly with a step as close as possible to dt_nominal.
  static TimeGrid from_span(double t0, double t1, double dt_nominal);

  double t_end() const { return t_start + dt * static_cast<double>(steps); }
  double time(std::size_t k) const { return t_start + dt * static_cast<double>(k); }
  std::size_t points() const { return steps + 1; }
  /// Nearest grid index to t (clamped).
  std::size_t nearest(double t) const;
  void validate() const;
};

/// Real dimensionless envelope f(t) sampled on a TimeGrid. The interaction is
/// -V_alpha(r) f(t)^2 / 4.
struct ControlField {
  TimeGrid grid;
  std::vector<double> values;

  ControlField() = default;
  explicit ControlField(const TimeGrid& g) : grid(g), values(g.points(), 0.0) {}
  ControlField(const TimeGrid& g, std::vector<double> f);

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t k) const { return values[k]; }
  double& operator[](std::size_t k) { return values[k]; }

  /// Trapezoid integral of f^2 in fs.
  double fluence() const;
  void validate() const;
  void write_csv(std::ostream& os) const;
};

/// Adds a Gaussian intensity lobe f^2 = peak * exp(-4 ln2 (t - center)^2 / fwhm^2)
/// (f itself is the square root, with the given sign).
void add_gaussian_lobe(ControlField& field, double center_fs, double fwhm_fs, double fluence,
                       double sign = 1.0);

}  // namespace vibctl
