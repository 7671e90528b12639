#include "vibctl/control_field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace vibctl {

TimeGrid TimeGrid::from_span(double t0, double t1, double dt_nominal) {
  if (!(t1 > t0)) throw std::invalid_argument("TimeGrid: t_end must exceed t_start");
  if (!(dt_nominal > 0.0)) throw std::invalid_argument("TimeGrid: dt must be positive");
  const auto n = std::max<long long>(1, std::llround((t1 - t0) / dt_nominal));
  TimeGrid g;
  g.t_start = t0;
  g.steps = static_cast<std::size_t>(n);
  g.dt = (t1 - t0) / static_cast<double>(n);
  return g;
}

std::size_t TimeGrid::nearest(double t) const {
  const double x = std::round((t - t_start) / dt);
  if (x <= 0.0) return 0;
  return std::min(steps, static_cast<std::size_t>(x));
}

void TimeGrid::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("TimeGrid: dt must be positive");
  if (steps == 0) throw std::invalid_argument("TimeGrid: at least one step required");
}

ControlField::ControlField(const TimeGrid& g, std::vector<double> f) : grid(g), values(std::move(f)) {
  validate();
}

double ControlField::fluence() const {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double f : values) s += f * f;
  s -= 0.5 * (values.front() * values.front() + values.back() * values.back());
  return s * grid.dt;
}

void ControlField::validate() const {
  grid.validate();
  if (values.size() != grid.points())
    throw std::invalid_argument("ControlField: sample count does not match time grid");
  for (double f : values)
    if (!std::isfinite(f)) throw std::invalid_argument("ControlField: non-finite sample");
}

void ControlField::write_csv(std::ostream& os) const {
  os << "t_fs,f\n";
  os.precision(12);
  for (std::size_t k = 0; k < values.size(); ++k) os << grid.time(k) << ',' << values[k] << '\n';
}

void add_gaussian_lobe(ControlField& field, double center_fs, double fwhm_fs, double fluence,
                       double sign) {
  if (!(fwhm_fs > 0.0)) throw std::invalid_argument("add_gaussian_lobe: width must be positive");
  const double c = 4.0 * std::numbers::ln2;
  const double peak = fluence / (fwhm_fs * std::sqrt(std::numbers::pi / c));
  const double s = sign < 0.0 ? -1.0 : 1.0;
  for (std::size_t k = 0; k < field.size(); ++k) {
    const double x = (field.grid.time(k) - center_fs) / fwhm_fs;
    const double i2 = peak * std::exp(-c * x * x);
    if (i2 < 1e-300) continue;
    // Lobes are assumed not to overlap; overlapping lobes add in intensity.
    const double prev = field.values[k];
    const double total = prev * prev + i2;
    field.values[k] = (prev < 0.0 || (prev == 0.0 && s < 0.0)) ? -std::sqrt(total) : std::sqrt(total);
  }
}

}  // namespace vibctl
