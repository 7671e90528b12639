#include "vibctl/impulsive.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "vibctl/parallel.hpp"
#include "vibctl/units.hpp"

namespace vibctl::impulsive {

namespace {
constexpr std::complex<double> kI{0.0, 1.0};
constexpr double kTwoPi = 2.0 * units::kPi;
}  // namespace

StepMatrix step_matrix(double a, double phi, double phi_tilde) {
  if (!std::isfinite(a) || !std::isfinite(phi) || !std::isfinite(phi_tilde))
    throw std::invalid_argument("step_matrix: non-finite input");
  const double s = std::sqrt(2.0) * a;
  const double ap = 0.5 * (1.0 + std::cos(s));
  const double am = 0.5 * (-1.0 + std::cos(s));
  const double b = std::sin(s) / std::sqrt(2.0);
  const auto e = std::exp(-kI * phi);
  const auto et = std::exp(kI * phi_tilde);
  StepMatrix m;
  m << ap * e, kI * b, am * et,
       kI * b * e, ap + am, kI * b * et,
       am * e, kI * b, ap * et;
  return m;
}

double wrap_phase(double x) {
  double y = std::fmod(x, kTwoPi);
  if (y <= -units::kPi) y += kTwoPi;
  if (y > units::kPi) y -= kTwoPi;
  return y;
}

PhaseLedger PhaseLedger::from_times(const std::vector<double>& times_fs, double t_initial_fs,
                                    double omega_upper_cm, double omega_lower_cm) {
  PhaseLedger l;
  const double wu = units::cm_to_rad_per_fs(omega_upper_cm);
  const double wl = units::cm_to_rad_per_fs(omega_lower_cm);
  double prev = t_initial_fs;
  for (double t : times_fs) {
    const double dt = t - prev;
    l.phi.push_back(wu * dt);
    l.phi_tilde.push_back(wl * dt);
    l.delta.push_back(wrap_phase(wu * dt - kTwoPi));
    l.delta_tilde.push_back(wrap_phase(wl * dt - kTwoPi));
    prev = t;
  }
  return l;
}

PulseTrainSpec PulseTrainSpec::regular(std::size_t n, double interval_fs, double a,
                                       double omega_upper_cm, double omega_lower_cm,
                                       double t_initial) {
  PulseTrainSpec s;
  s.t_initial = t_initial;
  s.omega_upper_cm = omega_upper_cm;
  s.omega_lower_cm = omega_lower_cm;
  for (std::size_t i = 1; i <= n; ++i) {
    s.times.push_back(t_initial + interval_fs * static_cast<double>(i));
    s.kicks.push_back(a);
  }
  return s;
}

void PulseTrainSpec::validate() const {
  if (times.size() != kicks.size()) throw std::invalid_argument("PulseTrainSpec: times/kicks size mismatch");
  double prev = t_initial;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] > prev) && !(i == 0 && times[i] == prev))
      throw std::invalid_argument("PulseTrainSpec: delays must be strictly increasing");
    if (!(std::abs(kicks[i]) < units::kPi)) throw std::invalid_argument("PulseTrainSpec: |a_n| must be below pi");
    prev = times[i];
  }
  if (!(omega_upper_cm > 0.0) || !(omega_lower_cm > 0.0))
    throw std::invalid_argument("PulseTrainSpec: spacings must be positive");
}

PhaseLedger PulseTrainSpec::ledger() const {
  return PhaseLedger::from_times(times, t_initial, omega_upper_cm, omega_lower_cm);
}

void to_json(nlohmann::json& j, const PulseTrainSpec& s) {
  j = {{"times_fs", s.times},
       {"kicks", s.kicks},
       {"t_initial_fs", s.t_initial},
       {"omega_upper_cm", s.omega_upper_cm},
       {"omega_lower_cm", s.omega_lower_cm},
       {"anchor_level", s.anchor_level}};
}

void from_json(const nlohmann::json& j, PulseTrainSpec& s) {
  s.times = j.at("times_fs").get<std::vector<double>>();
  s.kicks = j.at("kicks").get<std::vector<double>>();
  s.t_initial = j.value("t_initial_fs", 0.0);
  s.omega_upper_cm = j.at("omega_upper_cm").get<double>();
  s.omega_lower_cm = j.at("omega_lower_cm").get<double>();
  s.anchor_level = j.value("anchor_level", 30);
  s.validate();
}

std::vector<State> run_train(const PulseTrainSpec& spec, const State& initial) {
  spec.validate();
  const auto l = spec.ledger();
  std::vector<State> out;
  out.reserve(spec.times.size());
  State psi = initial;
  for (std::size_t n = 0; n < spec.times.size(); ++n) {
    psi = step_matrix(spec.kicks[n], l.phi[n], l.phi_tilde[n]) * psi;
    out.push_back(psi);
  }
  return out;
}

PerturbativePopulations perturbative_population(const PulseTrainSpec& spec, std::size_t n) {
  spec.validate();
  if (n == 0 || n > spec.times.size()) throw std::out_of_range("perturbative_population: pulse index");
  const auto l = spec.ledger();
  std::complex<double> up = 0.0, lo = 0.0;
  // Accumulate backwards so the phase products are built incrementally.
  std::complex<double> pu = 1.0, pl = 1.0;
  for (std::size_t j = n; j-- > 0;) {
    up += spec.kicks[j] * pu;
    lo += spec.kicks[j] * pl;
    pu *= std::exp(-kI * l.delta[j]);
    pl *= std::exp(kI * l.delta_tilde[j]);
  }
  return {std::norm(up), std::norm(lo)};
}

State phased_state(const Eigen::Vector3d& moduli, double theta, double theta_tilde) {
  const double n = moduli.norm();
  if (!(n > 0.0)) throw std::invalid_argument("phased_state: zero coefficients");
  State s;
  s << moduli[0] / n * std::exp(-kI * theta), moduli[1] / n, moduli[2] / n * std::exp(kI * theta_tilde);
  return s;
}

double mean_fidelity(const PulseTrainSpec& spec, const State& initial) {
  const auto states = run_train(spec, initial);
  if (states.empty()) return 1.0;
  double s = 0.0;
  for (const auto& psi : states) s += std::norm(initial.dot(psi));
  return s / static_cast<double>(states.size());
}

std::vector<double> angle_grid(std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = -units::kPi + kTwoPi * static_cast<double>(i) / static_cast<double>(n);
  return g;
}

double ContourMap::max_near(double t0, double tt0, double w) const {
  double best = -1.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (std::abs(wrap_phase(theta[i] - t0)) > w) continue;
    for (std::size_t j = 0; j < theta_tilde.size(); ++j) {
      if (std::abs(wrap_phase(theta_tilde[j] - tt0)) > w) continue;
      best = std::max(best, value(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
  return best;
}

void ContourMap::write_csv(std::ostream& os) const {
  os << "theta_rad,theta_tilde_rad,F\n";
  os.precision(10);
  for (std::size_t i = 0; i < theta.size(); ++i)
    for (std::size_t j = 0; j < theta_tilde.size(); ++j)
      os << theta[i] << ',' << theta_tilde[j] << ','
         << value(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) << '\n';
}

ContourMap f_contour(const Eigen::Vector3d& moduli, const PulseTrainSpec& spec,
                     const std::vector<double>& theta, const std::vector<double>& theta_tilde,
                     std::size_t jobs) {
  spec.validate();
  ContourMap map;
  map.theta = theta;
  map.theta_tilde = theta_tilde;
  map.value.resize(static_cast<Eigen::Index>(theta.size()), static_cast<Eigen::Index>(theta_tilde.size()));
  const auto l = spec.ledger();
  std::vector<StepMatrix> steps;
  for (std::size_t n = 0; n < spec.times.size(); ++n)
    steps.push_back(step_matrix(spec.kicks[n], l.phi[n], l.phi_tilde[n]));
  parallel_for(theta.size(), jobs, [&](std::size_t i) {
    for (std::size_t j = 0; j < theta_tilde.size(); ++j) {
      const State psi0 = phased_state(moduli, theta[i], theta_tilde[j]);
      State psi = psi0;
      double s = 0.0;
      for (const auto& m : steps) {
        psi = m * psi;
        s += std::norm(psi0.dot(psi));
      }
      map.value(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          steps.empty() ? 1.0 : s / static_cast<double>(steps.size());
    }
  });
  return map;
}

std::complex<double> kick_strength(const ControlField& field, std::size_t first, std::size_t last,
                                   double tau_fs, double element_au, double omega_cm) {
  if (first > last || last >= field.size()) throw std::out_of_range("kick_strength: window");
  const double w = units::cm_to_rad_per_fs(omega_cm);
  std::complex<double> s = 0.0;
  for (std::size_t k = first; k <= last; ++k) {
    const double weight = (k == first || k == last) && first != last ? 0.5 : 1.0;
    const double f = field[k];
    s += weight * f * f * std::exp(kI * (w * (field.grid.time(k) - tau_fs)));
  }
  return element_au / 4.0 * units::fs_to_au(field.grid.dt) * s;
}

std::complex<double> kick_strength(const ControlField& field, double tau_fs, double element_au,
                                   double omega_cm) {
  return kick_strength(field, 0, field.size() - 1, tau_fs, element_au, omega_cm);
}

double kick_strength_from_pulse(const ControlField& pulse, double tau_fs, double element_au,
                                double omega_cm, bool* impulsive) {
  if (impulsive) {
    double peak = 0.0;
    for (double f : pulse.values) peak = std::max(peak, f * f);
    std::size_t above = 0;
    for (double f : pulse.values)
      if (f * f >= 0.5 * peak && peak > 0.0) ++above;
    const double fwhm = static_cast<double>(above) * pulse.grid.dt;
    *impulsive = fwhm <= 0.1 * units::cm_to_period_fs(omega_cm);
  }
  return kick_strength(pulse, tau_fs, element_au, omega_cm).real();
}

}  // namespace vibctl::impulsive
