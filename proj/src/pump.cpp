#include "vibctl/pump.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "vibctl/control_field.hpp"
#include "vibctl/propagator.hpp"

namespace vibctl {

namespace {

constexpr std::complex<double> kI{0.0, 1.0};

// Fraction of the pump intensity outside [t0, t1].
double clipped_fraction(const ChirpedPulseSpec& spec, double t0, double t1) {
  const double s2 = spec.sigma_fs() * spec.sigma_fs();
  const double p = spec.chirp_fs2;
  // |eps|^2 = exp(-t^2 s2 / (s2^2 + p^2)) = exp(-t^2 / (2 tau^2))
  const double tau = std::sqrt((s2 * s2 + p * p) / (2.0 * s2));
  const double r = std::sqrt(2.0) * tau;
  return 0.5 * (std::erfc(t1 / r) + std::erfc(-t0 / r));
}

std::vector<std::complex<double>> frequency_coefficients(const MolecularModel& model,
                                                         const ChirpedPulseSpec& spec, double te_cm,
                                                         const std::vector<double>& mu) {
  const double e0 = units::cm_to_rad_per_fs(spec.omega0_cm() + units::hartree_to_cm(model.x_ground_energy));
  const double te = units::cm_to_rad_per_fs(te_cm);
  const double to_au = units::fs_to_au(1.0);
  std::vector<std::complex<double>> c(model.b_levels.levels());
  for (std::size_t v = 0; v < c.size(); ++v) {
    const double d = te + units::cm_to_rad_per_fs(model.b_levels.energy_cm(v)) - e0;
    c[v] = -kI * mu[v] * spec.amplitude * to_au * chirped_spectrum(spec, d);
  }
  return c;
}

double norm_of(const std::vector<std::complex<double>>& c) {
  double s = 0.0;
  for (const auto& x : c) s += std::norm(x);
  return s;
}

}  // namespace

double ChirpedPulseSpec::sigma_fs() const { return fwhm_fs / (2.0 * std::sqrt(std::log(2.0))); }

ChirpedPulseSpec ChirpedPulseSpec::with_chirp_sigma2(double phi2_sigma2, double lambda0_nm, double fwhm_fs) {
  ChirpedPulseSpec s;
  s.lambda0_nm = lambda0_nm;
  s.fwhm_fs = fwhm_fs;
  s.chirp_fs2 = phi2_sigma2 * s.sigma_fs() * s.sigma_fs();
  return s;
}

void ChirpedPulseSpec::validate() const {
  if (!(fwhm_fs > 0.0)) throw std::invalid_argument("ChirpedPulseSpec: width must be positive");
  if (!(lambda0_nm > 0.0)) throw std::invalid_argument("ChirpedPulseSpec: wavelength must be positive");
  if (!std::isfinite(chirp_fs2)) throw std::invalid_argument("ChirpedPulseSpec: chirp not finite");
  if (!(amplitude > 0.0)) throw std::invalid_argument("ChirpedPulseSpec: amplitude must be positive");
}

void to_json(nlohmann::json& j, const ChirpedPulseSpec& s) {
  j = {{"lambda0_nm", s.lambda0_nm},
       {"fwhm_fs", s.fwhm_fs},
       {"chirp_fs2", s.chirp_fs2},
       {"chirp_sigma2", s.chirp_sigma2()},
       {"amplitude_au", s.amplitude}};
}

void from_json(const nlohmann::json& j, ChirpedPulseSpec& s) {
  s.lambda0_nm = j.value("lambda0_nm", s.lambda0_nm);
  s.fwhm_fs = j.value("fwhm_fs", s.fwhm_fs);
  s.amplitude = j.value("amplitude_au", s.amplitude);
  if (j.contains("chirp_sigma2"))
    s.chirp_fs2 = j.at("chirp_sigma2").get<double>() * s.sigma_fs() * s.sigma_fs();
  else
    s.chirp_fs2 = j.value("chirp_fs2", s.chirp_fs2);
  s.validate();
}

std::complex<double> chirped_spectrum(const ChirpedPulseSpec& spec, double d) {
  const double sigma = spec.sigma_fs();
  return std::sqrt(2.0 * units::kPi) * sigma * std::exp(-0.5 * sigma * sigma * d * d) *
         std::exp(kI * (0.5 * spec.chirp_fs2 * d * d));
}

std::complex<double> chirped_envelope(const ChirpedPulseSpec& spec, double t) {
  const double sigma = spec.sigma_fs();
  const std::complex<double> s(sigma * sigma, -spec.chirp_fs2);
  return sigma / std::sqrt(s) * std::exp(-t * t / (2.0 * s));
}

std::size_t InitialState::dominant_level() const {
  std::size_t best = 0;
  for (std::size_t v = 1; v < coefficients.size(); ++v)
    if (std::norm(coefficients[v]) > std::norm(coefficients[best])) best = v;
  return best;
}

void InitialState::write_coefficients_csv(std::ostream& os) const {
  os << "v,re_C,im_C,abs_C,theta_rad\n";
  os.precision(12);
  for (std::size_t v = 0; v < coefficients.size(); ++v)
    os << v << ',' << coefficients[v].real() << ',' << coefficients[v].imag() << ',' << modulus(v)
       << ',' << theta(v) << '\n';
}

double pump_detuning(const MolecularModel& model, const ChirpedPulseSpec& spec, std::size_t v) {
  return units::cm_to_rad_per_fs(model.config.b_state.te_cm + model.b_levels.energy_cm(v) -
                                 units::hartree_to_cm(model.x_ground_energy) - spec.omega0_cm());
}

std::vector<double> transition_elements(const MolecularModel& model) {
  const auto& e = model.b_levels;
  std::vector<double> mu(e.levels());
  for (std::size_t v = 0; v < mu.size(); ++v) {
    const auto c = e.vectors.col(static_cast<Eigen::Index>(v));
    double s = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i)
      s += c[i] * model.dipole[static_cast<std::size_t>(i)] * model.x_ground_state[i];
    mu[v] = s;
  }
  return mu;
}

ComplexVector reconstruct(const std::vector<std::complex<double>>& coefficients, const Eigensystem& eigs) {
  if (coefficients.size() > eigs.levels()) throw std::invalid_argument("reconstruct: too many coefficients");
  ComplexVector psi(eigs.grid.size());
  for (std::size_t v = 0; v < coefficients.size(); ++v) {
    const auto c = eigs.vectors.col(static_cast<Eigen::Index>(v));
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] += coefficients[v] * c[static_cast<Eigen::Index>(i)];
  }
  return psi;
}

InitialState decompose(std::span<const cplx> psi, const Eigensystem& eigs, bool strict, double max_residual) {
  if (psi.size() != eigs.grid.size()) throw std::invalid_argument("decompose: grid size mismatch");
  InitialState s;
  s.coefficients.resize(eigs.levels());
  double captured = 0.0;
  for (std::size_t v = 0; v < eigs.levels(); ++v) {
    s.coefficients[v] = inner(eigs.level(v), psi);
    captured += std::norm(s.coefficients[v]);
  }
  const double total = norm_squared(psi);
  s.residual = std::max(0.0, total - captured);
  s.psi.assign(psi.begin(), psi.end());
  s.excited_norm = total;
  if (strict && s.residual > max_residual)
    throw std::runtime_error("decompose: residual norm outside the tracked levels exceeds limit");
  return s;
}

InitialState prepare_initial_state(const MolecularModel& model, const ChirpedPulseSpec& spec,
                                   const PumpWindow& window, PumpMethod method) {
  spec.validate();
  if (!(window.t_final > window.t_initial)) throw std::invalid_argument("pump window is empty");
  const auto mu = transition_elements(model);
  InitialState out;

  if (method == PumpMethod::Frequency) {
    out.coefficients = frequency_coefficients(model, spec, model.config.b_state.te_cm, mu);
  } else {
    if (clipped_fraction(spec, window.t_initial, window.t_final) > 1e-4)
      throw std::runtime_error("pump window clips more than 1e-4 of the pulse fluence");
    const double te = units::cm_to_hartree(model.config.b_state.te_cm);
    const double delta = te - units::cm_to_hartree(spec.omega0_cm()) - model.x_ground_energy;
    Hamiltonian h;
    h.grid = model.config.grid;
    h.mass_au = model.config.mass_au();
    h.potential = model.b_potential;
    for (auto& v : h.potential) v += delta;
    const auto g = TimeGrid::from_span(window.t_initial, window.t_final, window.dt);
    const SplitStepper st(h, g.dt);
    const std::size_t n = h.grid.size();
    std::vector<double> source(n);
    for (std::size_t i = 0; i < n; ++i)
      source[i] = model.dipole[i] * model.x_ground_state[static_cast<Eigen::Index>(i)];
    const double half = 0.5 * units::fs_to_au(g.dt);
    ComplexVector chi(n);
    auto add = [&](std::size_t k) {
      const std::complex<double> e = -kI * half * spec.amplitude * chirped_envelope(spec, g.time(k));
      for (std::size_t i = 0; i < n; ++i) chi[i] += e * source[i];
    };
    for (std::size_t k = 0; k < g.steps; ++k) {
      add(k);
      st.step(chi, 0.0, 0.0);
      add(k + 1);
    }
    const double t0 = units::fs_to_au(g.t_end());
    out.coefficients.resize(model.b_levels.levels());
    for (std::size_t v = 0; v < out.coefficients.size(); ++v)
      out.coefficients[v] =
          std::exp(kI * ((model.b_levels.energies[v] + delta) * t0)) * inner(model.b_levels.level(v), chi);
  }

  out.excited_norm = norm_of(out.coefficients);
  if (!(out.excited_norm > 0.0)) throw std::runtime_error("pump excites nothing");
  if (out.excited_norm >= 0.01) throw std::runtime_error("pump too strong for first-order treatment");
  const double scale = 1.0 / std::sqrt(out.excited_norm);
  for (auto& c : out.coefficients) c *= scale;
  out.psi = reconstruct(out.coefficients, model.b_levels);
  return out;
}

double calibrate_te(const ModelConfig& config, const ChirpedPulseSpec& spec, std::size_t anchor) {
  const auto model = MolecularModel::build(config);
  if (anchor == 0 || anchor + 1 >= model.b_levels.levels())
    throw std::invalid_argument("calibrate_te: anchor level out of range");
  const auto mu = transition_elements(model);
  auto gap = [&](double te) {
    const auto c = frequency_coefficients(model, spec, te, mu);
    return std::norm(c[anchor - 1]) - std::norm(c[anchor + 1]);
  };
  const double centre = spec.omega0_cm() + units::hartree_to_cm(model.x_ground_energy) -
                        model.b_levels.energy_cm(anchor);
  double lo = centre - 60.0, hi = centre + 60.0;
  double glo = gap(lo), ghi = gap(hi);
  if (glo * ghi > 0.0) throw std::runtime_error("calibrate_te: no sign change in bracket");
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double gm = gap(mid);
    if ((gm < 0.0) == (glo < 0.0)) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace vibctl
