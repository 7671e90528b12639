#include "vibctl/molecular_model.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace vibctl {

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Index of the first grid point whose amplitude exceeds 10% of the maximum.
Eigen::Index innermost_lobe(const Eigen::Ref<const Eigen::VectorXd>& c) {
  const double threshold = 0.1 * c.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < c.size(); ++i)
    if (std::abs(c[i]) > threshold) return i;
  return 0;
}

}  // namespace

SpatialGrid::SpatialGrid(double r_min_angstrom, double r_max_angstrom, std::size_t n_points)
    : r_min_(r_min_angstrom), r_max_(r_max_angstrom), n_(n_points) {
  if (!is_power_of_two(n_points))
    throw std::invalid_argument("SpatialGrid: n_points must be a power of two");
  if (!(r_min_angstrom < r_max_angstrom))
    throw std::invalid_argument("SpatialGrid: r_min must be below r_max");
}

std::vector<double> SpatialGrid::positions() const {
  std::vector<double> r(n_);
  for (std::size_t i = 0; i < n_; ++i) r[i] = position(i);
  return r;
}

std::vector<double> SpatialGrid::momenta() const {
  const double dk = 2.0 * units::kPi / (spacing_bohr() * static_cast<double>(n_));
  std::vector<double> k(n_);
  const auto half = static_cast<long>(n_ / 2);
  for (std::size_t i = 0; i < n_; ++i) {
    auto m = static_cast<long>(i);
    if (m >= half) m -= static_cast<long>(n_);
    k[i] = dk * static_cast<double>(m);
  }
  return k;
}

MorseParams MorseParams::from_spectroscopic(double we_cm, double wexe_cm, double re_angstrom,
                                            double te_cm, double mass_au) {
  if (!(we_cm > 0.0) || !(wexe_cm > 0.0))
    throw std::invalid_argument("Morse constants must be positive");
  MorseParams p;
  p.de_cm = we_cm * we_cm / (4.0 * wexe_cm);
  const double we = units::cm_to_hartree(we_cm);
  const double de = units::cm_to_hartree(p.de_cm);
  const double a_bohr = we * std::sqrt(mass_au / (2.0 * de));
  p.a_per_angstrom = a_bohr / units::kAngstromPerBohr;
  p.re_angstrom = re_angstrom;
  p.te_cm = te_cm;
  return p;
}

void MorseParams::validate() const {
  if (!(de_cm > 0.0)) throw std::invalid_argument("MorseParams: D_e must be positive");
  if (!(a_per_angstrom > 0.0)) throw std::invalid_argument("MorseParams: a must be positive");
  if (!(re_angstrom > 0.0)) throw std::invalid_argument("MorseParams: r_e must be positive");
}

double MorseParams::omega_e_cm(double mass_au) const {
  const double a_bohr = a_per_angstrom * units::kAngstromPerBohr;
  const double de = units::cm_to_hartree(de_cm);
  return units::hartree_to_cm(a_bohr * std::sqrt(2.0 * de / mass_au));
}

double MorseParams::omega_e_xe_cm(double mass_au) const {
  const double we = omega_e_cm(mass_au);
  return we * we / (4.0 * de_cm);
}

double MorseParams::level_energy_cm(int v, double mass_au) const {
  const double x = v + 0.5;
  return omega_e_cm(mass_au) * x - omega_e_xe_cm(mass_au) * x * x;
}

int MorseParams::bound_level_count(double mass_au) const {
  const double vmax = omega_e_cm(mass_au) / (2.0 * omega_e_xe_cm(mass_au)) - 0.5;
  return static_cast<int>(std::floor(vmax)) + 1;
}

double MorseParams::potential_hartree(double r_angstrom) const {
  const double e = 1.0 - std::exp(-a_per_angstrom * (r_angstrom - re_angstrom));
  return units::cm_to_hartree(de_cm) * e * e;
}

MorseParams build_b_state_morse(double spacing_upper_cm, double spacing_lower_cm, double mass_au,
                                int anchor_level, double re_angstrom, double te_cm) {
  if (!(spacing_upper_cm > 0.0) || !(spacing_lower_cm > 0.0))
    throw std::invalid_argument("build_b_state_morse: spacings must be positive");
  if (!(spacing_lower_cm > spacing_upper_cm))
    throw std::invalid_argument(
        "build_b_state_morse: lower spacing must exceed upper spacing (anharmonic ladder)");
  if (anchor_level < 1) throw std::invalid_argument("build_b_state_morse: anchor level must be >= 1");
  // omega_{v+1,v} = omega_e - 2 omega_e x_e (v+1)
  const double wexe = 0.5 * (spacing_lower_cm - spacing_upper_cm);
  const double we = spacing_upper_cm + 2.0 * wexe * (anchor_level + 1);
  return MorseParams::from_spectroscopic(we, wexe, re_angstrom, te_cm, mass_au);
}

void Eigensystem::write_csv(std::ostream& os) const {
  os << "v,energy_cm-1\n";
  os.precision(12);
  for (std::size_t v = 0; v < levels(); ++v) os << v << ',' << energy_cm(v) << '\n';
}

Eigensystem eigensolve(const SpatialGrid& grid, const std::vector<double>& potential_hartree,
                       double mass_au, std::size_t n_levels) {
  const std::size_t n = grid.size();
  if (potential_hartree.size() != n)
    throw std::invalid_argument("eigensolve: potential does not match grid");
  if (n_levels == 0 || n_levels >= n / 2)
    throw std::invalid_argument("eigensolve: n_levels must be positive and well below n_points");
  if (!(mass_au > 0.0)) throw std::invalid_argument("eigensolve: mass must be positive");
  for (double v : potential_hartree)
    if (!std::isfinite(v)) throw std::invalid_argument("eigensolve: non-finite potential");

  // Circulant kinetic row t[m] = (1/N) sum_k k^2/(2 mu) cos(2 pi j m / N).
  const auto k = grid.momenta();
  std::vector<double> row(n, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double phase = 2.0 * units::kPi * static_cast<double>((j * m) % n) / static_cast<double>(n);
      s += k[j] * k[j] * std::cos(phase);
    }
    row[m] = s / (2.0 * mass_au * static_cast<double>(n));
  }

  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd h(ni, ni);
  for (Eigen::Index i = 0; i < ni; ++i)
    for (Eigen::Index j = 0; j < ni; ++j)
      h(i, j) = row[static_cast<std::size_t>((i - j + ni) % ni)];
  for (Eigen::Index i = 0; i < ni; ++i) h(i, i) += potential_hartree[static_cast<std::size_t>(i)];

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigensolve: eigensolver failed");

  const double edge = std::min(potential_hartree.front(), potential_hartree.back());
  Eigensystem out;
  out.grid = grid;
  out.energies.resize(n_levels);
  out.vectors.resize(ni, static_cast<Eigen::Index>(n_levels));
  for (std::size_t v = 0; v < n_levels; ++v) {
    const auto col = static_cast<Eigen::Index>(v);
    const double e = solver.eigenvalues()[col];
    if (e >= edge)
      throw std::runtime_error("eigensolve: level " + std::to_string(v) +
                               " is not bound inside the grid");
    out.energies[v] = e;
    Eigen::VectorXd c = solver.eigenvectors().col(col);
    if (c[innermost_lobe(c)] < 0.0) c = -c;
    out.vectors.col(col) = c;
  }
  return out;
}

double matrix_element(const Eigensystem& eigs, const std::vector<double>& function,
                      std::size_t v_bra, std::size_t v_ket) {
  if (v_bra >= eigs.levels() || v_ket >= eigs.levels())
    throw std::out_of_range("matrix_element: level index out of range");
  if (function.size() != eigs.grid.size())
    throw std::invalid_argument("matrix_element: function does not match grid");
  const auto a = eigs.vectors.col(static_cast<Eigen::Index>(v_bra));
  const auto b = eigs.vectors.col(static_cast<Eigen::Index>(v_ket));
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += a[i] * function[static_cast<std::size_t>(i)] * b[i];
  return s;
}

double raman_matrix_element(const Eigensystem& eigs, const PolarizabilityModel& pol,
                            std::size_t v_bra, std::size_t v_ket) {
  std::vector<double> va(eigs.grid.size());
  for (std::size_t i = 0; i < va.size(); ++i) va[i] = pol(eigs.grid.position(i));
  return matrix_element(eigs, va, v_bra, v_ket);
}

ModelConfig ModelConfig::defaults() {
  ModelConfig c;
  const double mass = c.mass_au();
  c.b_state = build_b_state_morse(69.15, 71.25, mass, 30, 3.024, 15686.214);
  c.x_state = MorseParams::from_spectroscopic(214.5, 0.61, 2.666, 0.0, mass);
  c.polarizability = PolarizabilityModel{1.3e-3, 1.0, c.b_state.re_angstrom};
  return c;
}

namespace {

void morse_to_json(nlohmann::json& j, const MorseParams& m) {
  j = {{"de_cm", m.de_cm}, {"a_per_angstrom", m.a_per_angstrom},
       {"re_angstrom", m.re_angstrom}, {"te_cm", m.te_cm}};
}

// Accepts either explicit Morse parameters or a spectroscopic description:
// {"spacings_cm": [upper, lower], "anchor_level": 30} or {"we_cm", "wexe_cm"}.
MorseParams morse_from_json(const nlohmann::json& j, const MorseParams& base, double mass_au) {
  MorseParams m = base;
  const double re = j.value("re_angstrom", base.re_angstrom);
  const double te = j.value("te_cm", base.te_cm);
  if (j.contains("spacings_cm")) {
    const auto& s = j.at("spacings_cm");
    m = build_b_state_morse(s.at(0).get<double>(), s.at(1).get<double>(), mass_au,
                            j.value("anchor_level", 30), re, te);
  } else if (j.contains("we_cm")) {
    m = MorseParams::from_spectroscopic(j.at("we_cm").get<double>(), j.at("wexe_cm").get<double>(),
                                        re, te, mass_au);
  } else {
    m.de_cm = j.value("de_cm", base.de_cm);
    m.a_per_angstrom = j.value("a_per_angstrom", base.a_per_angstrom);
    m.re_angstrom = re;
    m.te_cm = te;
  }
  m.validate();
  return m;
}

}  // namespace

void to_json(nlohmann::json& j, const ModelConfig& c) {
  nlohmann::json b, x;
  morse_to_json(b, c.b_state);
  morse_to_json(x, c.x_state);
  j = {{"grid", {{"r_min", c.grid.r_min()}, {"r_max", c.grid.r_max()}, {"n_points", c.grid.size()}}},
       {"mass_amu", c.mass_amu},
       {"b_state", b},
       {"x_state", x},
       {"polarizability",
        {{"v0_au", c.polarizability.v0_au},
         {"slope_per_angstrom", c.polarizability.slope_per_angstrom},
         {"re_angstrom", c.polarizability.re_angstrom}}},
       {"dipole", c.dipole},
       {"n_levels", c.n_levels}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("model config must be a JSON object");
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    c.grid = SpatialGrid(g.value("r_min", c.grid.r_min()), g.value("r_max", c.grid.r_max()),
                         g.value("n_points", c.grid.size()));
  }
  c.mass_amu = j.value("mass_amu", c.mass_amu);
  if (!(c.mass_amu > 0.0)) throw std::invalid_argument("mass_amu must be positive");
  if (j.contains("b_state")) c.b_state = morse_from_json(j.at("b_state"), c.b_state, c.mass_au());
  if (j.contains("x_state")) c.x_state = morse_from_json(j.at("x_state"), c.x_state, c.mass_au());
  if (j.contains("polarizability")) {
    const auto& p = j.at("polarizability");
    c.polarizability.v0_au = p.value("v0_au", c.polarizability.v0_au);
    c.polarizability.slope_per_angstrom =
        p.value("slope_per_angstrom", c.polarizability.slope_per_angstrom);
    c.polarizability.re_angstrom = p.value("re_angstrom", c.b_state.re_angstrom);
    if (!(c.polarizability.v0_au > 0.0)) throw std::invalid_argument("polarizability V0 must be positive");
  }
  c.dipole = j.value("dipole", c.dipole);
  c.n_levels = j.value("n_levels", c.n_levels);
}

ModelConfig load_model_config(const nlohmann::json& j) {
  ModelConfig c = ModelConfig::defaults();
  from_json(j, c);
  return c;
}

MolecularModel MolecularModel::build(const ModelConfig& config) {
  config.b_state.validate();
  config.x_state.validate();
  const auto& g = config.grid;
  if (config.b_state.re_angstrom <= g.r_min() || config.b_state.re_angstrom >= g.r_max())
    throw std::invalid_argument("MolecularModel: B-state r_e outside grid");
  if (config.x_state.re_angstrom <= g.r_min() || config.x_state.re_angstrom >= g.r_max())
    throw std::invalid_argument("MolecularModel: X-state r_e outside grid");

  MolecularModel m;
  m.config = config;
  const std::size_t n = g.size();
  m.b_potential.resize(n);
  m.x_potential.resize(n);
  m.polarizability.resize(n);
  m.dipole.assign(n, config.dipole);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = g.position(i);
    m.b_potential[i] = config.b_state.potential_hartree(r);
    m.x_potential[i] = config.x_state.potential_hartree(r);
    m.polarizability[i] = config.polarizability(r);
    if (!std::isfinite(m.polarizability[i]))
      throw std::invalid_argument("MolecularModel: polarizability not finite on grid");
  }
  m.b_levels = eigensolve(g, m.b_potential, config.mass_au(), config.n_levels);
  const auto x = eigensolve(g, m.x_potential, config.mass_au(), 1);
  m.x_ground_energy = x.energies[0];
  m.x_ground_state = x.vectors.col(0);
  return m;
}

}  // namespace vibctl
