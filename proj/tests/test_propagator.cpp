#include "doctest.h"
#include "test_support.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <sstream>

#include "vibctl/propagator.hpp"

using namespace vibctl;

namespace {

constexpr cplx kI{0.0, 1.0};

// Eigenstate |v> propagated field-free for a span; returns <v|psi(t)> e^{+i E_v t}.
cplx eigenstate_return(std::size_t v, double span_fs, double dt_fs) {
  const auto& m = test::default_model();
  const auto g = TimeGrid::from_span(0.0, span_fs, dt_fs);
  SplitStepper st(Hamiltonian::from_model(m), g.dt);
  PropagateOptions o;
  o.store_checkpoints = false;
  const auto tr = propagate(to_complex(m.b_levels.level(v)), ControlField(g), st, o);
  const double e_t = m.b_levels.energies[v] * units::fs_to_au(span_fs);
  return inner(m.b_levels.level(v), tr.final_state) * std::exp(kI * e_t);
}

ControlField random_field(const TimeGrid& g, std::mt19937& rng, double amplitude) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double a1 = u(rng), a2 = u(rng), p1 = u(rng) * 3, p2 = u(rng) * 3;
  const double span = g.t_end() - g.t_start;
  ControlField f(g);
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double x = (g.time(k) - g.t_start) / span;
    f[k] = amplitude * (1.0 + 0.5 * a1 * std::sin(6.0 * x + p1) + 0.3 * a2 * std::cos(13.0 * x + p2));
  }
  return f;
}

}  // namespace

TEST_SUITE("propagator") {

TEST_CASE("eigenstate phase over one period") {
  const auto& m = test::default_model();
  const cplx r = eigenstate_return(30, m.t_upper_fs(), 0.1);
  CHECK(1.0 - std::abs(r) < 1e-8);
  CHECK(std::abs(std::arg(r)) < 1e-3);
}

TEST_CASE("second order in the time step") {
  const auto& m = test::default_model();
  std::vector<double> dts{0.4, 0.2, 0.1}, errs;
  for (double dt : dts) errs.push_back(std::abs(std::arg(eigenstate_return(30, m.t_upper_fs(), dt))));
  // Least-squares slope of log(err) against log(dt).
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < dts.size(); ++i) {
    const double x = std::log(dts[i]), y = std::log(errs[i]);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
  }
  const double n = static_cast<double>(dts.size());
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("free gaussian dispersion") {
  const SpatialGrid grid(2.1, 6.0, 512);
  Hamiltonian h;
  h.grid = grid;
  h.mass_au = units::amu_to_au(63.45);
  h.potential.assign(grid.size(), 0.0);
  const double s0 = 0.1;  // bohr
  const double x0 = units::angstrom_to_bohr(4.05);
  ComplexVector psi(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double x = units::angstrom_to_bohr(grid.position(i)) - x0;
    psi[i] = std::exp(-x * x / (4 * s0 * s0));
  }
  WaveFunction w(grid, psi);
  w.normalize();
  const double t_fs = 60.0;
  const auto g = TimeGrid::from_span(0.0, t_fs, 0.1);
  SplitStepper st(h, g.dt);
  const auto tr = propagate(w.psi, ControlField(g), st);
  double mean = 0, var = 0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    mean += std::norm(tr.final_state[i]) * units::angstrom_to_bohr(grid.position(i));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double d = units::angstrom_to_bohr(grid.position(i)) - mean;
    var += std::norm(tr.final_state[i]) * d * d;
  }
  const double tau = units::fs_to_au(t_fs) / (2 * h.mass_au * s0 * s0);
  const double expected = s0 * s0 * (1 + tau * tau);
  CHECK(tau > 0.5);
  CHECK(std::abs(var / expected - 1.0) < 1e-6);
}

TEST_CASE("unitary steps and norm over 17 mean periods") {
  const auto& m = test::default_model();
  std::mt19937 rng(7);
  const auto g = TimeGrid::from_span(0.0, 17 * m.t_mean_fs(), 0.1);
  SplitStepper st(Hamiltonian::from_model(m), g.dt);
  ComplexVector psi = to_complex(m.b_levels.level(30));
  st.step(psi, 0.4, 0.5);
  CHECK(std::abs(norm_squared(psi) - 1.0) < 1e-12);

  const auto f = random_field(g, rng, 0.3);
  PropagateOptions o;
  o.store_checkpoints = false;
  double worst = 0;
  o.observer = [&](std::size_t, std::span<const cplx> p) {
    worst = std::max(worst, std::abs(std::sqrt(norm_squared(p)) - 1.0));
  };
  propagate(to_complex(m.b_levels.level(30)), f, st, o);
  CHECK(worst < 1e-9);
}

TEST_CASE("field-free populations are constant") {
  // Populations in the grid-Hamiltonian eigenbasis are conserved up to the
  // Strang splitting error, which is bounded and shrinks as dt^2.
  const auto& m = test::default_model();
  ComplexVector psi(m.config.grid.size());
  for (std::size_t v : {29, 30, 31}) {
    const Eigen::VectorXd c = m.b_levels.level(v);
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] += c[static_cast<Eigen::Index>(i)] / std::sqrt(3.0);
  }
  std::vector<double> devs;
  for (double dt : {0.1, 0.05}) {
    const auto g = TimeGrid::from_span(0.0, 3 * m.t_mean_fs(), dt);
    SplitStepper st(Hamiltonian::from_model(m), g.dt);
    TrajectoryRecorder rec(m.b_levels, {29, 30, 31}, psi, g, 1);
    PropagateOptions o;
    o.observer = rec.observer();
    propagate(psi, ControlField(g), st, o);
    double worst = 0;
    for (const auto& row : rec.rows())
      for (double p : row.populations) worst = std::max(worst, std::abs(p - 1.0 / 3.0));
    devs.push_back(worst);
    if (dt == 0.1) {
      std::ostringstream os;
      rec.write_csv(os);
      CHECK(os.str().rfind("t_fs,P29,P30,P31,overlap,norm\n", 0) == 0);
    }
  }
  CHECK(devs[0] < 2e-5);
  CHECK(devs[0] / devs[1] == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("absorptive penalty shrinks the norm monotonically") {
  const auto& m = test::default_model();
  const auto g = TimeGrid::from_span(0.0, 500.0, 0.1);
  SplitStepper st(Hamiltonian::from_model(m, 0.5), g.dt);
  std::mt19937 rng(3);
  const auto f = random_field(g, rng, 0.5);
  double prev = 2.0;
  bool monotone = true;
  PropagateOptions o;
  o.observer = [&](std::size_t, std::span<const cplx> p) {
    const double n = norm_squared(p);
    if (n > prev + 1e-15) monotone = false;
    prev = n;
  };
  propagate(to_complex(m.b_levels.level(30)), f, st, o);
  CHECK(monotone);
  CHECK(prev < 1.0 - 1e-6);
}

TEST_CASE("adjoint without source is the inverse propagation") {
  const auto& m = test::default_model();
  const auto g = TimeGrid::from_span(0.0, 2 * m.t_mean_fs(), 0.1);
  SplitStepper st(Hamiltonian::from_model(m), g.dt);
  std::mt19937 rng(11);
  const auto f = random_field(g, rng, 0.4);
  const ComplexVector psi0 = to_complex(m.b_levels.level(30));
  const auto fwd = propagate(psi0, f, st, {.checkpoint_stride = 7});

  const auto back = propagate_adjoint_inhomogeneous(fwd.final_state, f, st, fwd, SourceTerm{});
  double dev = 0;
  for (std::size_t i = 0; i < psi0.size(); ++i) dev = std::max(dev, std::abs(back.initial[i] - psi0[i]));
  CHECK(dev < 1e-8);

  // <xi(t)|psi(t)> is conserved for an arbitrary final condition.
  ComplexVector xi_f(psi0.size());
  std::normal_distribution<double> nd;
  for (auto& c : xi_f) c = {nd(rng), nd(rng)};
  const cplx ref = inner(xi_f, fwd.final_state);
  double drift = 0;
  AdjointOptions ao;
  ao.visitor = [&](std::size_t, std::span<const cplx> xi, std::span<const cplx> psi) {
    drift = std::max(drift, std::abs(inner(xi, psi) - ref) / std::abs(ref));
  };
  propagate_adjoint_inhomogeneous(xi_f, f, st, fwd, SourceTerm{}, ao);
  CHECK(drift < 1e-8);
}

TEST_CASE("constant scalar source reproduces the Duhamel integral") {
  // X = I, Y(t) = y0 I: xi(t) = (1 + y0 (t_f - t)) psi(t).
  const auto& m = test::default_model();
  const auto g = TimeGrid::from_span(0.0, 300.0, 0.1);
  SplitStepper st(Hamiltonian::from_model(m), g.dt);
  std::mt19937 rng(5);
  const auto f = random_field(g, rng, 0.3);
  const ComplexVector psi0 = to_complex(m.b_levels.level(29));
  const auto fwd = propagate(psi0, f, st);
  const double y0 = 0.01;  // per fs
  SourceTerm src;
  src.weights.assign(g.points(), y0 * g.dt);
  src.apply = [](std::size_t, std::span<const cplx> psi, std::span<cplx> out) {
    std::copy(psi.begin(), psi.end(), out.begin());
  };
  double worst = 0;
  AdjointOptions ao;
  ao.visitor = [&](std::size_t k, std::span<const cplx> xi, std::span<const cplx> psi) {
    const double scale = 1.0 + y0 * (g.t_end() - g.time(k));
    for (std::size_t i = 0; i < psi.size(); ++i) worst = std::max(worst, std::abs(xi[i] - scale * psi[i]));
  };
  propagate_adjoint_inhomogeneous(fwd.final_state, f, st, fwd, src, ao);
  CHECK(worst < 1e-10);
}

TEST_CASE("inhomogeneous recursion against a dense ODE integration") {
  // 16-point grid, random potential/coupling/field and random Y(t) = y(t) Q.
  const std::size_t n = 16;
  const SpatialGrid grid(0.0, units::bohr_to_angstrom(8.0), n);
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double gamma : {0.0, 0.3}) {
    Hamiltonian h;
    h.grid = grid;
    h.mass_au = 20.0;
    h.gamma = gamma;
    for (std::size_t i = 0; i < n; ++i) {
      h.potential.push_back(0.5 * u(rng));
      h.coupling.push_back(0.2 + 0.4 * u(rng));
    }
    const double tf = 0.25;  // fs
    const auto g = TimeGrid::from_span(0.0, tf, 1e-5);
    const double c1 = u(rng), c2 = u(rng);
    auto fval = [&](double t) { return 0.8 + 0.3 * std::sin(40 * t + c1) + 0.2 * std::cos(90 * t + c2); };
    auto yval = [](double t) { return 2.0 + std::sin(30 * t); };  // per fs
    ControlField f(g);
    for (std::size_t k = 0; k < f.size(); ++k) f[k] = fval(g.time(k));

    Eigen::MatrixXcd a = Eigen::MatrixXcd::Random(n, n);
    const Eigen::MatrixXcd q = (a.adjoint() * a) / static_cast<double>(n);
    Eigen::VectorXcd psi0 = Eigen::VectorXcd::Random(n);
    psi0.normalize();
    Eigen::VectorXcd xf = Eigen::VectorXcd::Random(n);

    // Dense H(t) in a.u.: DFT kinetic matrix + diagonal potential.
    const auto kk = grid.momenta();
    Eigen::MatrixXcd kin = Eigen::MatrixXcd::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t m = 0; m < n; ++m)
          kin(i, j) += std::exp(2.0 * units::kPi * kI * static_cast<double>(m) *
                                (static_cast<double>(i) - static_cast<double>(j)) / static_cast<double>(n)) *
                       kk[m] * kk[m] / (2.0 * h.mass_au) / static_cast<double>(n);
    auto hmat = [&](double t) {
      Eigen::MatrixXcd hm = kin;
      const double f2 = fval(t) * fval(t);
      for (std::size_t i = 0; i < n; ++i)
        hm(i, i) += h.potential[i] - cplx(1.0, gamma) * h.coupling[i] * f2 / 4.0;
      return hm;
    };
    const double au = units::fs_to_au(1.0);
    // Forward psi by RK4 (t in fs), then the coupled backward system for (psi, xi).
    auto rhs_psi = [&](double t, const Eigen::VectorXcd& p) -> Eigen::VectorXcd {
      return -kI * au * (hmat(t) * p);
    };
    const int sub = 4;
    const double hstep = g.dt / sub;
    Eigen::VectorXcd p = psi0;
    for (std::size_t s = 0; s < g.steps * sub; ++s) {
      const double t = hstep * static_cast<double>(s);
      const auto k1 = rhs_psi(t, p), k2 = rhs_psi(t + hstep / 2, p + hstep / 2 * k1);
      const auto k3 = rhs_psi(t + hstep / 2, p + hstep / 2 * k2), k4 = rhs_psi(t + hstep, p + hstep * k3);
      p += hstep / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    auto rhs = [&](double t, const Eigen::VectorXcd& z) -> Eigen::VectorXcd {
      const Eigen::MatrixXcd hm = hmat(t);
      Eigen::VectorXcd out(2 * n);
      out.head(n) = -kI * au * (hm * z.head(n));
      out.tail(n) = -kI * au * (hm.adjoint() * z.tail(n)) - yval(t) * (q * z.head(n));
      return out;
    };
    Eigen::VectorXcd z(2 * n);
    z << p, xf;
    for (std::size_t s = g.steps * sub; s-- > 0;) {
      const double t = hstep * static_cast<double>(s + 1);
      const double hb = -hstep;
      const auto k1 = rhs(t, z), k2 = rhs(t + hb / 2, z + hb / 2 * k1);
      const auto k3 = rhs(t + hb / 2, z + hb / 2 * k2), k4 = rhs(t + hb, z + hb * k3);
      z += hb / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    const Eigen::VectorXcd xi0_ref = z.tail(n);

    SplitStepper st(h, g.dt);
    ComplexVector psi(n), xi_f(n);
    for (std::size_t i = 0; i < n; ++i) {
      psi[i] = psi0[static_cast<Eigen::Index>(i)];
      xi_f[i] = xf[static_cast<Eigen::Index>(i)];
    }
    const auto fwd = propagate(psi, f, st, {.checkpoint_stride = 100});
    SourceTerm src;
    for (std::size_t k = 0; k < g.points(); ++k) src.weights.push_back(g.dt * yval(g.time(k)));
    src.apply = [&](std::size_t, std::span<const cplx> ps, std::span<cplx> out) {
      Eigen::VectorXcd v(n);
      for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = ps[i];
      const Eigen::VectorXcd r = q * v;
      for (std::size_t i = 0; i < n; ++i) out[i] = r[static_cast<Eigen::Index>(i)];
    };
    const auto res = propagate_adjoint_inhomogeneous(xi_f, f, st, fwd, src);
    double dev = 0;
    for (std::size_t i = 0; i < n; ++i)
      dev = std::max(dev, std::abs(res.initial[i] - xi0_ref[static_cast<Eigen::Index>(i)]));
    CHECK_MESSAGE(dev / xi0_ref.norm() < 1e-6, "gamma=" << gamma << " dev=" << dev);
  }
}

TEST_CASE("input validation") {
  const auto& m = test::default_model();
  const auto g = TimeGrid::from_span(0.0, 10.0, 0.1);
  SplitStepper st(Hamiltonian::from_model(m), g.dt);
  ComplexVector small(8);
  CHECK_THROWS(propagate(small, ControlField(g), st));
  const auto g2 = TimeGrid::from_span(0.0, 10.0, 0.2);
  CHECK_THROWS(propagate(to_complex(m.b_levels.level(0)), ControlField(g2), st));
  Hamiltonian bad = Hamiltonian::from_model(m);
  bad.potential[3] = std::nan("");
  CHECK_THROWS(SplitStepper(bad, 0.1));
  std::vector<cplx> v(m.config.grid.size(), cplx(std::nan(""), 0));
  ComplexVector p = to_complex(m.b_levels.level(0));
  CHECK_THROWS(split_step(p, v, m.config.grid, m.config.mass_au(), 0.1));
}

TEST_CASE("generic split step agrees with the stepper") {
  const auto& m = test::default_model();
  SplitStepper st(Hamiltonian::from_model(m), 0.1);
  ComplexVector a = to_complex(m.b_levels.level(30)), b = a;
  st.step(a, 0.0, 0.0);
  std::vector<cplx> v(m.b_potential.begin(), m.b_potential.end());
  split_step(b, v, m.config.grid, m.config.mass_au(), 0.1);
  double dev = 0;
  for (std::size_t i = 0; i < a.size(); ++i) dev = std::max(dev, std::abs(a[i] - b[i]));
  CHECK(dev < 1e-13);
}

}  // TEST_SUITE
