#include "doctest.h"
#include "test_support.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "vibctl/impulsive.hpp"
#include "vibctl/propagator.hpp"

using namespace vibctl;
using namespace vibctl::impulsive;

namespace {

constexpr double kPi = units::kPi;

State ground() { return State(0.0, 1.0, 0.0); }

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = std::log(x[i]), b = std::log(y[i]);
    sx += a; sy += b; sxx += a * a; sxy += a * b;
  }
  const double n = static_cast<double>(x.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_SUITE("impulsive_model") {

TEST_CASE("step matrix without kick is free propagation") {
  const auto m = step_matrix(0.0, 1.3, -0.4);
  CHECK(std::abs(m(0, 0) - std::exp(std::complex<double>(0, -1.3))) < 1e-15);
  CHECK(std::abs(m(1, 1) - 1.0) < 1e-15);
  CHECK(std::abs(m(2, 2) - std::exp(std::complex<double>(0, -0.4))) < 1e-15);
  CHECK(std::abs(m(0, 1)) + std::abs(m(1, 0)) + std::abs(m(0, 2)) < 1e-15);
}

TEST_CASE("step matrix is unitary") {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 50; ++i) {
    const auto m = step_matrix(u(rng), u(rng) * 5, u(rng) * 5);
    CHECK((m.adjoint() * m - StepMatrix::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("regular 33-pulse pi train") {
  const double w1 = 69.15, w2 = 71.25;
  const double t1 = units::cm_to_period_fs(w1);
  const auto spec = PulseTrainSpec::regular(33, t1, kKickSign * kPi / 66, w1, w2);
  const auto l = spec.ledger();
  CHECK(std::abs(l.delta[0]) < 1e-12);
  CHECK(l.delta_tilde[0] == doctest::Approx(0.1908).epsilon(1e-3));
  const auto states = run_train(spec, ground());
  REQUIRE(states.size() == 33);
  for (const auto& s : states) CHECK(std::abs(s.squaredNorm() - 1.0) < 1e-12);
  // Exact product values (independent three-state oracle): the v-1 channel is
  // not fully suppressed at this dephasing.
  CHECK(std::norm(states.back()[0]) == doctest::Approx(0.9375).epsilon(2e-3));
  CHECK(std::norm(states.back()[2]) == doctest::Approx(0.0461).epsilon(2e-2));
  // Sum of kicks of a Raman pi train.
  double sum = 0;
  for (double a : spec.kicks) sum += a;
  CHECK(sum == doctest::Approx(-kPi / 2));
}

TEST_CASE("empty train and two-pulse doubling") {
  PulseTrainSpec empty;
  empty.omega_upper_cm = 69.15;
  empty.omega_lower_cm = 71.25;
  CHECK(run_train(empty, ground()).empty());
  CHECK(mean_fidelity(empty, ground()) == 1.0);

  const double a = 0.01;
  const double t1 = units::cm_to_period_fs(69.15);
  const auto two = PulseTrainSpec::regular(2, t1, a, 69.15, 71.25);
  const auto s = run_train(two, ground());
  CHECK(std::abs(std::norm(s[1][0]) - 4 * a * a) < 20 * std::pow(a, 4));
}

TEST_CASE("perturbative populations") {
  const double a = 0.003;
  const double t1 = units::cm_to_period_fs(69.15);
  const auto spec = PulseTrainSpec::regular(10, t1, a, 69.15, 71.25);
  CHECK(perturbative_population(spec, 1).upper == doctest::Approx(a * a));
  for (std::size_t n = 1; n <= 10; ++n)
    CHECK(perturbative_population(spec, n).upper == doctest::Approx(a * a * n * n).epsilon(1e-9));
  CHECK_THROWS(perturbative_population(spec, 11));

  // Random residual phases, |a| = 0.01, against the exact product.
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  PulseTrainSpec r;
  r.omega_upper_cm = 69.15;
  r.omega_lower_cm = 71.25;
  const double wu = units::cm_to_rad_per_fs(69.15);
  double t = 0;
  for (int i = 0; i < 3; ++i) {
    t += (2 * kPi + u(rng)) / wu;
    r.times.push_back(t);
    r.kicks.push_back(0.01);
  }
  const auto exact = run_train(r, ground());
  const auto p = perturbative_population(r, 3);
  CHECK(std::abs(std::norm(exact.back()[0]) - p.upper) < 1e-6);
  CHECK(std::abs(std::norm(exact.back()[2]) - p.lower) < 1e-6);
}

TEST_CASE("lowest-order error scales as a^4") {
  const double t1 = units::cm_to_period_fs(69.15);
  std::vector<double> as{0.004, 0.002, 0.001}, errs;
  for (double a : as) {
    const auto spec = PulseTrainSpec::regular(33, t1, -a, 69.15, 71.25);
    const auto s = run_train(spec, ground());
    errs.push_back(std::abs(std::norm(s.back()[0]) - a * a * 33 * 33));
  }
  CHECK(loglog_slope(as, errs) == doctest::Approx(4.0).epsilon(0.3 / 4.0));
}

TEST_CASE("residual dephasing from the fitted spacings") {
  const auto& m = test::default_model();
  const auto l = PhaseLedger::from_times({m.t_upper_fs()}, 0.0, m.b_levels.spacing_cm(31, 30),
                                         m.b_levels.spacing_cm(30, 29));
  CHECK(std::abs(l.delta[0]) < 1e-9);
  CHECK(std::abs(l.delta_tilde[0] - 0.19) <= 0.005);
  CHECK(wrap_phase(3 * kPi) == doctest::Approx(kPi));
  CHECK(wrap_phase(-kPi) == doctest::Approx(kPi));
}

TEST_CASE("initial-phase contour maps") {
  const double w1 = 69.15, w2 = 71.25;
  const double tbar = 0.5 * (units::cm_to_period_fs(w1) + units::cm_to_period_fs(w2));
  const auto spec = PulseTrainSpec::regular(17, tbar, kKickSign * kPi / 34, w1, w2);
  const auto grid = angle_grid(181);
  CHECK(grid.front() == doctest::Approx(-kPi));
  const auto a = f_contour(Eigen::Vector3d(std::sqrt(1.0 / 6), std::sqrt(2.0 / 3), std::sqrt(1.0 / 6)),
                           spec, grid, grid, 2);
  const auto b = f_contour(Eigen::Vector3d(0.5, std::sqrt(0.5), 0.5), spec, grid, grid, 2);
  const auto c = f_contour(Eigen::Vector3d::Constant(std::sqrt(1.0 / 3)), spec, grid, grid, 1);
  CHECK(a.max_near(0.0, 0.0, 0.1) >= 0.98);
  CHECK(c.max_near(kPi, kPi, 0.1) >= 0.98);
  CHECK(std::abs(b.max() - 0.92) <= 0.02);
  // Direct evaluation at theta = theta~ = 0 for case (a).
  CHECK(mean_fidelity(spec, phased_state(Eigen::Vector3d(std::sqrt(1.0 / 6), std::sqrt(2.0 / 3),
                                                         std::sqrt(1.0 / 6)), 0, 0)) >= 0.98);
  std::ostringstream os;
  a.write_csv(os);
  CHECK(os.str().rfind("theta_rad,theta_tilde_rad,F\n", 0) == 0);
}

TEST_CASE("phased state and json") {
  const auto s = phased_state(Eigen::Vector3d(1, 1, 1), 0.3, -0.2);
  CHECK(s.norm() == doctest::Approx(1.0));
  CHECK(std::arg(s[0]) == doctest::Approx(-0.3));
  const auto spec = PulseTrainSpec::regular(3, 480, -0.1, 69.15, 71.25);
  nlohmann::json j = spec;
  const auto back = j.get<PulseTrainSpec>();
  CHECK(back.times == spec.times);
  PulseTrainSpec bad = spec;
  bad.times[1] = bad.times[0];
  CHECK_THROWS(bad.validate());
  bad = spec;
  bad.kicks[0] = 4.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("kick strength quadrature") {
  const double w = 69.15;
  const double element = -3.7e-4;
  const auto g = TimeGrid::from_span(-1000.0, 1000.0, 0.1);
  CHECK(std::abs(kick_strength(ControlField(g), 0.0, element, w)) == 0.0);
  const double fluence = 50.0;
  std::vector<double> kicks;
  for (double fwhm : {80.0, 8.0}) {
    ControlField f(g);
    add_gaussian_lobe(f, 0.0, fwhm, fluence);
    CHECK(f.fluence() == doctest::Approx(fluence).epsilon(1e-9));
    bool impulsive = false;
    const double a = kick_strength_from_pulse(f, 0.0, element, w, &impulsive);
    CHECK(impulsive == (fwhm < 48.0));
    // Analytic Gaussian transform of the intensity.
    const double sigma = fwhm / (2 * std::sqrt(2 * std::log(2.0)));
    const double om = units::cm_to_rad_per_fs(w);
    const double expected = element / 4 * units::fs_to_au(fluence) * std::exp(-0.5 * om * om * sigma * sigma);
    CHECK(a == doctest::Approx(expected).epsilon(1e-8));
    kicks.push_back(a);
  }
  CHECK(std::abs(kicks[0]) < std::abs(kicks[1]));
}

TEST_CASE("single weak pulse in the grid propagator") {
  const auto& m = test::default_model();
  const double element = raman_matrix_element(m.b_levels, m.config.polarizability, 31, 30);
  const double w = m.b_levels.spacing_cm(31, 30);
  const auto g = TimeGrid::from_span(0.0, 400.0, 0.1);
  ControlField f(g);
  add_gaussian_lobe(f, 200.0, 30.0, 25.0);
  const double a = kick_strength_from_pulse(f, 200.0, element, w);
  SplitStepper st(Hamiltonian::from_model(m), g.dt);
  PropagateOptions o;
  o.store_checkpoints = false;
  const auto tr = propagate(to_complex(m.b_levels.level(30)), f, st, o);
  const double p31 = std::norm(inner(m.b_levels.level(31), tr.final_state));
  CHECK(std::abs(a) > 0.02);
  CHECK(p31 == doctest::Approx(a * a).epsilon(0.10));
}

}  // TEST_SUITE
