#include "doctest.h"
#include "test_support.hpp"

#include <cmath>
#include <random>

#include "vibctl/impulsive.hpp"
#include "vibctl/oct.hpp"
#include "vibctl/pump.hpp"

using namespace vibctl;

namespace {

constexpr double kPi = units::kPi;

ControlProblem transfer_problem(double periods, double gamma = 0.0) {
  const auto& m = test::default_model();
  ControlProblem p;
  p.hamiltonian = Hamiltonian::from_model(m);
  p.grid = TimeGrid::from_span(0.0, periods * m.t_upper_fs(), 0.1);
  p.initial = to_complex(m.b_levels.level(30));
  p.target = TargetSpec::final_projector(to_complex(m.b_levels.level(31)));
  p.gamma = gamma;
  return p;
}

ControlField seed(const ControlProblem& p, std::size_t n, double period, double area, double offset) {
  std::vector<double> c;
  for (std::size_t i = 0; i < n; ++i) c.push_back(p.grid.t_start + (static_cast<double>(i) + offset) * period);
  return seed_pulse_train(p.grid, c, 30.0, area, test::default_model(), 30, 31);
}

// Pumped packet at t0 with a comb at multiples of the mean period.
ControlProblem comb_problem(double t0, std::size_t peaks) {
  const auto& m = test::default_model();
  const auto s = prepare_initial_state(m, ChirpedPulseSpec{});
  auto c = s.coefficients;
  for (std::size_t v = 0; v < c.size(); ++v)
    c[v] *= std::exp(std::complex<double>(0.0, -m.b_levels.energies[v] * units::fs_to_au(t0)));
  ControlProblem p;
  p.hamiltonian = Hamiltonian::from_model(m);
  p.grid = TimeGrid::from_span(t0, static_cast<double>(peaks + 1) * m.t_mean_fs(), 0.1);
  p.initial = reconstruct(c, m.b_levels);
  p.target = TargetSpec::deformation_comb(s.psi, CombSchedule::regular(0.0, m.t_mean_fs(), peaks));
  return p;
}

double fd_worst(const ControlProblem& p, const ControlField& f, double gamma, std::size_t samples, unsigned seed) {
  const auto g = gradient(p, f, gamma);
  double scale = 0.0;
  for (double x : g.values) scale = std::max(scale, std::abs(x));
  std::mt19937 rng(seed);
  std::uniform_int_distribution<std::size_t> u(1, p.grid.steps - 1);
  double worst = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t k = u(rng);
    const double e = 1e-3;
    auto fp = f, fm = f;
    fp[k] += e;
    fm[k] -= e;
    const double fd = (evaluate(p, fp, gamma).objective - evaluate(p, fm, gamma).objective) / (2 * e);
    // Relative error, floored at 1e-3 of the largest component.
    worst = std::max(worst, std::abs(fd - g.values[k]) / std::max(std::abs(g.values[k]), 1e-3 * scale));
  }
  return worst;
}

}  // namespace

TEST_SUITE("oct_engine") {

TEST_CASE("shaping target") {
  const auto& e = test::default_model().b_levels;
  for (double th : {0.0, 1.0, kPi / 2, kPi})
    CHECK(norm_squared(build_shaping_target(e, th)) == doctest::Approx(1.0).epsilon(1e-12));
  const auto a = build_shaping_target(e, 0.0), b = build_shaping_target(e, kPi);
  CHECK(std::norm(inner(a, b)) == doctest::Approx(1.0 / 9.0).epsilon(1e-10));
  const auto c = build_shaping_target(e, kPi / 2);
  const auto c29 = inner(e.level(29), c);
  CHECK(std::abs(c29 - std::complex<double>(0.0, 1.0 / std::sqrt(3.0))) < 1e-12);
  CHECK(std::abs(inner(e.level(31), c) - 1.0 / std::sqrt(3.0)) < 1e-12);
  CHECK_THROWS(build_shaping_target(e, 0.0, 0));
}

TEST_CASE("comb schedule") {
  const auto g = TimeGrid::from_span(0.0, 100.0, 0.1);
  auto comb = CombSchedule::regular(0.0, 20.0, 4);
  CHECK(comb.peaks == std::vector<double>{20.0, 40.0, 60.0, 80.0});
  CHECK_NOTHROW(comb.validate(g));
  CHECK(comb.search_half_width_fs == doctest::Approx(5.0));
  auto bad = comb;
  bad.peaks.push_back(100.0);
  CHECK_THROWS(bad.validate(g));
  bad = comb;
  std::swap(bad.peaks[0], bad.peaks[1]);
  CHECK_THROWS(bad.validate(g));

  // Comb reduction: the narrow Gaussians integrate to the peak samples.
  std::vector<double> ov(g.points());
  for (std::size_t k = 0; k < ov.size(); ++k) ov[k] = 0.5 + 0.4 * std::sin(0.37 * g.time(k));
  double samples = 0.0;
  for (auto k : comb.sample_indices(g)) samples += ov[k];
  const double q = comb_quadrature(comb, g, ov);
  CHECK(std::abs(q - samples) < 0.01 * samples);
  CHECK(std::abs(q - samples) < 1e-6);

  // Refresh moves peaks to the local maxima inside the window only.
  std::vector<double> bump(g.points(), 0.0);
  bump[g.nearest(23.0)] = 1.0;  // inside the window of the 20 fs peak
  bump[g.nearest(47.0)] = 1.0;  // outside every window
  CHECK(comb.refresh(g, bump));
  CHECK(comb.peaks[0] == doctest::Approx(23.0));
  CHECK(comb.peaks[1] == doctest::Approx(40.0));
  CHECK_FALSE(comb.refresh(g, bump));

  nlohmann::json j = comb;
  CHECK(j.get<CombSchedule>().peaks == comb.peaks);
}

TEST_CASE("objective and deformation metric") {
  const auto g = TimeGrid::from_span(0.0, 10.0, 0.1);
  const auto comb = CombSchedule::regular(0.0, 2.5, 3);
  auto t = TargetSpec::final_projector(to_complex(test::default_model().b_levels.level(31)));
  std::vector<double> ones(g.points(), 1.0), zeros(g.points(), 0.0);
  CHECK(evaluate_objective(ones, g, t) == 1.0);
  CHECK(deformation_metric(ones, g, comb) == 1.0);
  CHECK(deformation_metric(zeros, g, comb) == 0.0);
  t.kind = TargetKind::DeformationComb;
  t.comb = comb;
  CHECK(evaluate_objective(ones, g, t) == 4.0);
  CHECK_THROWS(evaluate_objective(std::vector<double>(3, 1.0), g, t));

  // psi(tf) = target gives J = 1 through the full propagation path.
  auto p = transfer_problem(0.2);
  p.initial = p.target.state;
  // Starting from |31> the final overlap with |31> stays 1 without field.
  CHECK(evaluate(p, ControlField(p.grid), 0.0).objective == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("free evolution of the pumped packet") {
  const auto& m = test::default_model();
  auto p = comb_problem(300.0, 16);
  CHECK(p.grid.t_end() == doctest::Approx(17 * m.t_mean_fs()));
  const auto e = evaluate(p, ControlField(p.grid), 0.0);
  const double f = deformation_metric(e.overlap, p.grid, p.target.comb);
  CHECK(std::abs(f - 0.56) <= 0.05);
  CHECK(e.objective == doctest::Approx(17 * f));
}

TEST_CASE("gradient vanishes at zero field") {
  const auto p = transfer_problem(1.0);
  const auto g = gradient(p, ControlField(p.grid), 0.0);
  for (double x : g.values) CHECK(x == 0.0);
}

TEST_CASE("adjoint gradient against finite differences") {
  const auto& m = test::default_model();
  {
    const auto p = transfer_problem(3.0);
    auto f = seed(p, 3, m.t_upper_fs(), 0.5, 0.5);
    for (std::size_t k = 0; k < f.size(); ++k) f[k] += 0.05 * std::sin(0.01 * static_cast<double>(k));
    CHECK(fd_worst(p, f, 0.0, 20, 1) < 1e-4);
    CHECK(fd_worst(p, f, 0.2, 5, 2) < 1e-4);
  }
  {
    auto p = comb_problem(300.0, 2);
    auto f = seed(p, 2, m.t_mean_fs(), 0.5, 0.3);
    CHECK(fd_worst(p, f, 0.0, 20, 3) < 1e-4);
    CHECK(fd_worst(p, f, 0.2, 5, 4) < 1e-4);
  }
}

TEST_CASE("raman pulse area and fluence ratio") {
  const auto& m = test::default_model();
  const auto p = transfer_problem(33.0);
  CHECK(raman_pulse_area(ControlField(p.grid), m, 30, 31) == 0.0);
  const auto f = seed(p, 33, m.t_upper_fs(), kPi, 0.5);
  CHECK(raman_pulse_area(f, m, 30, 31) == doctest::Approx(kPi).epsilon(1e-9));
  // Independent per-lobe kick sum.
  const double element = raman_matrix_element(m.b_levels, m.config.polarizability, 31, 30);
  ControlField one(p.grid);
  add_gaussian_lobe(one, 0.5 * m.t_upper_fs(), 30.0, f.fluence() / 33.0);
  const double a1 = impulsive::kick_strength_from_pulse(one, 0.5 * m.t_upper_fs(), element, m.b_levels.spacing_cm(31, 30));
  CHECK(2 * 33 * std::abs(a1) == doctest::Approx(kPi).epsilon(1e-3));
  auto twice = f;
  for (auto& x : twice.values) x *= 2.0;
  CHECK(raman_pulse_area(twice, m, 30, 31) == doctest::Approx(4 * kPi).epsilon(1e-9));
  CHECK(relative_fluence(f, f) == doctest::Approx(1.0));
  CHECK(relative_fluence(twice, f) == doctest::Approx(4.0));
  CHECK_THROWS(relative_fluence(f, ControlField(p.grid)));
}

TEST_CASE("optimizer input validation") {
  const auto p = transfer_problem(1.0);
  CHECK_THROWS(optimize(p, ControlField(p.grid)));
  CHECK_THROWS(optimize(p, ControlField(TimeGrid::from_span(0.0, 10.0, 0.1), std::vector<double>(101, 1.0))));
  auto q = p;
  q.gamma = -1.0;
  CHECK_THROWS(optimize(q, seed(p, 1, 400.0, 0.3, 0.5)));
  CHECK_THROWS(nlohmann::json{{"method", "newton"}}.get<OptimizerOptions>());
}

TEST_CASE("short optimizations are monotone") {
  const auto& m = test::default_model();
  for (auto method : {OptimizerMethod::Gradient, OptimizerMethod::Krotov}) {
    for (double gamma : {0.0, 0.1}) {
      CAPTURE(static_cast<int>(method));
      CAPTURE(gamma);
      const auto p = transfer_problem(4.0, gamma);
      OptimizerOptions o;
      o.method = method;
      o.max_iterations = 6;
      o.krotov_step = 20.0;
      const auto r = optimize(p, seed(p, 4, m.t_upper_fs(), 0.3, 0.5), o);
      CHECK(r.report.monotone());
      CHECK(r.report.iterations.size() >= 2);
      CHECK(r.report.final_objective > r.report.iterations.front().objective);
      for (std::size_t i = 1; i < r.report.iterations.size(); ++i)
        CHECK(r.report.iterations[i].design_objective >= r.report.iterations[i - 1].design_objective);
      nlohmann::json j = r.report;
      CHECK(j.at("monotone").get<bool>());
      CHECK(j.contains("iterations"));
    }
  }
}

TEST_CASE("comb optimization keeps the comb refreshed") {
  const auto& m = test::default_model();
  auto p = comb_problem(300.0, 3);
  OptimizerOptions o;
  o.max_iterations = 4;
  const auto r = optimize(p, seed(p, 3, m.t_mean_fs(), 0.3, 1.0 - 300.0 / m.t_mean_fs()), o);
  CHECK(r.report.monotone());
  CHECK(r.report.comb_peaks.size() == 3);
  CHECK_NOTHROW(r.target.comb.validate(p.grid));
  for (std::size_t n = 0; n < 3; ++n)
    CHECK(std::abs(r.report.comb_peaks[n] - (n + 1) * m.t_mean_fs()) <= 0.25 * m.t_mean_fs());
}

}  // TEST_SUITE
