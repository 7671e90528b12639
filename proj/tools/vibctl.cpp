// Command-line front end: model inspection, single optimizations, pulse analysis
// and the figure runners.
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "vibctl/experiments.hpp"
#include "vibctl/fft.hpp"
#include "vibctl/impulsive.hpp"
#include "vibctl/propagator.hpp"
#include "vibctl/pump.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vibctl;

namespace {

struct Globals {
  std::string config_path;
  std::string out = "out";
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
  bool fast_fft = false;
};

struct LoadedConfig {
  ModelConfig model = ModelConfig::defaults();
  json experiments = json::object();  // id -> overrides
};

LoadedConfig load_config(const std::string& path) {
  LoadedConfig c;
  if (path.empty()) return c;
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  const json j = json::parse(f);
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  const auto ids = experiment_ids();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "model") {
      c.model = load_model_config(it.value());
    } else if (std::find(ids.begin(), ids.end(), it.key()) != ids.end()) {
      c.experiments[it.key()] = it.value();
    } else {
      throw std::invalid_argument("config: unknown key " + it.key());
    }
  }
  return c;
}

void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  f << s;
  if (!f) throw std::runtime_error("cannot write " + p.string());
}

template <class Fn>
void write_with(const fs::path& p, Fn&& body) {
  std::ostringstream os;
  body(os);
  write_text(p, os.str());
}

json envelope(const std::string& command, const json& config, const json& results) {
  return {{"schema_version", kReportSchemaVersion}, {"command", command}, {"config", config}, {"results", results}};
}

int cmd_eigen(const Globals& g, const LoadedConfig& c, std::size_t show) {
  const auto m = MolecularModel::build(c.model);
  const fs::path dir = fs::path(g.out) / "eigen";
  write_with(dir / "levels.csv", [&](std::ostream& os) { m.b_levels.write_csv(os); });
  write_with(dir / "potentials.csv", [&](std::ostream& os) {
    os << "r_angstrom,V_B_cm-1,V_X_cm-1,V_alpha_hartree\n";
    os.precision(12);
    for (std::size_t i = 0; i < m.config.grid.size(); ++i)
      os << m.config.grid.position(i) << ',' << units::hartree_to_cm(m.b_potential[i]) << ','
         << units::hartree_to_cm(m.x_potential[i]) << ',' << m.polarizability[i] << '\n';
  });
  const json results = {{"omega_31_30_cm", m.b_levels.spacing_cm(31, 30)},
                        {"omega_30_29_cm", m.b_levels.spacing_cm(30, 29)},
                        {"T31_30_fs", m.t_upper_fs()},
                        {"T30_29_fs", m.t_lower_fs()},
                        {"T_mean_fs", m.t_mean_fs()},
                        {"raman_31_30_au", raman_matrix_element(m.b_levels, m.config.polarizability, 31, 30)},
                        {"raman_30_29_au", raman_matrix_element(m.b_levels, m.config.polarizability, 30, 29)}};
  write_text(dir / "summary.json", envelope("eigen", {{"model", c.model}}, results).dump(2) + "\n");
  std::cout << "omega(31,30) = " << results["omega_31_30_cm"].get<double>()
            << " cm^-1, omega(30,29) = " << results["omega_30_29_cm"].get<double>() << " cm^-1\n";
  for (std::size_t v = 0; v < std::min(show, m.b_levels.levels()); ++v)
    std::cout << "  v=" << v << "  E=" << m.b_levels.energy_cm(v) << " cm^-1\n";
  return 0;
}

int cmd_pump(const Globals& g, const LoadedConfig& c, const ChirpedPulseSpec& spec, const std::string& method,
             const PumpWindow& window) {
  const auto m = MolecularModel::build(c.model);
  const auto pm = method == "time" ? PumpMethod::Time : PumpMethod::Frequency;
  const auto s = prepare_initial_state(m, spec, window, pm);
  const fs::path dir = fs::path(g.out) / "pump";
  write_with(dir / "coefficients.csv", [&](std::ostream& os) { s.write_coefficients_csv(os); });
  const json cfg = {{"model", c.model},
                    {"pulse", spec},
                    {"method", method},
                    {"window", {{"t_initial_fs", window.t_initial}, {"t_final_fs", window.t_final}, {"dt_fs", window.dt}}}};
  const json results = {{"excited_norm", s.excited_norm},
                        {"dominant_level", s.dominant_level()},
                        {"P29", s.population(29)},
                        {"P30", s.population(30)},
                        {"P31", s.population(31)},
                        {"theta_upper_rad", s.theta_upper(30)},
                        {"theta_lower_rad", s.theta_lower(30)}};
  write_text(dir / "pump.json", envelope("pump", cfg, results).dump(2) + "\n");
  std::cout << "dominant level " << s.dominant_level() << ", P29+P30+P31 = "
            << s.population(29) + s.population(30) + s.population(31) << "\n";
  return 0;
}

struct OptimizeArgs {
  std::string objective = "transfer";
  double periods = 0.0;  // 0: objective default
  double chirp = 0.0;
  double theta_pi = 0.0;
  double gamma = 0.0;
  double seed_area = 0.0;  // 0: objective default
  double seed_fwhm = 30.0;
  double dt = 0.1;
  std::size_t iterations = 40;
  std::string method = "gradient";
  std::size_t count = 16;
};

int cmd_optimize(const Globals& g, const LoadedConfig& c, const OptimizeArgs& a) {
  const auto m = MolecularModel::build(c.model);
  OptimizerOptions o;
  o.max_iterations = a.iterations;
  o.method = a.method == "krotov" ? OptimizerMethod::Krotov : OptimizerMethod::Gradient;
  o.progress = [](std::size_t it, double j) { std::cerr << "iteration " << it << "  J = " << j << "\n"; };

  ControlProblem p;
  ControlField seed;
  ComplexVector reference;
  double period = m.t_mean_fs();
  double scale = 1.0;
  if (a.objective == "transfer") {
    p = transfer_problem(m, a.periods > 0 ? a.periods : 33.0, a.dt, a.gamma);
    seed = transfer_seed(m, p.grid, a.seed_area > 0 ? a.seed_area : units::kPi / 10, a.seed_fwhm);
    reference = p.initial;
    period = m.t_upper_fs();
  } else if (a.objective == "suppress") {
    auto s = suppression_problem(m, a.chirp, a.count, 300.0, a.dt, a.gamma);
    p = s.problem;
    seed = suppression_seed(m, p.grid, a.count, a.seed_area > 0 ? a.seed_area : units::kPi / 2, a.seed_fwhm);
    reference = s.pump.psi;
    scale = 1.0 / static_cast<double>(a.count + 1);
  } else if (a.objective == "shape") {
    p = shaping_problem(m, a.theta_pi * units::kPi, a.periods > 0 ? a.periods : 60.0, a.dt, a.gamma);
    seed = shaping_seed(m, p.grid, a.seed_area > 0 ? a.seed_area : 0.6, a.seed_fwhm);
    reference = p.target.state;
  } else {
    throw std::invalid_argument("unknown objective " + a.objective);
  }
  auto r = optimize(p, seed, o);
  r.report.raman_area = raman_pulse_area(r.field, m, 30, 31);

  const fs::path dir = fs::path(g.out) / ("optimize_" + a.objective);
  write_with(dir / "envelope.csv", [&](std::ostream& os) { r.field.write_csv(os); });
  TrajectoryRecorder rec(m.b_levels, {28, 29, 30, 31, 32}, reference, p.grid, 10);
  evaluate(p, r.field, 0.0, false, rec.observer());
  write_with(dir / "populations.csv", [&](std::ostream& os) { rec.write_csv(os); });
  const auto pulses = detect_pulse_train(r.field, m);
  write_with(dir / "pulses.csv", [&](std::ostream& os) { pulses.write_csv(os); });
  json po = o;
  const json cfg = {{"model", c.model},
                    {"objective", a.objective},
                    {"periods", a.periods},
                    {"chirp_sigma2", a.chirp},
                    {"theta_pi", a.theta_pi},
                    {"gamma", a.gamma},
                    {"seed_area", a.seed_area},
                    {"seed_fwhm_fs", a.seed_fwhm},
                    {"dt_fs", a.dt},
                    {"comb_count", a.count},
                    {"optimizer", po}};
  const json results = {{"report", r.report},
                        {"metric", r.report.final_objective * scale},
                        {"max_population_excursion", max_population_excursion(rec)},
                        {"pulse_count", pulses.count()},
                        {"mean_normalized_interval_fs",
                         [&] {
                           const auto n = pulses.normalized_intervals(period);
                           double s = 0.0;
                           for (double x : n) s += x;
                           return n.empty() ? 0.0 : s / static_cast<double>(n.size());
                         }()}};
  write_text(dir / "report.json", envelope("optimize", cfg, results).dump(2) + "\n");
  std::cout << a.objective << ": J = " << r.report.final_objective << ", fluence = " << r.report.fluence
            << " fs, stop: " << r.report.stop_reason << "\n";
  return 0;
}

int cmd_analyze(const Globals& g, const LoadedConfig& c, const std::string& input, const DetectOptions& d,
                double period) {
  std::ifstream f(input);
  if (!f) throw std::runtime_error("cannot open " + input);
  const auto field = read_field_csv(f);
  const auto m = MolecularModel::build(c.model);
  const auto a = detect_pulse_train(field, m, d);
  const double per = period > 0 ? period : m.t_upper_fs();
  const fs::path dir = fs::path(g.out) / "analyze";
  write_with(dir / "pulses.csv", [&](std::ostream& os) { a.write_csv(os); });
  json results = a;
  results["normalized_intervals_fs"] = a.normalized_intervals(per);
  write_text(dir / "analysis.json",
             envelope("analyze-pulse", {{"input", input}, {"detect", d}, {"period_fs", per}, {"model", c.model}}, results)
                     .dump(2) +
                 "\n");
  std::cout << a.count() << " pulses, mean interval " << a.mean_interval() << " fs, Raman area " << a.raman_area()
            << " rad\n";
  return 0;
}

int cmd_train_scan(const Globals& g, const LoadedConfig& c, std::size_t n, double from, double to, std::size_t points,
                   double area) {
  if (n == 0 || points == 0) throw std::invalid_argument("train-scan: pulses and points must be positive");
  const auto m = MolecularModel::build(c.model);
  const double w1 = m.b_levels.spacing_cm(31, 30), w2 = m.b_levels.spacing_cm(30, 29);
  if (!(from > 0)) from = m.t_lower_fs() - 10.0;
  if (!(to > 0)) to = m.t_upper_fs() + 10.0;
  const double a = impulsive::kKickSign * area / (2.0 * static_cast<double>(n));
  const fs::path dir = fs::path(g.out) / "train_scan";
  write_with(dir / "train_scan.csv", [&](std::ostream& os) {
    os << "interval_fs,P31,P30,P29,P31_perturbative,P29_perturbative\n";
    os.precision(10);
    for (std::size_t i = 0; i < points; ++i) {
      const double tau = points == 1 ? from : from + (to - from) * static_cast<double>(i) / static_cast<double>(points - 1);
      const auto spec = impulsive::PulseTrainSpec::regular(n, tau, a, w1, w2);
      const auto s = impulsive::run_train(spec, impulsive::State(0.0, 1.0, 0.0)).back();
      const auto q = impulsive::perturbative_population(spec, n);
      os << tau << ',' << std::norm(s[0]) << ',' << std::norm(s[1]) << ',' << std::norm(s[2]) << ',' << q.upper << ','
         << q.lower << '\n';
    }
  });
  const auto spec = impulsive::PulseTrainSpec::regular(n, m.t_upper_fs(), a, w1, w2);
  const auto states = impulsive::run_train(spec, impulsive::State(0.0, 1.0, 0.0));
  write_with(dir / "train_T31_30.csv", [&](std::ostream& os) {
    os << "n,tau_fs,P31,P30,P29,P31_perturbative,P29_perturbative\n";
    os.precision(10);
    for (std::size_t k = 0; k < n; ++k) {
      const auto q = impulsive::perturbative_population(spec, k + 1);
      os << k + 1 << ',' << spec.times[k] << ',' << std::norm(states[k][0]) << ',' << std::norm(states[k][1]) << ','
         << std::norm(states[k][2]) << ',' << q.upper << ',' << q.lower << '\n';
    }
  });
  std::cout << "regular " << n << "-pulse train at T31,30: P31 = " << std::norm(states.back()[0])
            << ", P29 = " << std::norm(states.back()[2]) << "\n";
  return 0;
}

int cmd_figure(const Globals& g, const LoadedConfig& c, const std::string& id) {
  ExperimentConfig e;
  e.id = id;
  e.model = c.model;
  if (c.experiments.contains(id)) e.overrides = c.experiments.at(id);
  e.output_dir = g.out;
  e.jobs = g.jobs;
  e.seed = g.seed;
  const auto b = run_experiment(e);
  for (const auto& f : b.failures) std::cerr << "failed: " << f << "\n";
  std::cout << id << ": " << b.files.size() << " files in " << b.directory.string() << " ("
            << (b.ok() ? "ok" : "failed") << ")\n";
  return b.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonresonant pulse-train control of I2 B-state wave packets"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON file with a \"model\" block and per-experiment overrides")
      ->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--jobs", g.jobs, "Worker threads for scans")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Seed for the optional initial-guess jitter");
  app.add_flag("--fast-fft", g.fast_fft, "Measured FFTW plans (faster, not bit-reproducible)");

  std::function<int()> action;
  LoadedConfig cfg;

  auto* eigen = app.add_subcommand("eigen", "B-state levels, spacings and potentials");
  std::size_t show = 0;
  eigen->add_option("--show", show, "Print the lowest N levels");
  eigen->callback([&] { action = [&] { return cmd_eigen(g, cfg, show); }; });

  auto* pump = app.add_subcommand("pump", "First-order pump coefficients");
  double chirp = 0.0, lambda = 535.0, fwhm = 80.0;
  std::string method = "frequency";
  PumpWindow window;
  pump->add_option("--chirp", chirp, "phi2 in units of sigma^2");
  pump->add_option("--lambda", lambda, "Centre wavelength (nm)");
  pump->add_option("--fwhm", fwhm, "Transform-limited intensity FWHM (fs)");
  pump->add_option("--method", method, "frequency or time")->check(CLI::IsMember({"frequency", "time"}));
  pump->add_option("--window-start", window.t_initial, "Time-domain window start (fs)");
  pump->add_option("--window-end", window.t_final, "Time-domain window end (fs)");
  pump->callback([&] {
    action = [&] { return cmd_pump(g, cfg, ChirpedPulseSpec::with_chirp_sigma2(chirp, lambda, fwhm), method, window); };
  });

  auto* opt = app.add_subcommand("optimize", "Single optimization (transfer, suppress or shape)");
  OptimizeArgs oa;
  opt->add_option("--objective", oa.objective)->check(CLI::IsMember({"transfer", "suppress", "shape"}));
  opt->add_option("--periods", oa.periods, "Horizon in periods (T31,30 for transfer, T-bar for shape)");
  opt->add_option("--chirp", oa.chirp, "Pump chirp for suppress (sigma^2)");
  opt->add_option("--theta-pi", oa.theta_pi, "Target phase for shape (units of pi)");
  opt->add_option("--gamma", oa.gamma, "Fluence penalty");
  opt->add_option("--seed-area", oa.seed_area, "Raman area of the initial train (rad)");
  opt->add_option("--seed-fwhm", oa.seed_fwhm, "Initial lobe FWHM (fs)");
  opt->add_option("--dt", oa.dt, "Time step (fs)");
  opt->add_option("--iterations", oa.iterations, "Maximum iterations");
  opt->add_option("--method", oa.method)->check(CLI::IsMember({"gradient", "krotov"}));
  opt->add_option("--count", oa.count, "Comb peaks for suppress");
  opt->callback([&] { action = [&] { return cmd_optimize(g, cfg, oa); }; });

  auto* an = app.add_subcommand("analyze-pulse", "Detect the pulse train of an envelope CSV");
  std::string input;
  DetectOptions det;
  double period = 0.0;
  an->add_option("--input", input, "CSV with header t_fs,f")->required()->check(CLI::ExistingFile);
  an->add_option("--floor", det.floor_fraction, "Peak floor relative to max f^2");
  an->add_option("--merge", det.merge_fs, "Merge distance (fs)");
  an->add_option("--period", period, "Period for interval normalization (fs; default T31,30)");
  an->callback([&] { action = [&] { return cmd_analyze(g, cfg, input, det, period); }; });

  auto* ts = app.add_subcommand("train-scan", "Three-state model of regular trains over the interval");
  std::size_t pulses = 33, points = 61;
  double from = 0.0, to = 0.0, area = units::kPi;
  ts->add_option("--pulses", pulses);
  ts->add_option("--from", from, "First interval (fs)");
  ts->add_option("--to", to, "Last interval (fs)");
  ts->add_option("--points", points);
  ts->add_option("--area", area, "Total Raman area (rad)");
  ts->callback([&] { action = [&] { return cmd_train_scan(g, cfg, pulses, from, to, points, area); }; });

  for (const auto& id : experiment_ids()) {
    auto* sc = app.add_subcommand(id, "Run experiment " + id);
    sc->callback([&, id] { action = [&, id] { return cmd_figure(g, cfg, id); }; });
  }
  auto* all = app.add_subcommand("all", "Run every experiment");
  all->callback([&] {
    action = [&] {
      int rc = 0;
      for (const auto& id : experiment_ids()) rc |= cmd_figure(g, cfg, id);
      return rc;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    set_fft_planning(g.fast_fft ? FftPlanning::Measure : FftPlanning::Estimate);
    cfg = load_config(g.config_path);
    return action();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
