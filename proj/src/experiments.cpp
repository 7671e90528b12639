#include "vibctl/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "vibctl/impulsive.hpp"
#include "vibctl/parallel.hpp"
#include "vibctl/propagator.hpp"

namespace vibctl {

namespace {

constexpr std::complex<double> kI{0.0, 1.0};
constexpr double kPi = units::kPi;

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

std::vector<double> jitter(std::uint64_t seed, std::size_t subrun, std::size_t n, double amplitude) {
  std::vector<double> out(n, 0.0);
  if (amplitude == 0.0) return out;
  std::mt19937_64 rng(seed * 1000003ULL + subrun);
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  for (auto& x : out) x = u(rng);
  return out;
}

// t_start + (n - 1/2) period, n = 1, 2, ... inside the grid.
std::vector<double> half_offset_centres(const TimeGrid& grid, double period) {
  std::vector<double> c;
  for (std::size_t n = 0;; ++n) {
    const double x = grid.t_start + (static_cast<double>(n) + 0.5) * period;
    if (x >= grid.t_end()) break;
    c.push_back(x);
  }
  return c;
}

std::vector<double> shifted(std::vector<double> centres, const std::vector<double>& jitter_fs) {
  if (!jitter_fs.empty() && jitter_fs.size() != centres.size())
    throw std::invalid_argument("seed jitter does not match the number of pulses");
  for (std::size_t i = 0; i < jitter_fs.size(); ++i) centres[i] += jitter_fs[i];
  return centres;
}

}  // namespace

void to_json(nlohmann::json& j, const DetectOptions& o) {
  j = {{"floor_fraction", o.floor_fraction},
       {"merge_fs", o.merge_fs},
       {"level", o.level},
       {"level_prime", o.level_prime}};
}

double PulseTrainAnalysis::mean_interval() const {
  if (intervals.empty()) return 0.0;
  return std::accumulate(intervals.begin(), intervals.end(), 0.0) / static_cast<double>(intervals.size());
}

std::vector<double> PulseTrainAnalysis::normalized_intervals(double period_fs) const {
  if (!(period_fs > 0.0)) throw std::invalid_argument("normalized_intervals: period must be positive");
  std::vector<double> out;
  out.reserve(intervals.size());
  for (double d : intervals) out.push_back(d / std::max(1.0, std::round(d / period_fs)));
  return out;
}

double PulseTrainAnalysis::raman_area() const {
  if (kicks.empty()) return 0.0;
  const double w = units::cm_to_rad_per_fs(omega_cm);
  std::complex<double> s = 0.0;
  for (std::size_t n = 0; n < kicks.size(); ++n)
    s += kicks[n] * std::exp(kI * (w * (peak_times[n] - peak_times.front())));
  return 2.0 * std::abs(s);
}

void PulseTrainAnalysis::write_csv(std::ostream& os) const {
  os << "n,t_fs,interval_fs,fluence_fs,re_a_rad,im_a_rad,abs_a_rad,inverted\n";
  os.precision(10);
  for (std::size_t n = 0; n < count(); ++n) {
    os << n + 1 << ',' << peak_times[n] << ',';
    if (n > 0) os << intervals[n - 1];
    os << ',' << fluences[n] << ',' << kicks[n].real() << ',' << kicks[n].imag() << ',' << std::abs(kicks[n])
       << ',' << (inverted[n] ? 1 : 0) << '\n';
  }
}

void to_json(nlohmann::json& j, const PulseTrainAnalysis& a) {
  j = {{"count", a.count()},
       {"peak_times_fs", a.peak_times},
       {"intervals_fs", a.intervals},
       {"mean_interval_fs", a.mean_interval()},
       {"fluences_fs", a.fluences},
       {"total_fluence_fs", a.total_fluence},
       {"raman_area_rad", a.raman_area()}};
}

PulseTrainAnalysis detect_pulse_train(const ControlField& field, const MolecularModel& model,
                                      const DetectOptions& options) {
  field.validate();
  if (!(options.floor_fraction > 0.0 && options.floor_fraction < 1.0))
    throw std::invalid_argument("detect_pulse_train: floor fraction must lie in (0, 1)");
  if (options.merge_fs < 0.0) throw std::invalid_argument("detect_pulse_train: negative merge distance");
  const std::size_t n = field.size();
  std::vector<double> p(n);
  for (std::size_t k = 0; k < n; ++k) p[k] = field[k] * field[k];
  const double top = *std::max_element(p.begin(), p.end());
  if (!(top > 0.0)) throw std::runtime_error("detect_pulse_train: envelope is zero");
  const double floor = options.floor_fraction * top;

  std::vector<std::size_t> peaks;
  for (std::size_t k = 0; k < n; ++k) {
    if (p[k] < floor) continue;
    const bool left = k == 0 || p[k] > p[k - 1];
    const bool right = k + 1 == n || p[k] >= p[k + 1];
    if (left && right) peaks.push_back(k);
  }
  if (peaks.empty()) throw std::runtime_error("detect_pulse_train: no peaks above the floor");

  std::vector<std::size_t> merged;
  for (std::size_t k : peaks) {
    if (!merged.empty() && field.grid.time(k) - field.grid.time(merged.back()) < options.merge_fs) {
      if (p[k] > p[merged.back()]) merged.back() = k;
      continue;
    }
    merged.push_back(k);
  }

  PulseTrainAnalysis a;
  a.total_fluence = field.fluence();
  const auto& eigs = model.b_levels;
  const std::size_t hi = std::max(options.level, options.level_prime);
  const std::size_t lo = std::min(options.level, options.level_prime);
  if (hi >= eigs.levels() || hi == lo) throw std::invalid_argument("detect_pulse_train: bad level pair");
  a.omega_cm = eigs.spacing_cm(hi, lo);
  const double element = raman_matrix_element(eigs, model.config.polarizability, options.level_prime, options.level);

  std::vector<std::size_t> bounds{0};
  for (std::size_t i = 0; i + 1 < merged.size(); ++i) {
    const auto first = p.begin() + static_cast<std::ptrdiff_t>(merged[i]);
    const auto last = p.begin() + static_cast<std::ptrdiff_t>(merged[i + 1]) + 1;
    bounds.push_back(static_cast<std::size_t>(std::min_element(first, last) - p.begin()));
  }
  bounds.push_back(n - 1);

  const double dt = field.grid.dt;
  for (std::size_t i = 0; i < merged.size(); ++i) {
    const std::size_t k = merged[i];
    const double t = field.grid.time(k);
    const std::size_t first = bounds[i], last = bounds[i + 1];
    double fl = 0.0;
    for (std::size_t m = first; m < last; ++m) fl += 0.5 * dt * (p[m] + p[m + 1]);
    a.peak_times.push_back(t);
    a.fluences.push_back(fl);
    a.kicks.push_back(impulsive::kick_strength(field, first, last, t, element, a.omega_cm));
    a.inverted.push_back(field[k] < 0.0);
    a.window_first.push_back(first);
    a.window_last.push_back(last);
    if (i > 0) a.intervals.push_back(t - a.peak_times[i - 1]);
  }
  return a;
}

ControlField model_gaussian_train(std::size_t n, double fwhm_fs, double interval_fs, double total_fluence,
                                  double t_first_fs, const TimeGrid& grid) {
  grid.validate();
  if (n == 0) throw std::invalid_argument("model_gaussian_train: no pulses");
  if (!(fwhm_fs > 0.0)) throw std::invalid_argument("model_gaussian_train: width must be positive");
  if (total_fluence < 0.0) throw std::invalid_argument("model_gaussian_train: negative fluence");
  if (n > 1 && !(interval_fs > 0.0)) throw std::invalid_argument("model_gaussian_train: interval must be positive");
  // Intensity lobe exp(-t^2 / (2 s^2)) with s = fwhm / (2 sqrt(2 ln 2)).
  const double s = fwhm_fs / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  const auto tail = [&](double d) { return 0.5 * std::erfc(d / (std::sqrt(2.0) * s)); };
  if (n > 1 && tail(0.5 * interval_fs) > 0.01)
    throw std::invalid_argument("model_gaussian_train: neighbouring pulses overlap by more than 1%");
  const double t_last = t_first_fs + interval_fs * static_cast<double>(n - 1);
  if (tail(t_first_fs - grid.t_start) > 0.01 || tail(grid.t_end() - t_last) > 0.01)
    throw std::invalid_argument("model_gaussian_train: pulses do not fit in the time grid");
  ControlField f(grid);
  const double each = total_fluence / static_cast<double>(n);
  if (each == 0.0) return f;
  for (std::size_t i = 0; i < n; ++i)
    add_gaussian_lobe(f, t_first_fs + interval_fs * static_cast<double>(i), fwhm_fs, each);
  return f;
}

ControlField read_field_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_field_csv: empty input");
  if (line.rfind("t_fs,f", 0) != 0) throw std::runtime_error("read_field_csv: expected header t_fs,f");
  std::vector<double> t, f;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    double a = 0.0, b = 0.0;
    char comma = 0;
    if (!(row >> a >> comma >> b) || comma != ',') throw std::runtime_error("read_field_csv: bad row: " + line);
    t.push_back(a);
    f.push_back(b);
  }
  if (t.size() < 2) throw std::runtime_error("read_field_csv: need at least two samples");
  TimeGrid g;
  g.t_start = t.front();
  g.steps = t.size() - 1;
  g.dt = (t.back() - t.front()) / static_cast<double>(g.steps);
  for (std::size_t k = 0; k < t.size(); ++k)
    if (std::abs(t[k] - g.time(k)) > 1e-6 * g.dt + 1e-9 * std::abs(t[k]))
      throw std::runtime_error("read_field_csv: time grid is not uniform");
  return ControlField(g, std::move(f));
}

ControlProblem transfer_problem(const MolecularModel& model, double periods, double dt_fs, double gamma) {
  if (!(periods > 0.0)) throw std::invalid_argument("transfer_problem: horizon must be positive");
  ControlProblem p;
  p.hamiltonian = Hamiltonian::from_model(model);
  p.grid = TimeGrid::from_span(0.0, periods * model.t_upper_fs(), dt_fs);
  p.initial = to_complex(model.b_levels.level(30));
  p.target = TargetSpec::final_projector(to_complex(model.b_levels.level(31)));
  p.gamma = gamma;
  return p;
}

ControlField transfer_seed(const MolecularModel& model, const TimeGrid& grid, double area, double fwhm_fs,
                           const std::vector<double>& jitter_fs) {
  const auto c = half_offset_centres(grid, model.t_upper_fs());
  return seed_pulse_train(grid, shifted(c, jitter_fs), fwhm_fs, area, model, 30, 31);
}

double pi_train_fluence(const MolecularModel& model, std::size_t periods, double fwhm_fs, double dt_fs) {
  const auto g = TimeGrid::from_span(0.0, static_cast<double>(periods) * model.t_upper_fs(), dt_fs);
  return transfer_seed(model, g, kPi, fwhm_fs).fluence();
}

SuppressionProblem suppression_problem(const MolecularModel& model, double chirp_sigma2, std::size_t count,
                                       double t0_fs, double dt_fs, double gamma) {
  if (count == 0) throw std::invalid_argument("suppression_problem: need at least one comb peak");
  const double tb = model.t_mean_fs();
  if (!(t0_fs >= 0.0 && t0_fs < tb)) throw std::invalid_argument("suppression_problem: t0 must lie in [0, T-bar)");
  SuppressionProblem s;
  s.pump = prepare_initial_state(model, ChirpedPulseSpec::with_chirp_sigma2(chirp_sigma2));
  auto c = s.pump.coefficients;
  const double t0 = units::fs_to_au(t0_fs);
  for (std::size_t v = 0; v < c.size(); ++v) c[v] *= std::exp(-kI * (model.b_levels.energies[v] * t0));
  auto& p = s.problem;
  p.hamiltonian = Hamiltonian::from_model(model);
  p.grid = TimeGrid::from_span(t0_fs, static_cast<double>(count + 1) * tb, dt_fs);
  p.initial = reconstruct(c, model.b_levels);
  p.target = TargetSpec::deformation_comb(s.pump.psi, CombSchedule::regular(0.0, tb, count));
  p.gamma = gamma;
  return s;
}

ControlField suppression_seed(const MolecularModel& model, const TimeGrid& grid, std::size_t count, double area,
                              double fwhm_fs, const std::vector<double>& jitter_fs) {
  const double tb = model.t_mean_fs();
  std::vector<double> c;
  for (std::size_t n = 1; n <= count; ++n) c.push_back(static_cast<double>(n) * tb);
  return seed_pulse_train(grid, shifted(c, jitter_fs), fwhm_fs, area, model, 30, 31);
}

ControlProblem shaping_problem(const MolecularModel& model, double theta, double periods, double dt_fs,
                               double gamma) {
  if (!(periods > 0.0)) throw std::invalid_argument("shaping_problem: horizon must be positive");
  ControlProblem p;
  p.hamiltonian = Hamiltonian::from_model(model);
  p.grid = TimeGrid::from_span(0.0, periods * model.t_mean_fs(), dt_fs);
  p.initial = to_complex(model.b_levels.level(30));
  p.target = TargetSpec::final_projector(build_shaping_target(model.b_levels, theta));
  p.gamma = gamma;
  return p;
}

ControlField shaping_seed(const MolecularModel& model, const TimeGrid& grid, double area, double fwhm_fs,
                          const std::vector<double>& jitter_fs) {
  const auto c = half_offset_centres(grid, model.t_mean_fs());
  return seed_pulse_train(grid, shifted(c, jitter_fs), fwhm_fs, area, model, 30, 31);
}

double max_population_excursion(const TrajectoryRecorder& recorder) {
  const auto& rows = recorder.rows();
  if (rows.empty()) return 0.0;
  double e = 0.0;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.populations.size(); ++i)
      e = std::max(e, std::abs(r.populations[i] - rows.front().populations[i]));
  return e;
}

// ---------------------------------------------------------------------------
// Experiment plumbing

namespace {

using nlohmann::json;

json optimizer_defaults(std::size_t iterations) {
  OptimizerOptions o;
  o.max_iterations = iterations;
  json j = o;
  j["stop_at_objective"] = nullptr;
  return j;
}

json common_defaults(std::size_t iterations) {
  return {{"dt_fs", 0.1},
          {"gamma", 0.0},
          {"seed_fwhm_fs", 30.0},
          {"seed_jitter_fs", 0.0},
          {"record_stride", 10},
          {"optimizer", optimizer_defaults(iterations)}};
}

json suppression_defaults(double chirp) {
  json j = common_defaults(60);
  j["chirp_sigma2"] = chirp;
  j["count"] = 16;
  j["t0_fs"] = 300.0;
  j["seed_area"] = kPi / 2;
  return j;
}

const std::map<std::string, std::function<json()>>& defaults_table() {
  static const std::map<std::string, std::function<json()>> table = {
      {"fig2",
       [] {
         json j = common_defaults(40);
         j["tf_periods"] = {10, 15, 20, 25, 33, 40, 60, 80};
         j["seed_area"] = kPi / 10;
         j["exact_reference"] = false;
         j["reference_periods"] = 80;
         return j;
       }},
      {"fig3",
       [] {
         json j = common_defaults(60);
         j["tf_periods"] = 33;
         j["seed_area"] = kPi / 10;
         return j;
       }},
      {"fig4",
       [] {
         json j = common_defaults(60);
         j["tf_periods"] = 25;
         j["seed_area"] = kPi / 10;
         return j;
       }},
      {"fig5",
       [] {
         json j = common_defaults(40);
         j["tf_periods"] = 60.0;
         j["theta_pi"] = {0.0, 0.5, 1.0, 1.5};
         j["seed_area"] = 0.6;
         return j;
       }},
      {"fig6",
       [] {
         return json{{"dt_fs", 0.1},
                     {"n_pulses", 25},
                     {"fwhm_fs", 80.0},
                     {"intervals_fs", json::array()},
                     {"relative_fluences", json::array()},
                     {"reference_fluence", 0.0},
                     {"cut_interval_fs", 0.0},
                     {"cut_fluences", json::array()}};
       }},
      {"fig7",
       [] {
         json j = suppression_defaults(0.0);
         j.erase("chirp_sigma2");
         j["optimizer"]["max_iterations"] = 40;
         j["chirps_sigma2"] = {-2.0, -1.5, -1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0, 1.5, 2.0};
         return j;
       }},
      {"fig8", [] { return suppression_defaults(0.0); }},
      {"fig9", [] { return suppression_defaults(-1.0); }},
      {"fig10", [] { return suppression_defaults(1.0); }},
      {"fig11",
       [] {
         return json{{"resolution", 181}, {"n_pulses", 17}, {"window_rad", 0.1}};
       }},
  };
  return table;
}

bool is_number(const json& j) { return j.is_number(); }

void check_types(const json& defaults, const json& over, const std::string& path) {
  if (!over.is_object()) throw std::invalid_argument("overrides for " + path + " must be an object");
  for (auto it = over.begin(); it != over.end(); ++it) {
    const std::string key = path + "." + it.key();
    if (!defaults.contains(it.key())) throw std::invalid_argument("unknown parameter " + key);
    const json& d = defaults.at(it.key());
    const json& v = it.value();
    if (d.is_null()) {
      if (!v.is_null() && !is_number(v)) throw std::invalid_argument(key + " must be a number or null");
    } else if (d.is_object()) {
      check_types(d, v, key);
    } else if (d.is_array()) {
      if (!v.is_array()) throw std::invalid_argument(key + " must be an array");
      for (const auto& e : v)
        if (!is_number(e)) throw std::invalid_argument(key + " must hold numbers");
    } else if (d.is_boolean()) {
      if (!v.is_boolean()) throw std::invalid_argument(key + " must be a boolean");
    } else if (d.is_string()) {
      if (!v.is_string()) throw std::invalid_argument(key + " must be a string");
    } else if (d.is_number_unsigned() || d.is_number_integer()) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw std::invalid_argument(key + " must be a non-negative integer");
    } else if (!is_number(v)) {
      throw std::invalid_argument(key + " must be a number");
    }
  }
}

OptimizerOptions optimizer_from(const json& j) {
  json c = j;
  if (c.contains("stop_at_objective") && c.at("stop_at_objective").is_null()) c.erase("stop_at_objective");
  return c.get<OptimizerOptions>();
}

std::string fmt(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

// Output sink for one experiment directory.
class Context {
 public:
  Context(const ExperimentConfig& c, const MolecularModel& m, json p, ExperimentBundle& b)
      : config(c), model(m), params(std::move(p)), bundle(b) {}

  const ExperimentConfig& config;
  const MolecularModel& model;
  json params;
  ExperimentBundle& bundle;

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ostringstream os;
    body(os);
    const auto path = bundle.directory / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << os.str();
    if (!f) throw std::runtime_error("write failed: " + path.string());
    std::lock_guard lock(mutex_);
    bundle.files.push_back(name);
  }

  /// Runs body(i) for every sub-run; failures are recorded, not thrown.
  void fan_out(std::size_t n, const std::function<std::string(std::size_t)>& label,
               const std::function<void(std::size_t)>& body) {
    std::vector<std::string> errors(n);
    parallel_for(n, config.jobs, [&](std::size_t i) {
      try {
        body(i);
      } catch (const std::exception& e) {
        errors[i] = label(i) + ": " + e.what();
      }
    });
    for (auto& e : errors)
      if (!e.empty()) bundle.failures.push_back(std::move(e));
  }

  double num(const char* key) const { return params.at(key).get<double>(); }
  std::size_t count(const char* key) const { return params.at(key).get<std::size_t>(); }
  std::vector<double> list(const char* key) const { return params.at(key).get<std::vector<double>>(); }
  OptimizerOptions optimizer() const { return optimizer_from(params.at("optimizer")); }
  std::vector<double> seed_jitter(std::size_t subrun, std::size_t n) const {
    return jitter(config.seed, subrun, n, num("seed_jitter_fs"));
  }

 private:
  std::mutex mutex_;
};

void write_populations(Context& ctx, const std::string& name, const ControlProblem& problem,
                       const ControlField& field, std::vector<std::size_t> levels, const ComplexVector& reference,
                       double* excursion = nullptr) {
  TrajectoryRecorder rec(ctx.model.b_levels, std::move(levels), reference, problem.grid,
                         ctx.count("record_stride"));
  evaluate(problem, field, 0.0, false, rec.observer());
  if (excursion) *excursion = max_population_excursion(rec);
  ctx.write(name, [&](std::ostream& os) { rec.write_csv(os); });
}

void write_iterations(Context& ctx, const std::string& name, const OptimizationReport& r) {
  ctx.write(name, [&](std::ostream& os) {
    os << "iteration,objective,design_objective,fluence_fs,step,backtracks\n";
    os.precision(12);
    for (std::size_t i = 0; i < r.iterations.size(); ++i) {
      const auto& it = r.iterations[i];
      os << i << ',' << it.objective << ',' << it.design_objective << ',' << it.fluence << ',' << it.step << ','
         << it.backtracks << '\n';
    }
  });
}

json analysis_summary(const PulseTrainAnalysis& a, double period) {
  json j = a;
  const auto norm = a.normalized_intervals(period);
  const std::size_t half = norm.size() / 2;
  auto mean = [](auto b, auto e) {
    return b == e ? 0.0 : std::accumulate(b, e, 0.0) / static_cast<double>(e - b);
  };
  j["normalized_intervals_fs"] = norm;
  j["normalized_mean_fs"] = mean(norm.begin(), norm.end());
  j["first_half_mean_fs"] = mean(norm.begin(), norm.begin() + static_cast<std::ptrdiff_t>(half));
  j["second_half_mean_fs"] = mean(norm.begin() + static_cast<std::ptrdiff_t>(half), norm.end());
  return j;
}

// --- transfer --------------------------------------------------------------

OptimizationResult run_transfer(Context& ctx, double periods, std::size_t subrun) {
  const auto p = transfer_problem(ctx.model, periods, ctx.num("dt_fs"), ctx.num("gamma"));
  const std::size_t lobes = half_offset_centres(p.grid, ctx.model.t_upper_fs()).size();
  const auto seed =
      transfer_seed(ctx.model, p.grid, ctx.num("seed_area"), ctx.num("seed_fwhm_fs"), ctx.seed_jitter(subrun, lobes));
  auto r = optimize(p, seed, ctx.optimizer());
  r.report.raman_area = raman_pulse_area(r.field, ctx.model, 30, 31);
  return r;
}

void fig2(Context& ctx) {
  const auto tfs = ctx.list("tf_periods");
  std::vector<OptimizationResult> runs(tfs.size());
  std::vector<double> p31(tfs.size(), std::nan(""));
  ctx.fan_out(
      tfs.size(), [&](std::size_t i) { return "tf=" + fmt(tfs[i]) + "T"; },
      [&](std::size_t i) {
        runs[i] = run_transfer(ctx, tfs[i], i);
        p31[i] = runs[i].report.final_objective;
      });

  double reference = pi_train_fluence(ctx.model, 33, ctx.num("seed_fwhm_fs"), ctx.num("dt_fs"));
  std::string reference_kind = "analytic pi train at 33 T";
  if (ctx.params.at("exact_reference").get<bool>()) {
    const double rp = ctx.num("reference_periods");
    const auto it = std::find(tfs.begin(), tfs.end(), rp);
    if (it != tfs.end() && !runs[static_cast<std::size_t>(it - tfs.begin())].field.values.empty()) {
      reference = runs[static_cast<std::size_t>(it - tfs.begin())].report.fluence;
    } else {
      ctx.fan_out(
          1, [&](std::size_t) { return "reference tf=" + fmt(rp) + "T"; },
          [&](std::size_t) { reference = run_transfer(ctx, rp, tfs.size()).report.fluence; });
    }
    reference_kind = "optimized at " + fmt(rp) + " T";
  }

  ctx.write("fig2.csv", [&](std::ostream& os) {
    os << "tf_periods,tf_fs,final_P31,relative_fluence,fluence_fs,raman_area_rad,iterations\n";
    os.precision(10);
    for (std::size_t i = 0; i < tfs.size(); ++i) {
      if (runs[i].field.values.empty()) continue;
      const auto& r = runs[i].report;
      os << tfs[i] << ',' << runs[i].field.grid.t_end() << ',' << p31[i] << ',' << r.fluence / reference << ','
         << r.fluence << ',' << r.raman_area << ',' << r.iteration_count << '\n';
    }
  });
  json rows = json::array();
  for (std::size_t i = 0; i < tfs.size(); ++i)
    if (!runs[i].field.values.empty()) rows.push_back({{"tf_periods", tfs[i]}, {"report", runs[i].report}});
  ctx.bundle.report["results"] = {{"reference_fluence_fs", reference}, {"reference", reference_kind}, {"runs", rows}};
}

void transfer_detail(Context& ctx) {
  const double periods = ctx.num("tf_periods");
  ctx.fan_out(
      1, [&](std::size_t) { return "tf=" + fmt(periods) + "T"; },
      [&](std::size_t) {
        const auto r = run_transfer(ctx, periods, 0);
        const auto p = transfer_problem(ctx.model, periods, ctx.num("dt_fs"), 0.0);
        const double tu = ctx.model.t_upper_fs(), tl = ctx.model.t_lower_fs();
        ctx.write("envelope.csv", [&](std::ostream& os) { r.field.write_csv(os); });
        write_iterations(ctx, "iterations.csv", r.report);
        TrajectoryRecorder rec(ctx.model.b_levels, {29, 30, 31, 32}, p.initial, p.grid, ctx.count("record_stride"));
        evaluate(p, r.field, 0.0, false, rec.observer());
        ctx.write("populations.csv", [&](std::ostream& os) { rec.write_csv(os); });

        const auto a = detect_pulse_train(r.field, ctx.model);
        ctx.write("pulses.csv", [&](std::ostream& os) { a.write_csv(os); });

        // Impulsive model driven by the detected kicks, against the grid populations
        // at the end of every pulse window.
        impulsive::PulseTrainSpec spec;
        spec.times = a.peak_times;
        for (const auto& k : a.kicks) spec.kicks.push_back(k.real());
        spec.omega_upper_cm = ctx.model.b_levels.spacing_cm(31, 30);
        spec.omega_lower_cm = ctx.model.b_levels.spacing_cm(30, 29);
        const auto states = impulsive::run_train(spec, impulsive::State(0.0, 1.0, 0.0));
        const auto& rows = rec.rows();
        ctx.write("impulsive.csv", [&](std::ostream& os) {
          os << "n,tau_fs,a_rad,P31_impulsive,P31_grid\n";
          os.precision(10);
          for (std::size_t n = 0; n < a.count(); ++n) {
            const double t = p.grid.time(a.window_last[n]);
            const auto row = std::min_element(rows.begin(), rows.end(), [&](const auto& x, const auto& y) {
              return std::abs(x.t - t) < std::abs(y.t - t);
            });
            os << n + 1 << ',' << a.peak_times[n] << ',' << spec.kicks[n] << ',' << std::norm(states[n][0]) << ','
               << row->populations[2] << '\n';
          }
        });

        const std::size_t n_reg = static_cast<std::size_t>(std::llround(periods));
        const auto reg = impulsive::PulseTrainSpec::regular(
            n_reg, tu, impulsive::kKickSign * kPi / (2.0 * static_cast<double>(n_reg)), spec.omega_upper_cm,
            spec.omega_lower_cm);
        const auto reg_states = impulsive::run_train(reg, impulsive::State(0.0, 1.0, 0.0));
        ctx.write("regular_train.csv", [&](std::ostream& os) {
          os << "n,tau_fs,P31_exact,P29_exact,P31_perturbative,P29_perturbative\n";
          os.precision(10);
          for (std::size_t n = 0; n < n_reg; ++n) {
            const auto q = impulsive::perturbative_population(reg, n + 1);
            os << n + 1 << ',' << reg.times[n] << ',' << std::norm(reg_states[n][0]) << ','
               << std::norm(reg_states[n][2]) << ',' << q.upper << ',' << q.lower << '\n';
          }
        });

        json res = {{"report", r.report},
                    {"final_P31", r.report.final_objective},
                    {"relative_fluence_vs_pi_train_33T",
                     r.report.fluence / pi_train_fluence(ctx.model, 33, ctx.num("seed_fwhm_fs"), ctx.num("dt_fs"))},
                    {"T31_30_fs", tu},
                    {"T30_29_fs", tl},
                    {"pulses", analysis_summary(a, tu)}};
        ctx.bundle.report["results"] = res;
      });
}

// --- shaping ---------------------------------------------------------------

void fig5(Context& ctx) {
  const auto thetas = ctx.list("theta_pi");
  std::vector<json> results(thetas.size());
  ctx.fan_out(
      thetas.size(), [&](std::size_t i) { return "theta=" + fmt(thetas[i]) + "pi"; },
      [&](std::size_t i) {
        const double theta = thetas[i] * kPi;
        const auto p = shaping_problem(ctx.model, theta, ctx.num("tf_periods"), ctx.num("dt_fs"), ctx.num("gamma"));
        const std::size_t lobes = half_offset_centres(p.grid, ctx.model.t_mean_fs()).size();
        const auto seed = shaping_seed(ctx.model, p.grid, ctx.num("seed_area"), ctx.num("seed_fwhm_fs"),
                                       ctx.seed_jitter(i, lobes));
        auto r = optimize(p, seed, ctx.optimizer());
        r.report.raman_area = raman_pulse_area(r.field, ctx.model, 30, 31);
        const std::string tag = "theta" + std::to_string(i);
        ctx.write("envelope_" + tag + ".csv", [&](std::ostream& os) { r.field.write_csv(os); });
        write_iterations(ctx, "iterations_" + tag + ".csv", r.report);
        const auto e = evaluate(p, r.field, 0.0, true);
        const auto s = decompose(e.trajectory.final_state, ctx.model.b_levels, false);
        write_populations(ctx, "populations_" + tag + ".csv", p, r.field, {28, 29, 30, 31, 32}, p.target.state);
        const auto a = detect_pulse_train(r.field, ctx.model);
        ctx.write("pulses_" + tag + ".csv", [&](std::ostream& os) { a.write_csv(os); });
        // Relative phases of the final packet, theta = arg C_29 - arg C_30 referenced like the target.
        const double rel29 = impulsive::wrap_phase(std::arg(s.coefficients[29]) - std::arg(s.coefficients[30]));
        const double rel31 = impulsive::wrap_phase(std::arg(s.coefficients[31]) - std::arg(s.coefficients[30]));
        results[i] = {{"theta_pi", thetas[i]},
                      {"tag", tag},
                      {"report", r.report},
                      {"P29", s.population(29)},
                      {"P30", s.population(30)},
                      {"P31", s.population(31)},
                      {"phase29_minus_30_rad", rel29},
                      {"phase31_minus_30_rad", rel31},
                      {"pulses", analysis_summary(a, ctx.model.t_mean_fs())}};
      });
  ctx.write("fig5.csv", [&](std::ostream& os) {
    os << "theta_pi,objective,fluence_fs,P29,P30,P31,phase29_minus_30_rad,peaks\n";
    os.precision(10);
    for (const auto& r : results) {
      if (r.is_null()) continue;
      os << r["theta_pi"].get<double>() << ',' << r["report"]["final_objective"].get<double>() << ','
         << r["report"]["fluence"].get<double>() << ',' << r["P29"].get<double>() << ',' << r["P30"].get<double>()
         << ',' << r["P31"].get<double>() << ',' << r["phase29_minus_30_rad"].get<double>() << ','
         << r["pulses"]["count"].get<std::size_t>() << '\n';
    }
  });
  json arr = json::array();
  for (auto& r : results)
    if (!r.is_null()) arr.push_back(r);
  ctx.bundle.report["results"] = {{"runs", arr}};
}

// --- model trains ----------------------------------------------------------

struct TrainPoint {
  double p29 = 0, p30 = 0, p31 = 0;
};

TrainPoint propagate_model_train(const MolecularModel& model, const Hamiltonian& h, std::size_t n, double fwhm,
                                 double interval, double fluence, double dt) {
  const auto g = TimeGrid::from_span(0.0, static_cast<double>(n) * interval, dt);
  const auto f = model_gaussian_train(n, fwhm, interval, fluence, 0.5 * interval, g);
  const SplitStepper st(h, g.dt);
  PropagateOptions po;
  po.store_checkpoints = false;
  const auto tr = propagate(to_complex(model.b_levels.level(30)), f, st, po);
  const auto& e = model.b_levels;
  return {std::norm(inner(e.level(29), tr.final_state)), std::norm(inner(e.level(30), tr.final_state)),
          std::norm(inner(e.level(31), tr.final_state))};
}

void fig6(Context& ctx) {
  const std::size_t n = ctx.count("n_pulses");
  const double fwhm = ctx.num("fwhm_fs"), dt = ctx.num("dt_fs");
  const double tu = ctx.model.t_upper_fs(), tl = ctx.model.t_lower_fs(), tb = ctx.model.t_mean_fs();
  auto intervals = ctx.list("intervals_fs");
  if (intervals.empty()) intervals = linspace(tl - 10.0, tu + 10.0, 13);
  auto rel = ctx.list("relative_fluences");
  if (rel.empty()) rel = linspace(0.2, 3.0, 15);
  auto cut = ctx.list("cut_fluences");
  if (cut.empty()) cut = linspace(0.1, 3.0, 30);
  const double cut_interval = ctx.num("cut_interval_fs") > 0.0 ? ctx.num("cut_interval_fs") : tb;

  double reference = ctx.num("reference_fluence");
  std::string reference_kind = "override";
  if (!(reference > 0.0)) {
    const auto g = TimeGrid::from_span(0.0, static_cast<double>(n) * tb, dt);
    const auto unit = model_gaussian_train(n, fwhm, tb, 1.0, 0.5 * tb, g);
    reference = kPi / raman_pulse_area(unit, ctx.model, 30, 31);
    reference_kind = "Raman pi area at interval T-bar";
  }
  const auto h = Hamiltonian::from_model(ctx.model);

  const std::size_t ni = intervals.size(), nf = rel.size();
  std::vector<TrainPoint> grid(ni * nf), cuts(cut.size());
  std::vector<bool> done(ni * nf, false), cut_done(cut.size(), false);
  ctx.fan_out(
      ni * nf,
      [&](std::size_t k) { return "interval=" + fmt(intervals[k / nf]) + ",fluence=" + fmt(rel[k % nf]); },
      [&](std::size_t k) {
        grid[k] = propagate_model_train(ctx.model, h, n, fwhm, intervals[k / nf], rel[k % nf] * reference, dt);
        done[k] = true;
      });
  ctx.fan_out(
      cut.size(), [&](std::size_t k) { return "cut fluence=" + fmt(cut[k]); },
      [&](std::size_t k) {
        cuts[k] = propagate_model_train(ctx.model, h, n, fwhm, cut_interval, cut[k] * reference, dt);
        cut_done[k] = true;
      });

  ctx.write("fig6_contour.csv", [&](std::ostream& os) {
    os << "interval_fs,relative_fluence,P29,P30,P31\n";
    os.precision(10);
    for (std::size_t k = 0; k < grid.size(); ++k)
      if (done[k])
        os << intervals[k / nf] << ',' << rel[k % nf] << ',' << grid[k].p29 << ',' << grid[k].p30 << ','
           << grid[k].p31 << '\n';
  });
  ctx.write("fig6_cut.csv", [&](std::ostream& os) {
    os << "relative_fluence,P29,P30,P31\n";
    os.precision(10);
    for (std::size_t k = 0; k < cut.size(); ++k)
      if (cut_done[k]) os << cut[k] << ',' << cuts[k].p29 << ',' << cuts[k].p30 << ',' << cuts[k].p31 << '\n';
  });

  // Closest approach to the equal three-level distribution along the cut, and the
  // best P31 over the whole map.
  double best_spread = 1e9, best_rel = 0.0, best_p31 = 0.0, best_p31_interval = 0.0, best_p31_rel = 0.0;
  for (std::size_t k = 0; k < cut.size(); ++k) {
    if (!cut_done[k]) continue;
    const auto& c = cuts[k];
    const double spread = std::max({c.p29, c.p30, c.p31}) - std::min({c.p29, c.p30, c.p31});
    if (spread < best_spread) {
      best_spread = spread;
      best_rel = cut[k];
    }
  }
  for (std::size_t k = 0; k < grid.size(); ++k)
    if (done[k] && grid[k].p31 > best_p31) {
      best_p31 = grid[k].p31;
      best_p31_interval = intervals[k / nf];
      best_p31_rel = rel[k % nf];
    }
  ctx.bundle.report["results"] = {{"reference_fluence_fs", reference},
                                  {"reference", reference_kind},
                                  {"cut_interval_fs", cut_interval},
                                  {"cut_min_spread", best_spread},
                                  {"cut_min_spread_relative_fluence", best_rel},
                                  {"max_P31", best_p31},
                                  {"max_P31_interval_fs", best_p31_interval},
                                  {"max_P31_relative_fluence", best_p31_rel}};
}

// --- suppression -----------------------------------------------------------

struct SuppressionOutcome {
  OptimizationResult result;
  SuppressionProblem setup;
  double free_metric = 0.0;
  double metric = 0.0;
};

SuppressionOutcome run_suppression(Context& ctx, double chirp, std::size_t subrun) {
  SuppressionOutcome o;
  const std::size_t count = ctx.count("count");
  o.setup = suppression_problem(ctx.model, chirp, count, ctx.num("t0_fs"), ctx.num("dt_fs"), ctx.num("gamma"));
  const auto& p = o.setup.problem;
  const auto seed = suppression_seed(ctx.model, p.grid, count, ctx.num("seed_area"), ctx.num("seed_fwhm_fs"),
                                     ctx.seed_jitter(subrun, count));
  const auto free = evaluate(p, ControlField(p.grid), 0.0);
  o.free_metric = deformation_metric(free.overlap, p.grid, p.target.comb);
  o.result = optimize(p, seed, ctx.optimizer());
  o.result.report.raman_area = raman_pulse_area(o.result.field, ctx.model, 30, 31);
  o.metric = o.result.report.final_objective / static_cast<double>(count + 1);
  return o;
}

void fig7(Context& ctx) {
  const auto chirps = ctx.list("chirps_sigma2");
  std::vector<SuppressionOutcome> runs(chirps.size());
  std::vector<bool> done(chirps.size(), false);
  ctx.fan_out(
      chirps.size(), [&](std::size_t i) { return "chirp=" + fmt(chirps[i]) + "sigma2"; },
      [&](std::size_t i) {
        runs[i] = run_suppression(ctx, chirps[i], i);
        done[i] = true;
      });
  ctx.write("fig7.csv", [&](std::ostream& os) {
    os << "chirp_sigma2,F_optimized,F_free,fluence_fs,iterations\n";
    os.precision(10);
    for (std::size_t i = 0; i < chirps.size(); ++i)
      if (done[i])
        os << chirps[i] << ',' << runs[i].metric << ',' << runs[i].free_metric << ','
           << runs[i].result.report.fluence << ',' << runs[i].result.report.iteration_count << '\n';
  });
  json arr = json::array();
  for (std::size_t i = 0; i < chirps.size(); ++i)
    if (done[i])
      arr.push_back({{"chirp_sigma2", chirps[i]},
                     {"F", runs[i].metric},
                     {"F_free", runs[i].free_metric},
                     {"report", runs[i].result.report}});
  ctx.bundle.report["results"] = {{"runs", arr}};
}

void suppression_detail(Context& ctx) {
  const double chirp = ctx.num("chirp_sigma2");
  ctx.fan_out(
      1, [&](std::size_t) { return "chirp=" + fmt(chirp) + "sigma2"; },
      [&](std::size_t) {
        const auto o = run_suppression(ctx, chirp, 0);
        const auto& p = o.setup.problem;
        ctx.write("envelope.csv", [&](std::ostream& os) { o.result.field.write_csv(os); });
        write_iterations(ctx, "iterations.csv", o.result.report);
        double excursion = 0.0;
        write_populations(ctx, "populations.csv", p, o.result.field, {28, 29, 30, 31, 32}, o.setup.pump.psi,
                          &excursion);
        write_populations(ctx, "populations_free.csv", p, ControlField(p.grid), {28, 29, 30, 31, 32},
                          o.setup.pump.psi);
        ctx.write("pump_coefficients.csv", [&](std::ostream& os) { o.setup.pump.write_coefficients_csv(os); });
        const auto a = detect_pulse_train(o.result.field, ctx.model);
        ctx.write("pulses.csv", [&](std::ostream& os) { a.write_csv(os); });
        ctx.bundle.report["results"] = {{"F", o.metric},
                                        {"F_free", o.free_metric},
                                        {"max_population_excursion", excursion},
                                        {"report", o.result.report},
                                        {"T_mean_fs", ctx.model.t_mean_fs()},
                                        {"pulses", analysis_summary(a, ctx.model.t_mean_fs())}};
      });
}

// --- impulsive contours ----------------------------------------------------

void fig11(Context& ctx) {
  const std::size_t res = ctx.count("resolution");
  const std::size_t n = ctx.count("n_pulses");
  if (res < 2 || n == 0) throw std::invalid_argument("fig11: resolution >= 2 and n_pulses >= 1 required");
  const double w1 = ctx.model.b_levels.spacing_cm(31, 30), w2 = ctx.model.b_levels.spacing_cm(30, 29);
  const auto spec = impulsive::PulseTrainSpec::regular(n, ctx.model.t_mean_fs(),
                                                       impulsive::kKickSign * kPi / (2.0 * static_cast<double>(n)),
                                                       w1, w2);
  const auto grid = impulsive::angle_grid(res);
  struct Case {
    const char* name;
    Eigen::Vector3d moduli;
  };
  const Case cases[] = {{"a", Eigen::Vector3d(std::sqrt(1.0 / 6), std::sqrt(2.0 / 3), std::sqrt(1.0 / 6))},
                        {"b", Eigen::Vector3d(0.5, std::sqrt(0.5), 0.5)},
                        {"c", Eigen::Vector3d::Constant(std::sqrt(1.0 / 3))}};
  const double w = ctx.num("window_rad");
  json res_json = json::object();
  for (const auto& c : cases) {
    const auto map = impulsive::f_contour(c.moduli, spec, grid, grid, ctx.config.jobs);
    ctx.write(std::string("fig11_") + c.name + ".csv", [&](std::ostream& os) { map.write_csv(os); });
    res_json[c.name] = {{"populations", {c.moduli[0] * c.moduli[0], c.moduli[1] * c.moduli[1], c.moduli[2] * c.moduli[2]}},
                        {"max", map.max()},
                        {"max_near_0_0", map.max_near(0.0, 0.0, w)},
                        {"max_near_pi_pi", map.max_near(kPi, kPi, w)}};
  }
  ctx.bundle.report["results"] = res_json;
}

const std::map<std::string, std::function<void(Context&)>>& runners() {
  static const std::map<std::string, std::function<void(Context&)>> table = {
      {"fig2", fig2},   {"fig3", transfer_detail},    {"fig4", transfer_detail},
      {"fig5", fig5},   {"fig6", fig6},               {"fig7", fig7},
      {"fig8", suppression_detail}, {"fig9", suppression_detail}, {"fig10", suppression_detail},
      {"fig11", fig11}};
  return table;
}

}  // namespace

std::vector<std::string> experiment_ids() {
  return {"fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11"};
}

nlohmann::json resolve_parameters(const std::string& id, const nlohmann::json& overrides) {
  const auto it = defaults_table().find(id);
  if (it == defaults_table().end()) throw std::invalid_argument("unknown experiment id: " + id);
  auto p = it->second();
  const auto& over = overrides.is_null() ? nlohmann::json::object() : overrides;
  check_types(p, over, id);
  p.merge_patch(over);
  // merge_patch drops keys set to null; keep the optional stop criterion visible.
  if (p.contains("optimizer") && !p["optimizer"].contains("stop_at_objective"))
    p["optimizer"]["stop_at_objective"] = nullptr;
  if (p.contains("optimizer")) optimizer_from(p.at("optimizer"));
  return p;
}

void ExperimentConfig::validate() const {
  const auto ids = experiment_ids();
  if (std::find(ids.begin(), ids.end(), id) == ids.end()) throw std::invalid_argument("unknown experiment id: " + id);
  if (jobs == 0) throw std::invalid_argument("ExperimentConfig: jobs must be at least 1");
  if (output_dir.empty()) throw std::invalid_argument("ExperimentConfig: empty output directory");
  resolve_parameters(id, overrides);
}

ExperimentBundle run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentBundle bundle;
  bundle.id = config.id;
  bundle.directory = config.output_dir / config.id;
  std::filesystem::create_directories(bundle.directory);

  const auto params = resolve_parameters(config.id, config.overrides);
  const auto model = MolecularModel::build(config.model);
  nlohmann::json resolved = {{"id", config.id},
                             {"model", config.model},
                             {"parameters", params},
                             {"seed", config.seed},
                             {"jobs", config.jobs}};
  bundle.report = {{"schema_version", kReportSchemaVersion},
                   {"experiment", config.id},
                   {"config", resolved},
                   {"model_summary",
                    {{"omega_31_30_cm", model.b_levels.spacing_cm(31, 30)},
                     {"omega_30_29_cm", model.b_levels.spacing_cm(30, 29)},
                     {"T31_30_fs", model.t_upper_fs()},
                     {"T30_29_fs", model.t_lower_fs()},
                     {"T_mean_fs", model.t_mean_fs()}}}};

  Context ctx(config, model, params, bundle);
  try {
    runners().at(config.id)(ctx);
  } catch (const std::exception& e) {
    bundle.failures.push_back(config.id + ": " + e.what());
  }
  std::sort(bundle.files.begin(), bundle.files.end());
  bundle.report["files"] = bundle.files;
  bundle.report["failures"] = bundle.failures;
  bundle.report["status"] = bundle.ok() ? "ok" : "failed";
  std::ofstream f(bundle.directory / "report.json");
  f << bundle.report.dump(2) << '\n';
  if (!f) throw std::runtime_error("cannot write report.json in " + bundle.directory.string());
  return bundle;
}

}  // namespace vibctl
