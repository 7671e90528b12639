#include "vibctl/oct.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "vibctl/impulsive.hpp"

namespace vibctl {

namespace {

constexpr std::complex<double> kI{0.0, 1.0};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double sup_norm(const std::vector<double>& a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

Hamiltonian with_gamma(const Hamiltonian& h, double gamma) {
  Hamiltonian out = h;
  out.gamma = gamma;
  return out;
}

// Unit weights at the comb samples (the Gaussian peaks integrate to one).
std::vector<double> source_weights(const TargetSpec& target, const TimeGrid& grid) {
  std::vector<double> w;
  if (target.kind != TargetKind::DeformationComb) return w;
  w.assign(grid.points(), 0.0);
  for (auto k : target.comb.sample_indices(grid)) w[k] += 1.0;
  return w;
}

}  // namespace

CombSchedule CombSchedule::regular(double t0, double period, std::size_t count) {
  if (!(period > 0.0)) throw std::invalid_argument("CombSchedule: period must be positive");
  CombSchedule c;
  for (std::size_t n = 1; n <= count; ++n) c.peaks.push_back(t0 + period * static_cast<double>(n));
  c.search_half_width_fs = 0.25 * period;
  return c;
}

double CombSchedule::y(double t) const {
  double s = 0.0;
  for (double p : peaks) {
    const double x = (t - p) / width_fs;
    s += height * std::exp(-x * x);
  }
  return s;
}

void CombSchedule::validate(const TimeGrid& grid) const {
  if (!(width_fs > 0.0) || !(height > 0.0)) throw std::invalid_argument("CombSchedule: width and height must be positive");
  if (search_half_width_fs < 0.0) throw std::invalid_argument("CombSchedule: negative search window");
  double prev = grid.t_start;
  for (double p : peaks) {
    if (!(p > prev)) throw std::invalid_argument("CombSchedule: peaks must increase inside the horizon");
    prev = p;
  }
  if (!peaks.empty() && !(peaks.back() < grid.t_end()))
    throw std::invalid_argument("CombSchedule: peak at or after the final time");
  const auto idx = sample_indices(grid);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] == 0 || idx[i] >= grid.steps) throw std::invalid_argument("CombSchedule: peak on a horizon endpoint");
    if (i > 0 && idx[i] <= idx[i - 1]) throw std::invalid_argument("CombSchedule: peaks closer than the time step");
  }
}

std::vector<std::size_t> CombSchedule::sample_indices(const TimeGrid& grid) const {
  std::vector<std::size_t> out;
  out.reserve(peaks.size());
  for (double p : peaks) out.push_back(grid.nearest(p));
  return out;
}

bool CombSchedule::refresh(const TimeGrid& grid, const std::vector<double>& overlap) {
  if (search_half_width_fs <= 0.0 || peaks.empty()) return false;
  if (overlap.size() != grid.points()) throw std::invalid_argument("CombSchedule::refresh: overlap size");
  const auto w = static_cast<std::size_t>(std::floor(search_half_width_fs / grid.dt));
  auto idx = sample_indices(grid);
  bool moved = false;
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const std::size_t lo_limit = n == 0 ? 1 : idx[n - 1] + 1;
    const std::size_t hi_limit = n + 1 < idx.size() ? idx[n + 1] - 1 : grid.steps - 1;
    const std::size_t lo = std::max(lo_limit, idx[n] > w ? idx[n] - w : 0);
    const std::size_t hi = std::min(hi_limit, idx[n] + w);
    std::size_t best = idx[n];
    for (std::size_t k = lo; k <= hi; ++k)
      if (overlap[k] > overlap[best]) best = k;
    if (best != idx[n]) {
      idx[n] = best;
      peaks[n] = grid.time(best);
      moved = true;
    }
  }
  return moved;
}

void to_json(nlohmann::json& j, const CombSchedule& c) {
  j = {{"peaks_fs", c.peaks},
       {"width_fs", c.width_fs},
       {"height_per_fs", c.height},
       {"search_half_width_fs", c.search_half_width_fs}};
}

void from_json(const nlohmann::json& j, CombSchedule& c) {
  c.peaks = j.at("peaks_fs").get<std::vector<double>>();
  c.width_fs = j.value("width_fs", c.width_fs);
  c.height = j.value("height_per_fs", c.height);
  c.search_half_width_fs = j.value("search_half_width_fs", c.search_half_width_fs);
}

double comb_quadrature(const CombSchedule& comb, const TimeGrid& grid, const std::vector<double>& overlap) {
  if (overlap.size() != grid.points()) throw std::invalid_argument("comb_quadrature: overlap size");
  double s = 0.0;
  for (std::size_t k = 0; k < overlap.size(); ++k) {
    const double w = (k == 0 || k == grid.steps) ? 0.5 : 1.0;
    s += w * comb.y(grid.time(k)) * overlap[k];
  }
  return s * grid.dt;
}

TargetSpec TargetSpec::final_projector(ComplexVector target) {
  TargetSpec t;
  t.kind = TargetKind::FinalProjector;
  t.state = std::move(target);
  return t;
}

TargetSpec TargetSpec::deformation_comb(ComplexVector psi0, CombSchedule comb) {
  TargetSpec t;
  t.kind = TargetKind::DeformationComb;
  t.state = std::move(psi0);
  t.comb = std::move(comb);
  return t;
}

void TargetSpec::validate(const TimeGrid& grid) const {
  if (state.empty()) throw std::invalid_argument("TargetSpec: empty target state");
  if (std::abs(norm_squared(state) - 1.0) > 1e-8) throw std::invalid_argument("TargetSpec: target not normalized");
  if (kind == TargetKind::DeformationComb) comb.validate(grid);
}

double evaluate_objective(const OverlapSeries& overlap, const TimeGrid& grid, const TargetSpec& target) {
  if (overlap.size() != grid.points()) throw std::invalid_argument("evaluate_objective: missing samples");
  double j = overlap.back();
  if (target.kind == TargetKind::DeformationComb)
    for (auto k : target.comb.sample_indices(grid)) j += overlap[k];
  return j;
}

double deformation_metric(const OverlapSeries& overlap, const TimeGrid& grid, const CombSchedule& comb) {
  if (overlap.size() != grid.points()) throw std::invalid_argument("deformation_metric: missing samples");
  double s = overlap.back();
  for (auto k : comb.sample_indices(grid)) s += overlap[k];
  return s / static_cast<double>(comb.count() + 1);
}

ComplexVector build_shaping_target(const Eigensystem& eigs, double theta, std::size_t v) {
  if (v == 0 || v + 1 >= eigs.levels()) throw std::out_of_range("build_shaping_target: level range");
  const double s = 1.0 / std::sqrt(3.0);
  std::vector<std::complex<double>> c(v + 2, 0.0);
  c[v - 1] = s * std::exp(kI * theta);
  c[v] = s;
  c[v + 1] = s;
  ComplexVector psi(eigs.grid.size());
  for (std::size_t l = v - 1; l <= v + 1; ++l) {
    const auto col = eigs.vectors.col(static_cast<Eigen::Index>(l));
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] += c[l] * col[static_cast<Eigen::Index>(i)];
  }
  return psi;
}

void ControlProblem::validate() const {
  hamiltonian.validate();
  if (hamiltonian.coupling.empty()) throw std::invalid_argument("ControlProblem: no polarizability coupling");
  if (initial.size() != hamiltonian.grid.size()) throw std::invalid_argument("ControlProblem: initial state size");
  if (target.state.size() != hamiltonian.grid.size()) throw std::invalid_argument("ControlProblem: target size");
  grid.validate();
  if (grid.steps == 0) throw std::invalid_argument("ControlProblem: empty horizon");
  target.validate(grid);
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("ControlProblem: gamma must be >= 0");
}

Evaluation evaluate(const ControlProblem& problem, const ControlField& field, double gamma,
                    bool store_checkpoints, const StepObserver& extra) {
  const SplitStepper st(with_gamma(problem.hamiltonian, gamma), field.grid.dt);
  Evaluation e;
  e.overlap.resize(field.grid.points());
  PropagateOptions o;
  o.store_checkpoints = store_checkpoints;
  o.observer = [&](std::size_t k, std::span<const cplx> psi) {
    e.overlap[k] = std::norm(inner(problem.target.state, psi));
    if (extra) extra(k, psi);
  };
  e.trajectory = propagate(problem.initial, field, st, o);
  e.objective = evaluate_objective(e.overlap, field.grid, problem.target);
  return e;
}

namespace {

// Backward pass; calls visit(k, xi~_k, psi_k) with the endpoint-corrected costate.
void backward(const ControlProblem& problem, const ControlField& field, const SplitStepper& st,
              const ForwardTrajectory& fwd, const std::function<void(std::size_t, std::span<const cplx>,
                                                                     std::span<const cplx>)>& visit,
              AdjointOptions options = {}) {
  const auto& phi = problem.target.state;
  const std::size_t m = field.grid.steps;
  const std::size_t n = phi.size();
  ComplexVector xi_final(n);
  const cplx c = inner(phi, fwd.final_state);
  for (std::size_t i = 0; i < n; ++i) xi_final[i] = phi[i] * c;

  SourceTerm src;
  src.weights = source_weights(problem.target, field.grid);
  if (!src.weights.empty())
    src.apply = [&phi](std::size_t, std::span<const cplx> psi, std::span<cplx> out) {
      const cplx a = inner(phi, psi);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = phi[i] * a;
    };

  ComplexVector corrected(n);
  options.visitor = [&](std::size_t k, std::span<const cplx> xi, std::span<const cplx> psi) {
    const double w = src.weights.empty() ? 0.0 : src.weights[k];
    if (w == 0.0 || (k != 0 && k != m)) {
      visit(k, xi, psi);
      return;
    }
    const double sign = k == 0 ? -0.5 : 0.5;
    const cplx a = sign * w * inner(phi, psi);
    for (std::size_t i = 0; i < n; ++i) corrected[i] = xi[i] + a * phi[i];
    visit(k, corrected, psi);
  };
  propagate_adjoint_inhomogeneous(xi_final, field, st, fwd, src, options);
}

double gradient_factor(const TimeGrid& grid, std::size_t k) {
  return units::fs_to_au(grid.dt) * ((k == 0 || k == grid.steps) ? 0.5 : 1.0);
}

}  // namespace

GradientResult gradient(const ControlProblem& problem, const ControlField& field, double gamma,
                        const Evaluation* forward) {
  if (field.grid.steps != problem.grid.steps) throw std::invalid_argument("gradient: field does not match problem grid");
  Evaluation local;
  if (!forward || forward->trajectory.checkpoints.empty()) {
    local = evaluate(problem, field, gamma, true);
    forward = &local;
  }
  const SplitStepper st(with_gamma(problem.hamiltonian, gamma), field.grid.dt);
  const auto& va = problem.hamiltonian.coupling;
  const cplx c(1.0, gamma);
  GradientResult g;
  g.objective = forward->objective;
  g.overlap = forward->overlap;
  g.values.assign(field.size(), 0.0);
  backward(problem, field, st, forward->trajectory,
           [&](std::size_t k, std::span<const cplx> xi, std::span<const cplx> psi) {
             if (field[k] == 0.0) return;
             g.values[k] = -gradient_factor(field.grid, k) * field[k] * std::imag(c * inner(xi, va, psi));
           });
  return g;
}

bool OptimizationReport::monotone() const {
  for (std::size_t i = 1; i < iterations.size(); ++i)
    if (iterations[i].objective < iterations[i - 1].objective) return false;
  return true;
}

void to_json(nlohmann::json& j, const IterationRecord& r) {
  j = {{"J", r.objective},
       {"J_design", r.design_objective},
       {"fluence_fs", r.fluence},
       {"step", r.step},
       {"backtracks", r.backtracks}};
}

void to_json(nlohmann::json& j, const OptimizationReport& r) {
  j = {{"iterations", r.iterations},
       {"final_objective", r.final_objective},
       {"final_term", r.final_term},
       {"fluence_fs", r.fluence},
       {"raman_area_rad", r.raman_area},
       {"gradient_sup_initial", r.gradient_norm_initial},
       {"gradient_sup_final", r.gradient_norm_final},
       {"iteration_count", r.iteration_count},
       {"converged", r.converged},
       {"stop_reason", r.stop_reason},
       {"gamma", r.gamma},
       {"comb_peaks_fs", r.comb_peaks},
       {"monotone", r.monotone()}};
}

void to_json(nlohmann::json& j, const OptimizerOptions& o) {
  j = {{"method", o.method == OptimizerMethod::Krotov ? "krotov" : "gradient"},
       {"max_iterations", o.max_iterations},
       {"stall_tolerance", o.stall_tolerance},
       {"stall_window", o.stall_window},
       {"memory", o.memory},
       {"max_backtracks", o.max_backtracks},
       {"armijo", o.armijo},
       {"initial_step", o.initial_step},
       {"krotov_step", o.krotov_step}};
  if (o.stop_at_objective) j["stop_at_objective"] = *o.stop_at_objective;
}

void from_json(const nlohmann::json& j, OptimizerOptions& o) {
  const auto m = j.value("method", std::string("gradient"));
  if (m == "gradient") o.method = OptimizerMethod::Gradient;
  else if (m == "krotov") o.method = OptimizerMethod::Krotov;
  else throw std::invalid_argument("OptimizerOptions: unknown method " + m);
  o.max_iterations = j.value("max_iterations", o.max_iterations);
  o.stall_tolerance = j.value("stall_tolerance", o.stall_tolerance);
  o.stall_window = j.value("stall_window", o.stall_window);
  o.memory = j.value("memory", o.memory);
  o.max_backtracks = j.value("max_backtracks", o.max_backtracks);
  o.armijo = j.value("armijo", o.armijo);
  o.initial_step = j.value("initial_step", o.initial_step);
  o.krotov_step = j.value("krotov_step", o.krotov_step);
  if (j.contains("stop_at_objective")) o.stop_at_objective = j.at("stop_at_objective").get<double>();
}

namespace {

struct Iterate {
  ControlField field;
  Evaluation design;               // gamma dynamics, with checkpoints
  OverlapSeries physical_overlap;  // gamma = 0
  double design_j = 0.0;
  double physical_j = 0.0;
};

class Optimizer {
 public:
  Optimizer(const ControlProblem& p, const OptimizerOptions& o) : problem_(p), opts_(o) {}

  OptimizationResult run(const ControlField& initial) {
    problem_.validate();
    initial.validate();
    if (initial.grid.steps != problem_.grid.steps || std::abs(initial.grid.dt - problem_.grid.dt) > 1e-12)
      throw std::invalid_argument("optimize: initial field does not match problem grid");
    if (sup_norm(initial.values) == 0.0)
      throw std::invalid_argument("optimize: zero initial field is a stationary point");

    cur_ = make_iterate(initial);
    if (problem_.target.kind == TargetKind::DeformationComb) {
      problem_.target.comb.refresh(problem_.grid, cur_.physical_overlap);
      rescore(cur_);
    }
    report_.gamma = problem_.gamma;
    record(0.0, 0);

    std::size_t stall = 0;
    std::string reason = "iteration limit";
    bool converged = false;
    auto g = gradient(problem_, cur_.field, problem_.gamma, &cur_.design);
    report_.gradient_norm_initial = sup_norm(g.values);
    double gsup = report_.gradient_norm_initial;

    for (std::size_t it = 1; it <= opts_.max_iterations; ++it) {
      if (opts_.stop_at_objective && cur_.physical_j >= *opts_.stop_at_objective) {
        reason = "objective reached";
        converged = true;
        break;
      }
      if (gsup <= 1e-5 * report_.gradient_norm_initial) {
        reason = "gradient vanished";
        converged = true;
        break;
      }
      const double before = cur_.physical_j;
      bool ok = opts_.method == OptimizerMethod::Krotov ? krotov_step(g) : lbfgs_step(g);
      if (!ok) {
        reason = "line search failed";
        break;
      }
      if (opts_.progress) opts_.progress(it, cur_.physical_j);
      const double rel = std::abs(cur_.physical_j - before) / std::max(std::abs(before), 1e-300);
      stall = rel < opts_.stall_tolerance ? stall + 1 : 0;
      if (stall >= opts_.stall_window) {
        reason = "stalled";
        converged = true;
        break;
      }
      const auto old_g = g.values;
      g = gradient(problem_, cur_.field, problem_.gamma, &cur_.design);
      gsup = sup_norm(g.values);
      if (opts_.method == OptimizerMethod::Gradient) push_pair(old_g, g.values);
    }

    report_.stop_reason = reason;
    report_.converged = converged;
    report_.gradient_norm_final = gsup;
    report_.iteration_count = report_.iterations.size() - 1;
    report_.final_objective = cur_.physical_j;
    report_.final_term = cur_.physical_overlap.back();
    report_.fluence = cur_.field.fluence();
    report_.comb_peaks = problem_.target.comb.peaks;
    return {cur_.field, report_, problem_.target};
  }

 private:
  Iterate make_iterate(const ControlField& f, Evaluation* design = nullptr) {
    Iterate it;
    it.field = f;
    it.design = design ? std::move(*design) : evaluate(problem_, f, problem_.gamma, true);
    if (problem_.gamma == 0.0) it.physical_overlap = it.design.overlap;
    else it.physical_overlap = evaluate(problem_, f, 0.0, false).overlap;
    rescore(it);
    return it;
  }

  void rescore(Iterate& it) const {
    it.design_j = evaluate_objective(it.design.overlap, problem_.grid, problem_.target);
    it.design.objective = it.design_j;
    it.physical_j = evaluate_objective(it.physical_overlap, problem_.grid, problem_.target);
  }

  // Accepts `trial` if both objectives pass; refreshes the comb on acceptance.
  bool try_accept(Iterate& trial, double design_threshold) {
    if (!(trial.design_j >= design_threshold)) return false;
    const CombSchedule saved = problem_.target.comb;
    if (problem_.target.kind == TargetKind::DeformationComb) {
      problem_.target.comb.refresh(problem_.grid, trial.physical_overlap);
      rescore(trial);
    }
    if (!(trial.physical_j >= cur_.physical_j)) {
      problem_.target.comb = saved;
      return false;
    }
    cur_ = std::move(trial);
    return true;
  }

  void record(double step, std::size_t backtracks) {
    report_.iterations.push_back({cur_.physical_j, cur_.design_j, cur_.field.fluence(), step, backtracks});
  }

  std::vector<double> direction(const std::vector<double>& g) const {
    // Two-loop recursion for the minimization of -J.
    std::vector<double> q(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) q[i] = -g[i];
    std::vector<double> alpha(s_.size());
    for (std::size_t i = s_.size(); i-- > 0;) {
      alpha[i] = rho_[i] * dot(s_[i], q);
      for (std::size_t k = 0; k < q.size(); ++k) q[k] -= alpha[i] * y_[i][k];
    }
    const double scale = s_.empty() ? 1.0 : dot(s_.back(), y_.back()) / dot(y_.back(), y_.back());
    for (auto& x : q) x *= scale;
    for (std::size_t i = 0; i < s_.size(); ++i) {
      const double beta = rho_[i] * dot(y_[i], q);
      for (std::size_t k = 0; k < q.size(); ++k) q[k] += s_[i][k] * (alpha[i] - beta);
    }
    for (auto& x : q) x = -x;
    return q;
  }

  void push_pair(const std::vector<double>& g_old, const std::vector<double>& g_new) {
    if (last_step_.empty()) return;
    std::vector<double> y(g_new.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = -(g_new[i] - g_old[i]);
    const double sy = dot(last_step_, y);
    if (sy > 1e-12 * std::sqrt(dot(last_step_, last_step_) * dot(y, y))) {
      s_.push_back(last_step_);
      y_.push_back(std::move(y));
      rho_.push_back(1.0 / sy);
      while (s_.size() > opts_.memory) {
        s_.pop_front();
        y_.pop_front();
        rho_.pop_front();
      }
    }
    last_step_.clear();
  }

  bool lbfgs_step(const GradientResult& g) {
    if (try_direction(g, direction(g.values))) return true;
    if (s_.empty()) return false;
    // Fall back to steepest ascent with a fresh memory.
    s_.clear();
    y_.clear();
    rho_.clear();
    return try_direction(g, g.values);
  }

  bool try_direction(const GradientResult& g, std::vector<double> d) {
    double slope = dot(g.values, d);
    if (!(slope > 0.0)) {
      s_.clear();
      y_.clear();
      rho_.clear();
      d = g.values;
      slope = dot(g.values, d);
    }
    if (!(slope > 0.0)) return false;
    double step = 1.0;
    if (s_.empty()) {
      const double fmax = std::max(sup_norm(cur_.field.values), 1e-12);
      step = opts_.initial_step * fmax / sup_norm(d);
    }
    for (std::size_t bt = 0; bt <= opts_.max_backtracks; ++bt, step *= 0.5) {
      ControlField f = cur_.field;
      for (std::size_t k = 0; k < f.size(); ++k) f[k] += step * d[k];
      Iterate trial = make_iterate(f);
      if (try_accept(trial, cur_.design_j + opts_.armijo * step * slope)) {
        last_step_.resize(d.size());
        for (std::size_t k = 0; k < d.size(); ++k) last_step_[k] = step * d[k];
        record(step, bt);
        return true;
      }
    }
    return false;
  }

  // Sequential update f_k <- f_k + eta G_k(xi_old, psi_new) with xi regenerated per segment.
  bool krotov_step(const GradientResult&) {
    const auto& grid = problem_.grid;
    const std::size_t m = grid.steps;
    const SplitStepper st(with_gamma(problem_.hamiltonian, problem_.gamma), grid.dt);
    const std::size_t stride = cur_.design.trajectory.stride;
    // Costate checkpoints at the forward stride.
    std::vector<ComplexVector> xi_cp(m / stride + 1);
    ComplexVector xi_end;
    backward(problem_, cur_.field, st, cur_.design.trajectory,
             [&](std::size_t k, std::span<const cplx> xi, std::span<const cplx>) {
               if (k % stride == 0) xi_cp[k / stride].assign(xi.begin(), xi.end());
               if (k == m) xi_end.assign(xi.begin(), xi.end());
             });
    const auto& va = problem_.hamiltonian.coupling;
    const cplx c(1.0, problem_.gamma);
    const auto& phi = problem_.target.state;
    const auto weights = source_weights(problem_.target, grid);
    const std::size_t n = phi.size();

    for (std::size_t bt = 0; bt <= opts_.max_backtracks; ++bt, eta_ *= 0.5) {
      const double eta = opts_.krotov_step * eta_;
      ControlField f = cur_.field;
      Evaluation design;
      design.overlap.resize(grid.points());
      design.trajectory.grid = grid;
      design.trajectory.stride = stride;
      ComplexVector psi = problem_.initial;
      ComplexVector tmp(n);
      std::vector<ComplexVector> old_seg, xi_seg;
      auto update = [&](std::size_t k, std::span<const cplx> xi, std::span<const cplx> state) {
        double g = -gradient_factor(grid, k) * cur_.field[k] * std::imag(c * inner(xi, va, state));
        f[k] = cur_.field[k] + eta * g;
      };
      for (std::size_t a = 0; a < m; a += stride) {
        const std::size_t b = std::min(a + stride, m);
        cur_.design.trajectory.regenerate(st, cur_.field, a, b, old_seg);
        // Costate on [a, b] from the checkpoint at b.
        xi_seg.assign(b - a + 1, ComplexVector());
        xi_seg[b - a] = (b == m) ? xi_end : xi_cp[b / stride];
        ComplexVector xi = xi_seg[b - a];
        for (std::size_t k = b; k-- > a;) {
          auto add = [&](std::size_t j) {
            if (weights.empty() || weights[j] == 0.0) return;
            const cplx s = 0.5 * weights[j] * inner(phi, old_seg[j - a]);
            for (std::size_t i = 0; i < n; ++i) xi[i] += s * phi[i];
          };
          add(k + 1);
          st.step_adjoint(xi, cur_.field[k], cur_.field[k + 1]);
          add(k);
          xi_seg[k - a] = xi;
        }
        for (std::size_t k = a; k < b; ++k) {
          if (k == 0) update(0, xi_seg[0], psi);
          if (k % stride == 0) design.trajectory.checkpoints.push_back(psi);
          design.overlap[k] = std::norm(inner(phi, psi));
          st.apply_half_potential(psi, f[k], false);
          st.apply_kinetic(psi, false);
          tmp = psi;
          st.apply_half_potential(tmp, cur_.field[k + 1], false);
          update(k + 1, xi_seg[k + 1 - a], tmp);
          st.apply_half_potential(psi, f[k + 1], false);
        }
      }
      if (m % stride == 0) design.trajectory.checkpoints.push_back(psi);
      design.overlap[m] = std::norm(inner(phi, psi));
      design.trajectory.final_state = psi;
      design.objective = evaluate_objective(design.overlap, grid, problem_.target);
      Iterate trial = make_iterate(f, &design);
      if (try_accept(trial, cur_.design_j)) {
        record(eta, bt);
        eta_ = std::min(1.0, eta_ * 2.0);
        return true;
      }
    }
    return false;
  }

  ControlProblem problem_;
  OptimizerOptions opts_;
  Iterate cur_;
  OptimizationReport report_;
  std::deque<std::vector<double>> s_, y_;
  std::deque<double> rho_;
  std::vector<double> last_step_;
  double eta_ = 1.0;
};

}  // namespace

OptimizationResult optimize(const ControlProblem& problem, const ControlField& initial,
                            const OptimizerOptions& options) {
  Optimizer o(problem, options);
  return o.run(initial);
}

double raman_pulse_area(const ControlField& field, const MolecularModel& model, std::size_t v,
                        std::size_t v_prime) {
  const double element = raman_matrix_element(model.b_levels, model.config.polarizability, v_prime, v);
  const double w = std::abs(model.b_levels.spacing_cm(std::max(v, v_prime), std::min(v, v_prime)));
  return 2.0 * std::abs(impulsive::kick_strength(field, field.grid.t_start, element, w));
}

double relative_fluence(const ControlField& field, const ControlField& reference) {
  const double r = reference.fluence();
  if (!(r > 0.0)) throw std::invalid_argument("relative_fluence: zero reference fluence");
  return field.fluence() / r;
}

ControlField seed_pulse_train(const TimeGrid& grid, const std::vector<double>& centres, double fwhm_fs,
                              double area, const MolecularModel& model, std::size_t v, std::size_t v_prime) {
  if (centres.empty()) throw std::invalid_argument("seed_pulse_train: no pulses");
  if (!(area > 0.0)) throw std::invalid_argument("seed_pulse_train: area must be positive");
  ControlField unit(grid);
  for (double t : centres) add_gaussian_lobe(unit, t, fwhm_fs, 1.0);
  const double a1 = raman_pulse_area(unit, model, v, v_prime);
  if (!(a1 > 0.0)) throw std::runtime_error("seed_pulse_train: pulses have no Raman area");
  ControlField f(grid);
  const double fluence = area / a1;
  for (double t : centres) add_gaussian_lobe(f, t, fwhm_fs, fluence);
  return f;
}

}  // namespace vibctl
