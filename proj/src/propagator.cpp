#include "vibctl/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace vibctl {

namespace {

constexpr std::size_t kLanes = 8;
constexpr cplx kI{0.0, 1.0};

// p[j] *= d[j] (or conj(d[j])) on interleaved complex arrays.
void multiply(std::span<cplx> psi, const ComplexVector& d, bool conjugate) {
  auto* p = reinterpret_cast<double*>(psi.data());
  const auto* q = reinterpret_cast<const double*>(d.data());
  const double sign = conjugate ? -1.0 : 1.0;
  const std::size_t n = psi.size();
  for (std::size_t j = 0; j < n; ++j) {
    const double dr = q[2 * j], di = sign * q[2 * j + 1];
    const double pr = p[2 * j], pi = p[2 * j + 1];
    p[2 * j] = pr * dr - pi * di;
    p[2 * j + 1] = pr * di + pi * dr;
  }
}

void check_size(std::span<const cplx> psi, std::size_t n, const char* what) {
  if (psi.size() != n) throw std::invalid_argument(std::string(what) + ": grid size mismatch");
}

}  // namespace

WaveFunction::WaveFunction(const SpatialGrid& g, ComplexVector amplitudes, double t_fs)
    : grid(g), psi(std::move(amplitudes)), t(t_fs) {
  if (psi.size() != grid.size()) throw std::invalid_argument("WaveFunction: grid size mismatch");
}

WaveFunction WaveFunction::from_real(const SpatialGrid& g, const Eigen::VectorXd& v, double t_fs) {
  return WaveFunction(g, to_complex(v), t_fs);
}

double WaveFunction::norm() const { return std::sqrt(norm_squared(psi)); }

void WaveFunction::normalize() {
  const double n = norm();
  if (!(n > 0.0)) throw std::runtime_error("WaveFunction: cannot normalize a zero state");
  for (auto& c : psi) c /= n;
}

cplx inner(std::span<const cplx> a, std::span<const cplx> b) {
  if (a.size() != b.size()) throw std::invalid_argument("inner: size mismatch");
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ar = a[i].real(), ai = a[i].imag(), br = b[i].real(), bi = b[i].imag();
    re += ar * br + ai * bi;
    im += ar * bi - ai * br;
  }
  return {re, im};
}

cplx inner(std::span<const cplx> a, std::span<const double> v, std::span<const cplx> b) {
  if (a.size() != b.size() || a.size() != v.size()) throw std::invalid_argument("inner: size mismatch");
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ar = a[i].real(), ai = a[i].imag(), br = b[i].real(), bi = b[i].imag();
    re += v[i] * (ar * br + ai * bi);
    im += v[i] * (ar * bi - ai * br);
  }
  return {re, im};
}

cplx inner(const Eigen::VectorXd& a, std::span<const cplx> b) {
  if (static_cast<std::size_t>(a.size()) != b.size()) throw std::invalid_argument("inner: size mismatch");
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    re += a[static_cast<Eigen::Index>(i)] * b[i].real();
    im += a[static_cast<Eigen::Index>(i)] * b[i].imag();
  }
  return {re, im};
}

double norm_squared(std::span<const cplx> a) {
  double s = 0.0;
  for (const auto& c : a) s += std::norm(c);
  return s;
}

ComplexVector to_complex(const Eigen::VectorXd& v) {
  ComplexVector out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = v[i];
  return out;
}

Hamiltonian Hamiltonian::from_model(const MolecularModel& m, double gamma) {
  Hamiltonian h;
  h.grid = m.config.grid;
  h.mass_au = m.config.mass_au();
  h.potential = m.b_potential;
  h.coupling = m.polarizability;
  h.gamma = gamma;
  return h;
}

void Hamiltonian::validate() const {
  const std::size_t n = grid.size();
  if (potential.size() != n) throw std::invalid_argument("Hamiltonian: potential size mismatch");
  if (!coupling.empty() && coupling.size() != n)
    throw std::invalid_argument("Hamiltonian: coupling size mismatch");
  if (!(mass_au > 0.0)) throw std::invalid_argument("Hamiltonian: mass must be positive");
  for (double v : potential)
    if (!std::isfinite(v)) throw std::invalid_argument("Hamiltonian: NaN in potential");
  for (double v : coupling)
    if (!std::isfinite(v)) throw std::invalid_argument("Hamiltonian: NaN in coupling");
  if (!std::isfinite(gamma)) throw std::invalid_argument("Hamiltonian: gamma not finite");
}

SplitStepper::SplitStepper(const Hamiltonian& h, double dt_fs)
    : h_(h), dt_fs_(dt_fs), dt_au_(units::fs_to_au(dt_fs)), fft_(h.grid.size()) {
  h_.validate();
  if (!(dt_fs > 0.0)) throw std::invalid_argument("SplitStepper: dt must be positive");
  const std::size_t n = h_.grid.size();
  const auto k = h_.grid.momenta();
  kinetic_.resize(n);
  potential_.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    kinetic_[j] = std::exp(-kI * (k[j] * k[j] / (2.0 * h_.mass_au)) * dt_au_) / static_cast<double>(n);
    potential_[j] = std::exp(-kI * h_.potential[j] * (0.5 * dt_au_));
  }
  if (!h_.coupling.empty()) {
    const double p = h_.coupling.front();
    const double q = (h_.coupling.back() - p) / static_cast<double>(n - 1 > 0 ? n - 1 : 1);
    double scale = 0.0, dev = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      scale = std::max(scale, std::abs(h_.coupling[j]));
      dev = std::max(dev, std::abs(h_.coupling[j] - (p + q * static_cast<double>(j))));
    }
    linear_coupling_ = dev <= 1e-13 * scale && n % kLanes == 0;
    coupling_offset_ = p;
    coupling_slope_ = q;
  }
}

void SplitStepper::apply_half_potential(std::span<cplx> psi, double f, bool adjoint) const {
  const std::size_t n = potential_.size();
  check_size(psi, n, "split step");
  if (f == 0.0 || h_.coupling.empty()) {
    multiply(psi, potential_, adjoint);
    return;
  }
  // exp(i c V_alpha f^2 dt / 8) with c = 1 + i gamma
  cplx beta = cplx(-h_.gamma, 1.0) * (f * f * dt_au_ / 8.0);
  if (adjoint) beta = std::conj(beta);
  if (linear_coupling_) {
    // exp(beta (p + q j)) on kLanes interleaved geometric chains.
    double wr[kLanes], wi[kLanes];
    const cplx z1 = std::exp(beta * coupling_slope_);
    const cplx zl = std::exp(beta * (coupling_slope_ * static_cast<double>(kLanes)));
    cplx w = std::exp(beta * coupling_offset_);
    for (std::size_t l = 0; l < kLanes; ++l) {
      wr[l] = w.real();
      wi[l] = w.imag();
      w *= z1;
    }
    const double zr = zl.real(), zi = zl.imag();
    const double sign = adjoint ? -1.0 : 1.0;
    auto* p = reinterpret_cast<double*>(psi.data());
    const auto* v = reinterpret_cast<const double*>(potential_.data());
    for (std::size_t j0 = 0; j0 < n; j0 += kLanes) {
      for (std::size_t l = 0; l < kLanes; ++l) {
        const std::size_t j = j0 + l;
        const double vr = v[2 * j], vi = sign * v[2 * j + 1];
        const double dr = vr * wr[l] - vi * wi[l];
        const double di = vr * wi[l] + vi * wr[l];
        const double pr = p[2 * j], pi = p[2 * j + 1];
        p[2 * j] = pr * dr - pi * di;
        p[2 * j + 1] = pr * di + pi * dr;
        const double nr = wr[l] * zr - wi[l] * zi;
        wi[l] = wr[l] * zi + wi[l] * zr;
        wr[l] = nr;
      }
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      const cplx d = adjoint ? std::conj(potential_[j]) : potential_[j];
      psi[j] *= d * std::exp(beta * h_.coupling[j]);
    }
  }
}

void SplitStepper::apply_kinetic(std::span<cplx> psi, bool adjoint) const {
  const std::size_t n = kinetic_.size();
  check_size(psi, n, "split step");
  fft_.forward(psi);
  multiply(psi, kinetic_, adjoint);
  fft_.backward(psi);
}

void SplitStepper::step(std::span<cplx> psi, double f_now, double f_next) const {
  apply_half_potential(psi, f_now, false);
  apply_kinetic(psi, false);
  apply_half_potential(psi, f_next, false);
}

void SplitStepper::step_adjoint(std::span<cplx> xi, double f_now, double f_next) const {
  apply_half_potential(xi, f_next, true);
  apply_kinetic(xi, true);
  apply_half_potential(xi, f_now, true);
}

void split_step(std::span<cplx> psi, std::span<const cplx> v_total, const SpatialGrid& grid,
                double mass_au, double dt_fs) {
  const std::size_t n = grid.size();
  check_size(psi, n, "split_step");
  if (v_total.size() != n) throw std::invalid_argument("split_step: potential size mismatch");
  for (const auto& v : v_total)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw std::invalid_argument("split_step: NaN in potential");
  const double dt = units::fs_to_au(dt_fs);
  const FftPlan fft(n);
  const auto k = grid.momenta();
  for (std::size_t j = 0; j < n; ++j) psi[j] *= std::exp(-kI * v_total[j] * (0.5 * dt));
  fft.forward(psi);
  for (std::size_t j = 0; j < n; ++j)
    psi[j] *= std::exp(-kI * (k[j] * k[j] / (2.0 * mass_au)) * dt) / static_cast<double>(n);
  fft.backward(psi);
  for (std::size_t j = 0; j < n; ++j) psi[j] *= std::exp(-kI * v_total[j] * (0.5 * dt));
}

void ForwardTrajectory::regenerate(const SplitStepper& stepper, const ControlField& field,
                                   std::size_t first, std::size_t last,
                                   std::vector<ComplexVector>& out) const {
  if (first > last || last > grid.steps)
    throw std::out_of_range("ForwardTrajectory: invalid segment");
  const std::size_t count = last - first + 1;
  out.resize(count);
  if (first == grid.steps) {
    out[0] = final_state;
    return;
  }
  if (first % stride != 0 || checkpoint_index(first) >= checkpoints.size())
    throw std::out_of_range("ForwardTrajectory: missing checkpoint");
  out[0] = checkpoints[checkpoint_index(first)];
  for (std::size_t i = 1; i < count; ++i) {
    out[i] = out[i - 1];
    const std::size_t k = first + i - 1;
    stepper.step(out[i], field[k], field[k + 1]);
  }
}

ForwardTrajectory propagate(const ComplexVector& psi0, const ControlField& field,
                            const SplitStepper& stepper, const PropagateOptions& options) {
  field.validate();
  if (psi0.size() != stepper.size()) throw std::invalid_argument("propagate: grid size mismatch");
  if (std::abs(field.grid.dt - stepper.dt_fs()) > 1e-12 * stepper.dt_fs())
    throw std::invalid_argument("propagate: field time step differs from stepper");
  if (options.checkpoint_stride == 0) throw std::invalid_argument("propagate: stride must be positive");

  ForwardTrajectory traj;
  traj.grid = field.grid;
  traj.stride = options.checkpoint_stride;
  const std::size_t m = field.grid.steps;
  if (options.store_checkpoints) traj.checkpoints.reserve(m / traj.stride + 1);

  ComplexVector psi = psi0;
  for (std::size_t k = 0;; ++k) {
    if (options.store_checkpoints && k % traj.stride == 0) traj.checkpoints.push_back(psi);
    if (options.observer) options.observer(k, psi);
    if (k == m) break;
    stepper.step(psi, field[k], field[k + 1]);
  }
  traj.final_state = std::move(psi);
  return traj;
}

AdjointResult propagate_adjoint_inhomogeneous(const ComplexVector& xi_final,
                                              const ControlField& field,
                                              const SplitStepper& stepper,
                                              const ForwardTrajectory& forward,
                                              const SourceTerm& source,
                                              const AdjointOptions& options) {
  field.validate();
  const std::size_t n = stepper.size();
  const std::size_t m = field.grid.steps;
  if (xi_final.size() != n) throw std::invalid_argument("adjoint: grid size mismatch");
  if (forward.grid.steps != m || forward.final_state.size() != n)
    throw std::invalid_argument("adjoint: forward trajectory does not match field");
  const bool has_source = !source.weights.empty();
  if (has_source) {
    if (source.weights.size() != m + 1) throw std::invalid_argument("adjoint: source weights size");
    if (!source.apply) throw std::invalid_argument("adjoint: source operator missing");
    for (double w : source.weights)
      if (!(w >= 0.0)) throw std::invalid_argument("adjoint: negative source weight");
  }
  if (forward.checkpoints.empty() && m > 0)
    throw std::invalid_argument("adjoint: forward checkpoints missing");

  const std::size_t stride = forward.stride;
  std::vector<ComplexVector> seg;
  std::size_t seg_start = (m == 0) ? 0 : ((m - 1) / stride) * stride;
  forward.regenerate(stepper, field, seg_start, m, seg);

  AdjointResult result;
  ComplexVector xi = xi_final;
  ComplexVector tmp(n);
  auto record = [&](std::size_t k, const ComplexVector& psi_k) {
    if (options.visitor) options.visitor(k, xi, psi_k);
    if (options.sample_stride != 0 && (k % options.sample_stride == 0 || k == m)) {
      result.steps.push_back(k);
      result.states.push_back(xi);
    }
  };
  auto add_source = [&](std::size_t k, const ComplexVector& psi_k) {
    if (!has_source || !source.active(k)) return;
    source.apply(k, psi_k, tmp);
    const double half = 0.5 * source.weights[k];
    for (std::size_t j = 0; j < n; ++j) xi[j] += half * tmp[j];
  };

  record(m, seg[m - seg_start]);
  for (std::size_t k = m; k-- > 0;) {
    if (k < seg_start) {
      const std::size_t end = seg_start;
      seg_start -= stride;
      forward.regenerate(stepper, field, seg_start, end, seg);
    }
    add_source(k + 1, seg[k + 1 - seg_start]);
    stepper.step_adjoint(xi, field[k], field[k + 1]);
    add_source(k, seg[k - seg_start]);
    record(k, seg[k - seg_start]);
  }
  std::reverse(result.steps.begin(), result.steps.end());
  std::reverse(result.states.begin(), result.states.end());
  result.initial = std::move(xi);
  return result;
}

TrajectoryRecorder::TrajectoryRecorder(const Eigensystem& eigs, std::vector<std::size_t> levels,
                                       ComplexVector reference, const TimeGrid& grid,
                                       std::size_t stride)
    : eigs_(&eigs), levels_(std::move(levels)), reference_(std::move(reference)), grid_(grid),
      stride_(stride == 0 ? 1 : stride) {
  for (auto v : levels_)
    if (v >= eigs.levels()) throw std::out_of_range("TrajectoryRecorder: level out of range");
}

StepObserver TrajectoryRecorder::observer() {
  return [this](std::size_t k, std::span<const cplx> psi) {
    if (k % stride_ != 0 && k != grid_.steps) return;
    Row row;
    row.t = grid_.time(k);
    for (auto v : levels_) row.populations.push_back(std::norm(inner(eigs_->level(v), psi)));
    row.overlap = reference_.empty() ? 0.0 : std::norm(inner(reference_, psi));
    row.norm = std::sqrt(norm_squared(psi));
    rows_.push_back(std::move(row));
  };
}

void TrajectoryRecorder::write_csv(std::ostream& os) const {
  os << "t_fs";
  for (auto v : levels_) os << ",P" << v;
  os << ",overlap,norm\n";
  os.precision(10);
  for (const auto& r : rows_) {
    os << r.t;
    for (double p : r.populations) os << ',' << p;
    os << ',' << r.overlap << ',' << r.norm << '\n';
  }
}

}  // namespace vibctl
