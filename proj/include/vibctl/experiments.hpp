#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "vibctl/control_field.hpp"
#include "vibctl/molecular_model.hpp"
#include "vibctl/oct.hpp"
#include "vibctl/pump.hpp"

// Named experiments: problem builders, pulse-train analysis and the figure runners.
namespace vibctl {

inline constexpr int kReportSchemaVersion = 1;

struct DetectOptions {
  double floor_fraction = 0.05;  ///< of the global max of f^2
  double merge_fs = 50.0;
  std::size_t level = 30;        ///< kick strengths for level -> level_prime
  std::size_t level_prime = 31;
};

void to_json(nlohmann::json& j, const DetectOptions& o);

struct PulseTrainAnalysis {
  std::vector<double> peak_times;  ///< fs
  std::vector<double> intervals;   ///< successive peak differences (fs)
  std::vector<double> fluences;    ///< per window; sums to total_fluence
  std::vector<std::complex<double>> kicks;  ///< a_n referenced to each peak time
  std::vector<bool> inverted;      ///< f < 0 at the peak
  std::vector<std::size_t> window_first, window_last;
  double total_fluence = 0.0;
  double omega_cm = 0.0;           ///< transition frequency of the kicks

  std::size_t count() const { return peak_times.size(); }
  double mean_interval() const;
  /// Interval divided by the number of periods it spans, round(dt / period); undoes
  /// gaps left by pulses below the detection floor.
  std::vector<double> normalized_intervals(double period_fs) const;
  /// 2 |sum_n a_n exp(i w (tau_n - tau_1))|, the Raman area of the whole train.
  double raman_area() const;
  void write_csv(std::ostream& os) const;
};

void to_json(nlohmann::json& j, const PulseTrainAnalysis& a);

/// Peaks are local maxima of f^2 above the floor, merged within merge_fs (the larger
/// survives). Windows split the grid at the minimum of f^2 between adjacent peaks.
PulseTrainAnalysis detect_pulse_train(const ControlField& field, const MolecularModel& model,
                                      const DetectOptions& options = {});

/// n identical Gaussian intensity lobes, the first centred at t_first_fs; total
/// fluence shared equally. Throws if neighbours overlap by more than 1% of a lobe
/// or more than 1% of the fluence falls off the grid.
ControlField model_gaussian_train(std::size_t n, double fwhm_fs, double interval_fs, double total_fluence,
                                  double t_first_fs, const TimeGrid& grid);

/// Reads "t_fs,f" CSV written by ControlField::write_csv (uniform grid required).
ControlField read_field_csv(std::istream& is);

// Problem builders. Horizons are in periods: T_{31,30} for transfer, T-bar otherwise.

/// |30> at t = 0 to |31> at t_f = periods * T_{31,30}.
ControlProblem transfer_problem(const MolecularModel& model, double periods, double dt_fs = 0.1,
                                double gamma = 0.0);
/// Lobes at (n - 1/2) T_{31,30}, total Raman area `area`.
ControlField transfer_seed(const MolecularModel& model, const TimeGrid& grid, double area = units::kPi / 10,
                           double fwhm_fs = 30.0, const std::vector<double>& jitter_fs = {});
/// Fluence of the analytic Raman pi train (lobes at (n - 1/2) T_{31,30}) over `periods`.
double pi_train_fluence(const MolecularModel& model, std::size_t periods, double fwhm_fs = 30.0,
                        double dt_fs = 0.1);

struct SuppressionProblem {
  ControlProblem problem;
  InitialState pump;  ///< psi0 referenced to the pump centre
};

/// Pump at t = 0, control on [t0, (count + 1) T-bar], comb at n T-bar (n = 1..count).
SuppressionProblem suppression_problem(const MolecularModel& model, double chirp_sigma2, std::size_t count = 16,
                                       double t0_fs = 300.0, double dt_fs = 0.1, double gamma = 0.0);
/// Lobes at n T-bar, n = 1..count.
ControlField suppression_seed(const MolecularModel& model, const TimeGrid& grid, std::size_t count,
                              double area = units::kPi / 2, double fwhm_fs = 30.0,
                              const std::vector<double>& jitter_fs = {});

/// |30> at t = 0 to the shaping target at periods * T-bar.
ControlProblem shaping_problem(const MolecularModel& model, double theta, double periods = 60.0,
                               double dt_fs = 0.1, double gamma = 0.0);
/// Lobes at (n - 1/2) T-bar.
ControlField shaping_seed(const MolecularModel& model, const TimeGrid& grid, double area = 0.6,
                          double fwhm_fs = 30.0, const std::vector<double>& jitter_fs = {});

/// Largest |P_v(t) - P_v(t0)| over the levels and the stored samples of a recorder.
double max_population_excursion(const TrajectoryRecorder& recorder);

struct ExperimentConfig {
  std::string id;               ///< fig2 .. fig11
  ModelConfig model = ModelConfig::defaults();
  nlohmann::json overrides = nlohmann::json::object();
  std::filesystem::path output_dir = "out";
  std::size_t jobs = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<std::string> experiment_ids();

/// Defaults of an experiment merged with the overrides. Unknown keys and values of the
/// wrong JSON type throw std::invalid_argument.
nlohmann::json resolve_parameters(const std::string& id, const nlohmann::json& overrides);

struct ExperimentBundle {
  std::string id;
  std::filesystem::path directory;
  std::vector<std::string> files;     ///< relative to directory, sorted
  nlohmann::json report;              ///< also written to report.json
  std::vector<std::string> failures;  ///< "<sub-run id>: <message>"

  bool ok() const { return failures.empty(); }
};

/// Runs one experiment into output_dir/<id>/. Failed sub-runs are listed in the
/// bundle (and the report) rather than aborting the others.
ExperimentBundle run_experiment(const ExperimentConfig& config);

}  // namespace vibctl
