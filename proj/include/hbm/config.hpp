#pragma once

// Experiment configuration read from an INI file with sections [problem],
// [solver], [continuation] and [output]. Unknown sections or keys are errors.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hbm/continuation.hpp"
#include "hbm/experiment.hpp"
#include "hbm/newton.hpp"
#include "hbm/problems.hpp"

namespace hbm {

enum class ProblemId { Linear, Circuit, MassSpring, Beam };

std::string to_string(ProblemId id);
/// Accepts linear, circuit, mass-spring, beam.
ProblemId parse_problem_id(const std::string& name);

class ConfigError : public UsageError {
 public:
  using UsageError::UsageError;
};

struct ExperimentConfig {
  ProblemId problem = ProblemId::Circuit;

  // [problem]
  Index harmonics = 8;
  std::vector<Index> harmonics_list;
  int branch = 1;
  EnergyClock clock = EnergyClock::Rescaled;
  double amplitude = 1e-3;
  double target_energy = 10.0;
  /// Beam forcing frequency for solve/sweep; 0 selects s_start_factor * omega_1.
  double forcing_frequency = 0.0;
  BeamConfig beam;

  // [solver]
  NewtonSettings newton;
  bool warm_start = false;
  Index sample_count = 0;
  JacobianMode jacobian = JacobianMode::AnalyticAft;
  QuadratureTolerance quadrature;

  // [continuation]; the corrector starts from the solver settings.
  ContinuationSettings continuation;
  Index continuation_harmonics = 2;
  double s_start_factor = 0.7;
  double s_end_factor = 1.4;
  double state_scale = 1.0;
  /// 0 selects omega_1.
  double param_scale = 0.0;

  // [output]
  std::filesystem::path output_dir = ".";
  std::string solution_file = "solution.txt";
  std::string convergence_file = "convergence.csv";
  std::string branch_file = "branch.csv";
  std::string eb_file = "eb.csv";

  HbSystem::Options system_options() const;
};

/// Defaults for one problem (tolerance presets, harmonic lists, step sizes).
ExperimentConfig default_config(ProblemId id);

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Known-period problem for solve/sweep. The beam is built at its configured
/// forcing frequency. Throws for the mass-spring system.
DaeProblem make_known_period_problem(const ExperimentConfig& cfg);

SweepSettings make_sweep_settings(const ExperimentConfig& cfg);
MassSpringRunSettings make_mass_spring_settings(const ExperimentConfig& cfg);
FrequencyRunSettings make_frequency_settings(const ExperimentConfig& cfg, const BeamModel& model);

}  // namespace hbm
