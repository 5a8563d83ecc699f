#include "hbm/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace hbm {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  return d;
}

long to_integer(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != static_cast<double>(static_cast<long>(d))) throw ConfigError("config: " + key + " expects an integer");
  return static_cast<long>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError("config: " + key + " expects a boolean, got '" + v + "'");
}

std::vector<Index> to_index_list(const std::string& key, const std::string& v) {
  std::string s = v;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream in(s);
  std::vector<Index> out;
  std::string tok;
  while (in >> tok) out.push_back(static_cast<Index>(to_integer(key, tok)));
  if (out.empty()) throw ConfigError("config: " + key + " is empty");
  return out;
}

InnerSolver to_inner(const std::string& key, const std::string& v) {
  if (v == "lu") return InnerSolver::DirectLu;
  if (v == "krylov") return InnerSolver::Krylov;
  if (v == "least-squares") return InnerSolver::LeastSquares;
  if (v == "minimum-norm") return InnerSolver::MinimumNorm;
  throw ConfigError("config: " + key + " must be lu, krylov, least-squares or minimum-norm");
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

// Newton settings shared by [solver] and the corrector in [continuation].
void newton_keys(std::map<std::string, Setter>& t, const std::string& prefix,
                 std::function<NewtonSettings&(ExperimentConfig&)> pick) {
  t[prefix + "abs_tol"] = [pick](auto& c, auto& k, auto& v) { pick(c).abs_tol = to_double(k, v); };
  t[prefix + "rel_tol"] = [pick](auto& c, auto& k, auto& v) { pick(c).rel_tol = to_double(k, v); };
  t[prefix + "update_tol"] = [pick](auto& c, auto& k, auto& v) {
    if (v == "none")
      pick(c).update_tol.reset();
    else
      pick(c).update_tol = to_double(k, v);
  };
  t[prefix + "max_iters"] = [pick](auto& c, auto& k, auto& v) { pick(c).max_iters = static_cast<int>(to_integer(k, v)); };
  t[prefix + "inner"] = [pick](auto& c, auto& k, auto& v) { pick(c).inner = to_inner(k, v); };
  t[prefix + "theta"] = [pick](auto& c, auto& k, auto& v) { pick(c).krylov.theta = to_double(k, v); };
  t[prefix + "restart"] = [pick](auto& c, auto& k, auto& v) {
    pick(c).krylov.restart = static_cast<int>(to_integer(k, v));
  };
  t[prefix + "krylov_max_iters"] = [pick](auto& c, auto& k, auto& v) {
    pick(c).krylov.max_iterations = static_cast<int>(to_integer(k, v));
  };
  t[prefix + "precondition"] = [pick](auto& c, auto& k, auto& v) { pick(c).krylov.precondition = to_bool(k, v); };
  t[prefix + "max_halvings"] = [pick](auto& c, auto& k, auto& v) {
    pick(c).max_halvings = static_cast<int>(to_integer(k, v));
  };
  t[prefix + "damp_on_increase"] = [pick](auto& c, auto& k, auto& v) { pick(c).damp_on_increase = to_bool(k, v); };
  t[prefix + "stagnation_window"] = [pick](auto& c, auto& k, auto& v) {
    pick(c).stagnation_window = static_cast<int>(to_integer(k, v));
  };
}

std::map<std::string, Setter> key_table() {
  std::map<std::string, Setter> t;
  // [problem]; "id" is handled before the table.
  t["problem.harmonics"] = [](auto& c, auto& k, auto& v) { c.harmonics = to_integer(k, v); };
  t["problem.harmonics_list"] = [](auto& c, auto& k, auto& v) { c.harmonics_list = to_index_list(k, v); };
  t["problem.branch"] = [](auto& c, auto& k, auto& v) { c.branch = static_cast<int>(to_integer(k, v)); };
  t["problem.energy_clock"] = [](auto& c, auto& k, auto& v) {
    if (v == "rescaled")
      c.clock = EnergyClock::Rescaled;
    else if (v == "physical")
      c.clock = EnergyClock::Physical;
    else
      throw ConfigError("config: " + k + " must be rescaled or physical");
  };
  t["problem.amplitude"] = [](auto& c, auto& k, auto& v) { c.amplitude = to_double(k, v); };
  t["problem.target_energy"] = [](auto& c, auto& k, auto& v) { c.target_energy = to_double(k, v); };
  t["problem.forcing_frequency"] = [](auto& c, auto& k, auto& v) { c.forcing_frequency = to_double(k, v); };
  t["problem.elements"] = [](auto& c, auto& k, auto& v) { c.beam.elements = static_cast<int>(to_integer(k, v)); };
  t["problem.length"] = [](auto& c, auto& k, auto& v) { c.beam.length = to_double(k, v); };
  t["problem.youngs_modulus"] = [](auto& c, auto& k, auto& v) { c.beam.youngs_modulus = to_double(k, v); };
  t["problem.density"] = [](auto& c, auto& k, auto& v) { c.beam.density = to_double(k, v); };
  t["problem.section_side"] = [](auto& c, auto& k, auto& v) { c.beam.section_side = to_double(k, v); };
  t["problem.cubic_stiffness"] = [](auto& c, auto& k, auto& v) { c.beam.cubic_stiffness = to_double(k, v); };
  t["problem.rayleigh_mass"] = [](auto& c, auto& k, auto& v) { c.beam.rayleigh_mass = to_double(k, v); };
  t["problem.rayleigh_stiffness"] = [](auto& c, auto& k, auto& v) { c.beam.rayleigh_stiffness = to_double(k, v); };
  t["problem.forcing_amplitude"] = [](auto& c, auto& k, auto& v) { c.beam.forcing_amplitude = to_double(k, v); };
  t["problem.forcing_dof"] = [](auto& c, auto& k, auto& v) { c.beam.forcing_dof = static_cast<int>(to_integer(k, v)); };

  // [solver]; "preset" is handled before the table.
  newton_keys(t, "solver.", [](ExperimentConfig& c) -> NewtonSettings& { return c.newton; });
  t["solver.warm_start"] = [](auto& c, auto& k, auto& v) { c.warm_start = to_bool(k, v); };
  t["solver.sample_count"] = [](auto& c, auto& k, auto& v) { c.sample_count = to_integer(k, v); };
  t["solver.jacobian"] = [](auto& c, auto& k, auto& v) {
    if (v == "analytic")
      c.jacobian = JacobianMode::AnalyticAft;
    else if (v == "fd")
      c.jacobian = JacobianMode::FiniteDifference;
    else
      throw ConfigError("config: " + k + " must be analytic or fd");
  };
  t["solver.quadrature_abs"] = [](auto& c, auto& k, auto& v) { c.quadrature.absolute = to_double(k, v); };
  t["solver.quadrature_rel"] = [](auto& c, auto& k, auto& v) { c.quadrature.relative = to_double(k, v); };
  t["solver.quadrature_max_subdivisions"] = [](auto& c, auto& k, auto& v) {
    c.quadrature.max_subdivisions = static_cast<int>(to_integer(k, v));
  };

  // [continuation]
  newton_keys(t, "continuation.corrector_",
              [](ExperimentConfig& c) -> NewtonSettings& { return c.continuation.corrector; });
  t["continuation.harmonics"] = [](auto& c, auto& k, auto& v) { c.continuation_harmonics = to_integer(k, v); };
  t["continuation.initial_step"] = [](auto& c, auto& k, auto& v) { c.continuation.initial_step = to_double(k, v); };
  t["continuation.min_step"] = [](auto& c, auto& k, auto& v) { c.continuation.min_step = to_double(k, v); };
  t["continuation.max_step"] = [](auto& c, auto& k, auto& v) { c.continuation.max_step = to_double(k, v); };
  t["continuation.max_steps"] = [](auto& c, auto& k, auto& v) {
    c.continuation.max_steps = static_cast<int>(to_integer(k, v));
  };
  t["continuation.fast_iterations"] = [](auto& c, auto& k, auto& v) {
    c.continuation.fast_iterations = static_cast<int>(to_integer(k, v));
  };
  t["continuation.growth"] = [](auto& c, auto& k, auto& v) { c.continuation.growth = to_double(k, v); };
  t["continuation.shrink"] = [](auto& c, auto& k, auto& v) { c.continuation.shrink = to_double(k, v); };
  t["continuation.monitor_singular_value"] = [](auto& c, auto& k, auto& v) {
    c.continuation.monitor_singular_value = to_bool(k, v);
  };
  t["continuation.s_start_factor"] = [](auto& c, auto& k, auto& v) { c.s_start_factor = to_double(k, v); };
  t["continuation.s_end_factor"] = [](auto& c, auto& k, auto& v) { c.s_end_factor = to_double(k, v); };
  t["continuation.state_scale"] = [](auto& c, auto& k, auto& v) { c.state_scale = to_double(k, v); };
  t["continuation.param_scale"] = [](auto& c, auto& k, auto& v) { c.param_scale = to_double(k, v); };

  // [output]
  t["output.directory"] = [](auto& c, auto&, auto& v) { c.output_dir = v; };
  t["output.solution"] = [](auto& c, auto&, auto& v) { c.solution_file = v; };
  t["output.convergence"] = [](auto& c, auto&, auto& v) { c.convergence_file = v; };
  t["output.branch"] = [](auto& c, auto&, auto& v) { c.branch_file = v; };
  t["output.eb"] = [](auto& c, auto&, auto& v) { c.eb_file = v; };
  return t;
}

std::vector<Index> even_range(Index from, Index to) {
  std::vector<Index> out;
  for (Index N = from; N <= to; N += 2) out.push_back(N);
  return out;
}

}  // namespace

std::string to_string(ProblemId id) {
  switch (id) {
    case ProblemId::Linear: return "linear";
    case ProblemId::Circuit: return "circuit";
    case ProblemId::MassSpring: return "mass-spring";
    case ProblemId::Beam: return "beam";
  }
  return "unknown";
}

ProblemId parse_problem_id(const std::string& name) {
  for (auto id : {ProblemId::Linear, ProblemId::Circuit, ProblemId::MassSpring, ProblemId::Beam})
    if (name == to_string(id)) return id;
  throw ConfigError("unknown problem id '" + name + "' (expected linear, circuit, mass-spring or beam)");
}

HbSystem::Options ExperimentConfig::system_options() const {
  HbSystem::Options o;
  o.sample_count = sample_count;
  o.jacobian = jacobian;
  return o;
}

ExperimentConfig default_config(ProblemId id) {
  ExperimentConfig c;
  c.problem = id;
  c.newton = NewtonSettings::quadrature_preset();
  switch (id) {
    case ProblemId::Linear:
      c.harmonics = 1;
      c.harmonics_list = {1, 2, 3, 4};
      break;
    case ProblemId::Circuit:
      c.harmonics = 8;
      c.harmonics_list = even_range(2, 16);
      break;
    case ProblemId::MassSpring:
      // The residual of the converged 2D solutions bottoms out at a few 1e-15.
      c.newton.abs_tol = 1e-14;
      c.harmonics = 8;
      c.harmonics_list = even_range(2, 12);
      c.continuation.max_step = 0.25;
      break;
    case ProblemId::Beam:
      c.newton = NewtonSettings::beam_preset();
      c.harmonics = 8;
      c.harmonics_list.clear();
      for (Index N = 2; N <= 12; ++N) c.harmonics_list.push_back(N);
      c.continuation.initial_step = 0.01;
      c.continuation.max_step = 0.02;
      c.continuation.monitor_singular_value = false;
      c.state_scale = 1e-2;
      break;
  }
  c.continuation.corrector = c.newton;
  if (id != ProblemId::Beam) c.continuation.corrector.max_iters = ContinuationSettings::default_corrector().max_iters;
  return c;
}

ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  static const std::vector<std::string> sections = {"problem", "solver", "continuation", "output"};
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& [section, body] : tree) {
    if (std::find(sections.begin(), sections.end(), section) == sections.end())
      throw ConfigError("config: unknown section [" + section + "]");
    if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) entries.emplace_back(section + "." + key, trim(value.data()));
  }

  auto take = [&entries](const std::string& key) -> std::optional<std::string> {
    for (auto it = entries.begin(); it != entries.end(); ++it)
      if (it->first == key) {
        std::string v = it->second;
        entries.erase(it);
        return v;
      }
    return std::nullopt;
  };

  ExperimentConfig c = default_config(parse_problem_id(take("problem.id").value_or("circuit")));
  if (const auto preset = take("solver.preset")) {
    if (*preset == "quadrature")
      c.newton = NewtonSettings::quadrature_preset();
    else if (*preset == "beam")
      c.newton = NewtonSettings::beam_preset();
    else
      throw ConfigError("config: solver.preset must be quadrature or beam");
  }

  static const auto table = key_table();
  auto apply = [&c](const std::string& key, const std::string& value) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second(c, key, value);
  };
  const std::string corrector = "continuation.corrector_";
  for (const auto& [key, value] : entries)
    if (key.rfind(corrector, 0) != 0) apply(key, value);
  const int corrector_iters = c.continuation.corrector.max_iters;
  c.continuation.corrector = c.newton;
  c.continuation.corrector.max_iters = corrector_iters;
  for (const auto& [key, value] : entries)
    if (key.rfind(corrector, 0) == 0) apply(key, value);
  c.newton.validate();
  c.continuation.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in);
}

DaeProblem make_known_period_problem(const ExperimentConfig& cfg) {
  switch (cfg.problem) {
    case ProblemId::Linear: return build_linear_scalar();
    case ProblemId::Circuit: return build_circuit_3d();
    case ProblemId::Beam: {
      auto model = std::make_shared<const BeamModel>(build_beam_model(cfg.beam));
      const double s = cfg.forcing_frequency > 0.0 ? cfg.forcing_frequency
                                                   : cfg.s_start_factor * model->first_natural_frequency();
      return build_beam(model, s);
    }
    case ProblemId::MassSpring: break;
  }
  throw UsageError("the mass-spring system has an unknown period; it is solved on an energy level");
}

SweepSettings make_sweep_settings(const ExperimentConfig& cfg) {
  SweepSettings s;
  s.harmonics = cfg.harmonics_list;
  s.warm_start = cfg.warm_start;
  s.newton = cfg.newton;
  s.system = cfg.system_options();
  s.quadrature = cfg.quadrature;
  return s;
}

MassSpringRunSettings make_mass_spring_settings(const ExperimentConfig& cfg) {
  MassSpringRunSettings s;
  s.branch = cfg.branch;
  s.amplitude = cfg.amplitude;
  s.harmonics = cfg.continuation_harmonics;
  s.clock = cfg.clock;
  s.target_energy = cfg.target_energy;
  s.sample_count = cfg.sample_count;
  s.newton = cfg.newton;
  s.continuation = cfg.continuation;
  s.quadrature = cfg.quadrature;
  return s;
}

FrequencyRunSettings make_frequency_settings(const ExperimentConfig& cfg, const BeamModel& model) {
  const double w1 = model.first_natural_frequency();
  FrequencyRunSettings s;
  s.harmonics = cfg.harmonics_list;
  s.s_start = cfg.s_start_factor * w1;
  s.s_end = cfg.s_end_factor * w1;
  s.start_solve = cfg.newton;
  s.continuation = cfg.continuation;
  s.branch.system = cfg.system_options();
  s.branch.derivative = forcing_frequency_derivative();
  s.branch.state_scale = cfg.state_scale;
  s.branch.param_scale = cfg.param_scale > 0.0 ? cfg.param_scale : w1;
  s.branch.peak_component = model.tip_dof;
  s.quadrature = cfg.quadrature;
  return s;
}

}  // namespace hbm
