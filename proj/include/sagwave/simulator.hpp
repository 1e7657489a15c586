#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sagwave/ingest.hpp"
#include "sagwave/rng.hpp"
#include "sagwave/trajectory.hpp"

namespace sagwave {

struct IdmParams {
  double v0 = 33.3;            // desired speed, m/s
  double T = 1.6;              // safe time headway, s
  double a_max = 0.73;         // max acceleration, m/s^2
  double b = 1.67;             // comfortable deceleration, m/s^2
  double delta = 4.0;          // acceleration exponent
  double s0 = 2.0;             // minimum gap, m
  double vehicle_length = 5.0; // m

  void validate() const {
    if (v0 <= 0 || T <= 0 || a_max <= 0 || b <= 0 || s0 <= 0 || vehicle_length <= 0)
      throw std::invalid_argument("idm params must be strictly positive");
    if (delta < 1.0) throw std::invalid_argument("idm delta must be >= 1");
  }
};

struct VehicleState {
  int id = 0;
  double position = 0.0;  // front bumper, m, increasing downstream
  double speed = 0.0;     // m/s, >= 0
  IdmParams params;
};

struct Leader {
  double gap = 0.0;           // bumper-to-bumper, m
  double speed = 0.0;         // m/s
};

// Desired gap s* = s0 + v*T + v*dv / (2*sqrt(a_max*b)),
// accel = a_max * [1 - (v/v0)^delta - (s*/s)^2].
inline double idm_accel(const VehicleState& me, const std::optional<Leader>& leader) {
  const IdmParams& p = me.params;
  double interaction = 0.0;
  if (leader) {
    if (leader->gap <= 0.0) throw std::runtime_error("vehicle overlap");
    const double dv = me.speed - leader->speed;
    const double s_star = p.s0 + me.speed * p.T + me.speed * dv / (2.0 * std::sqrt(p.a_max * p.b));
    interaction = (s_star / leader->gap) * (s_star / leader->gap);
  }
  return p.a_max * (1.0 - std::pow(me.speed / p.v0, p.delta) - interaction);
}

// Equilibrium speed for a given bumper-to-bumper gap: the v solving
// gap * sqrt(1 - (v/v0)^delta) = s0 + v*T. Bisection; gap must exceed s0.
inline double idm_equilibrium_speed(double gap, const IdmParams& p) {
  if (gap <= p.s0) return 0.0;
  auto residual = [&](double v) {
    return gap * std::sqrt(std::max(0.0, 1.0 - std::pow(v / p.v0, p.delta))) - (p.s0 + v * p.T);
  };
  double lo = 0.0, hi = p.v0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (residual(mid) > 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

enum class Topology { ring, stretch };

struct StepContext {
  Topology topology = Topology::ring;
  double length = 1000.0;  // ring circumference or stretch length, m
};

// Semi-implicit ballistic update: v' = max(0, v + a*dt), x' = x + v'*dt.
// States must be sorted ascending by position; vehicle i follows i+1.
// On a ring the last element follows the first one lap ahead. Positions are
// kept unwrapped on rings; wrap only when recording.
inline std::vector<VehicleState> step(const std::vector<VehicleState>& states,
                                      const StepContext& ctx, double sim_dt) {
  std::vector<VehicleState> next = states;
  const std::size_t n = states.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::optional<Leader> leader;
    if (i + 1 < n) {
      const VehicleState& lead = states[i + 1];
      leader = Leader{lead.position - lead.params.vehicle_length - states[i].position, lead.speed};
    } else if (ctx.topology == Topology::ring && n > 1) {
      const VehicleState& lead = states[0];
      leader = Leader{lead.position + ctx.length - lead.params.vehicle_length - states[i].position,
                      lead.speed};
    } else if (ctx.topology == Topology::ring && n == 1) {
      leader = Leader{ctx.length - states[i].params.vehicle_length, states[i].speed};
    }
    const double accel = idm_accel(states[i], leader);
    next[i].speed = std::max(0.0, states[i].speed + accel * sim_dt);
    next[i].position = states[i].position + next[i].speed * sim_dt;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const bool last = (i + 1 == n);
    if (last && ctx.topology == Topology::stretch) break;
    if (last && n == 1) break;
    const VehicleState& follower = next[i];
    const VehicleState& lead = last ? next[0] : next[i + 1];
    const double wrap = last ? ctx.length : 0.0;
    if (lead.position + wrap - lead.params.vehicle_length - follower.position <= 0.0) {
      std::ostringstream msg;
      msg << "collision between vehicles " << follower.id << " and " << lead.id;
      throw std::runtime_error(msg.str());
    }
  }
  return next;
}

struct PerturbationSpec {
  double speed_dev_sigma = 1.0;       // m/s, additive noise on v0
  double departure_jitter_sigma = 2.0;// s
  double T_rel_sigma = 0.1;
  double a_rel_sigma = 0.1;
  double b_rel_sigma = 0.1;

  bool all_zero() const {
    return speed_dev_sigma == 0.0 && departure_jitter_sigma == 0.0 && T_rel_sigma == 0.0 &&
           a_rel_sigma == 0.0 && b_rel_sigma == 0.0;
  }
};

struct Scenario {
  Topology topology = Topology::ring;
  double length = 1000.0;
  std::size_t n_vehicles = 50;        // ring demand
  std::vector<double> departures;     // stretch demand, s
  double entry_speed = 25.0;          // stretch, m/s
  IdmParams base_params;
  PerturbationSpec perturbation;
  double sim_dt = 0.1;
  double duration = 1200.0;
  double warmup = 300.0;
  std::vector<double> detector_positions;
  double detector_bin = 30.0;

  // Concrete draws from sample_replication; empty means "not yet sampled".
  std::vector<IdmParams> sampled_params;
  std::vector<double> sampled_departures;

  std::size_t vehicle_budget() const {
    return topology == Topology::ring ? n_vehicles : departures.size();
  }

  void validate() const {
    base_params.validate();
    if (sim_dt <= 0.0) throw std::invalid_argument("sim_dt must be positive");
    if (warmup < 0.0 || duration <= warmup) throw std::invalid_argument("duration must exceed warmup");
    if (topology == Topology::ring) {
      if (n_vehicles < 1) throw std::invalid_argument("ring needs at least one vehicle");
      if (static_cast<double>(n_vehicles) * (base_params.s0 + base_params.vehicle_length) >= length)
        throw std::invalid_argument("ring demand does not fit physically");
    }
  }
};

namespace detail {

// Per-vehicle parameter draws: v0 additive, T/a/b multiplicative relative,
// Gaussian truncated at +-3 sigma and floored to stay strictly positive.
inline std::vector<IdmParams> draw_params(const Scenario& scenario, NormalSampler& rng) {
  std::vector<IdmParams> out;
  out.reserve(scenario.vehicle_budget());
  const PerturbationSpec& ps = scenario.perturbation;
  for (std::size_t i = 0; i < scenario.vehicle_budget(); ++i) {
    IdmParams p = scenario.base_params;
    p.v0 = std::max(0.1, p.v0 + ps.speed_dev_sigma * rng.next_truncated3());
    p.T = std::max(0.05, p.T * (1.0 + ps.T_rel_sigma * rng.next_truncated3()));
    p.a_max = std::max(0.01, p.a_max * (1.0 + ps.a_rel_sigma * rng.next_truncated3()));
    p.b = std::max(0.01, p.b * (1.0 + ps.b_rel_sigma * rng.next_truncated3()));
    out.push_back(p);
  }
  return out;
}

inline std::vector<double> draw_departures(const Scenario& scenario, NormalSampler& rng) {
  std::vector<double> out = scenario.departures;
  for (double& t : out)
    t = std::max(0.0, t + scenario.perturbation.departure_jitter_sigma * rng.next_truncated3());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

// Concretizes one bootstrap replication: per-vehicle parameters and jittered
// departures drawn from a stream keyed by (master_seed, replication_index)
// only. Zero perturbation returns the scenario unchanged.
inline Scenario sample_replication(const Scenario& scenario, std::uint64_t master_seed,
                                   std::uint64_t replication_index) {
  if (scenario.perturbation.all_zero()) return scenario;
  NormalSampler rng(derive_stream_seed(master_seed, replication_index));
  Scenario out = scenario;
  out.sampled_params = detail::draw_params(scenario, rng);
  out.sampled_departures = detail::draw_departures(scenario, rng);
  return out;
}

struct ReplicationResult {
  std::vector<Trajectory> trajectories;
  std::vector<DetectorSeries> detectors;
  std::size_t deferred_entries = 0;  // stretch entries postponed for space
};

// One full stochastic run. Deterministic in (scenario, seed): the seed feeds
// parameter draws only when the scenario has not been concretized by
// sample_replication, and zero sigmas make the draws vanish.
inline ReplicationResult run_replication(const Scenario& scenario, std::uint64_t seed) {
  scenario.validate();

  std::vector<IdmParams> params = scenario.sampled_params;
  std::vector<double> departures = scenario.sampled_departures;
  if (params.empty()) {
    NormalSampler rng(seed);
    params = detail::draw_params(scenario, rng);
    departures = detail::draw_departures(scenario, rng);
  }

  const auto n_steps = static_cast<std::size_t>(std::llround(scenario.duration / scenario.sim_dt));
  const StepContext ctx{scenario.topology, scenario.length};
  ReplicationResult result;
  std::vector<Trajectory> trajectories(scenario.vehicle_budget());
  for (std::size_t i = 0; i < trajectories.size(); ++i) trajectories[i].vehicle_id = static_cast<int>(i);

  std::vector<VehicleState> states;
  std::size_t next_departure = 0;
  if (scenario.topology == Topology::ring) {
    const double spacing = scenario.length / static_cast<double>(scenario.n_vehicles);
    const double gap = spacing - scenario.base_params.vehicle_length;
    const double v_eq = idm_equilibrium_speed(gap, scenario.base_params);
    for (std::size_t i = 0; i < scenario.n_vehicles; ++i) {
      VehicleState s;
      s.id = static_cast<int>(i);
      s.position = spacing * static_cast<double>(i);
      s.speed = v_eq;
      s.params = params[i];
      states.push_back(s);
    }
  }

  for (std::size_t k = 0; k <= n_steps; ++k) {
    const double t = static_cast<double>(k) * scenario.sim_dt;

    if (scenario.topology == Topology::stretch) {
      // Drop vehicles that left the corridor; front of the platoon is at the
      // back of the (position-ascending) vector, entrants join at the front.
      while (!states.empty() && states.back().position > scenario.length)
        states.pop_back();
      while (next_departure < departures.size() && departures[next_departure] <= t) {
        const double gap_available = states.empty()
            ? scenario.length
            : states.front().position - states.front().params.vehicle_length;
        if (gap_available <= params[next_departure].s0) {
          ++result.deferred_entries;
          break;  // retry next step, preserving departure order
        }
        VehicleState s;
        s.id = static_cast<int>(next_departure);
        s.position = 0.0;
        s.speed = std::min(scenario.entry_speed, params[next_departure].v0);
        s.params = params[next_departure];
        states.insert(states.begin(), s);
        ++next_departure;
      }
    }

    if (t >= scenario.warmup) {
      for (const auto& s : states) {
        double x = s.position;
        if (scenario.topology == Topology::ring) x = std::fmod(x, scenario.length);
        trajectories[static_cast<std::size_t>(s.id)].samples.push_back({t, x, s.speed});
      }
    }
    if (k < n_steps) states = step(states, ctx, scenario.sim_dt);
  }

  for (auto& traj : trajectories)
    if (!traj.samples.empty()) result.trajectories.push_back(std::move(traj));

  std::optional<double> ring_length;
  if (scenario.topology == Topology::ring) ring_length = scenario.length;
  result.detectors = virtual_detectors(result.trajectories, scenario.detector_positions,
                                       scenario.detector_bin,
                                       scenario.base_params.vehicle_length, ring_length);
  return result;
}

// ---------------------------------------------------------------------------
// Scenario config: flat key-value text, `key = value`, '#' comments.
// Unknown keys are errors.
// ---------------------------------------------------------------------------

inline std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string field;
  while (std::getline(in, field, ',')) {
    if (field.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(std::stod(field));
  }
  return out;
}

inline Scenario parse_scenario_config(std::istream& in) {
  Scenario scenario;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_number) + ": expected key = value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "topology") {
        if (value == "ring") scenario.topology = Topology::ring;
        else if (value == "stretch") scenario.topology = Topology::stretch;
        else throw std::runtime_error("config line " + std::to_string(line_number) +
                                      ": topology must be ring or stretch");
      } else if (key == "ring_length_m" || key == "stretch_length_m") {
        scenario.length = std::stod(value);
      } else if (key == "n_vehicles") scenario.n_vehicles = std::stoul(value);
      else if (key == "departures_s") scenario.departures = parse_double_list(value);
      else if (key == "entry_speed_mps") scenario.entry_speed = std::stod(value);
      else if (key == "sim_dt_s") scenario.sim_dt = std::stod(value);
      else if (key == "duration_s") scenario.duration = std::stod(value);
      else if (key == "warmup_s") scenario.warmup = std::stod(value);
      else if (key == "idm.v0") scenario.base_params.v0 = std::stod(value);
      else if (key == "idm.T") scenario.base_params.T = std::stod(value);
      else if (key == "idm.a_max") scenario.base_params.a_max = std::stod(value);
      else if (key == "idm.b") scenario.base_params.b = std::stod(value);
      else if (key == "idm.delta") scenario.base_params.delta = std::stod(value);
      else if (key == "idm.s0") scenario.base_params.s0 = std::stod(value);
      else if (key == "idm.vehicle_length") scenario.base_params.vehicle_length = std::stod(value);
      else if (key == "perturb.speed_dev_sigma") scenario.perturbation.speed_dev_sigma = std::stod(value);
      else if (key == "perturb.departure_jitter_sigma")
        scenario.perturbation.departure_jitter_sigma = std::stod(value);
      else if (key == "perturb.T_rel_sigma") scenario.perturbation.T_rel_sigma = std::stod(value);
      else if (key == "perturb.a_rel_sigma") scenario.perturbation.a_rel_sigma = std::stod(value);
      else if (key == "perturb.b_rel_sigma") scenario.perturbation.b_rel_sigma = std::stod(value);
      else if (key == "detectors_m") scenario.detector_positions = parse_double_list(value);
      else if (key == "detector_bin_s") scenario.detector_bin = std::stod(value);
      else
        throw std::runtime_error("config line " + std::to_string(line_number) +
                                 ": unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("config line " + std::to_string(line_number) +
                               ": bad value for key '" + key + "'");
    }
  }
  return scenario;
}

}  // namespace sagwave
