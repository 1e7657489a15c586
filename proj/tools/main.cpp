// sagwave: stop-and-go wave reconstruction, detection and uncertainty
// quantification on time-space speed grids.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "sagwave/detector.hpp"
#include "sagwave/digest.hpp"
#include "sagwave/grid.hpp"
#include "sagwave/ingest.hpp"
#include "sagwave/render.hpp"
#include "sagwave/simulator.hpp"
#include "sagwave/trajectory.hpp"
#include "sagwave/uq.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "sagwave 0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;      // configuration / parse problems
constexpr int kExitSimulation = 3;  // simulation integrity (collision)
constexpr int kExitDetection = 4;   // detection precondition (grid too small)

// Stable-key-order run manifest for diffability.
struct Manifest {
  std::map<std::string, std::string> entries;

  void set(const std::string& key, const std::string& value) { entries[key] = value; }
  void set(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    entries[key] = buf;
  }
  void set(const std::string& key, std::uint64_t value) { entries[key] = std::to_string(value); }

  void write(const fs::path& path) const {
    std::ofstream out(path);
    out << "# sagwave-manifest v1\n";
    for (const auto& [key, value] : entries) out << key << " = " << value << '\n';
  }
};

std::string write_output(const fs::path& path, const std::string& content, Manifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  const std::string digest = sagwave::fnv1a64_hex(content);
  manifest.set("digest." + path.filename().string(), digest);
  return digest;
}

sagwave::Scenario load_scenario(const std::string& config_path) {
  std::ifstream in(config_path);
  if (!in) throw std::runtime_error("cannot open config '" + config_path + "'");
  sagwave::Scenario scenario = sagwave::parse_scenario_config(in);
  scenario.validate();
  return scenario;
}

struct GridFlags {
  double dt = 1.0;
  double dx = 10.0;
  double x0 = 0.0;
  double extent = 0.0;  // 0 = corridor length

  sagwave::GridSpec resolve(const sagwave::Scenario& scenario) const {
    sagwave::GridSpec spec;
    spec.t0 = scenario.warmup;
    spec.x0 = x0;
    spec.dt = dt;
    spec.dx = dx;
    const double window = scenario.duration - scenario.warmup;
    const double space = extent > 0.0 ? extent : scenario.length - x0;
    spec.n_t = static_cast<std::size_t>(std::floor(window / dt + 1e-9));
    spec.n_x = static_cast<std::size_t>(std::floor(space / dx + 1e-9));
    spec.validate();
    return spec;
  }
};

void add_grid_flags(CLI::App* cmd, GridFlags& flags) {
  cmd->add_option("--grid-dt", flags.dt, "grid column duration, s")->check(CLI::PositiveNumber);
  cmd->add_option("--grid-dx", flags.dx, "grid row height, m")->check(CLI::PositiveNumber);
  cmd->add_option("--grid-x0", flags.x0, "grid upstream start, m");
  cmd->add_option("--grid-extent", flags.extent, "grid space extent, m (default: corridor length)");
}

void record_scenario(Manifest& manifest, const sagwave::Scenario& s) {
  manifest.set("config.topology", s.topology == sagwave::Topology::ring ? "ring" : "stretch");
  manifest.set("config.length_m", s.length);
  manifest.set("config.n_vehicles", static_cast<std::uint64_t>(s.n_vehicles));
  manifest.set("config.sim_dt_s", s.sim_dt);
  manifest.set("config.duration_s", s.duration);
  manifest.set("config.warmup_s", s.warmup);
  manifest.set("config.idm.v0", s.base_params.v0);
  manifest.set("config.idm.T", s.base_params.T);
  manifest.set("config.idm.a_max", s.base_params.a_max);
  manifest.set("config.idm.b", s.base_params.b);
  manifest.set("config.idm.delta", s.base_params.delta);
  manifest.set("config.idm.s0", s.base_params.s0);
  manifest.set("config.idm.vehicle_length", s.base_params.vehicle_length);
  manifest.set("config.perturb.speed_dev_sigma", s.perturbation.speed_dev_sigma);
  manifest.set("config.perturb.departure_jitter_sigma", s.perturbation.departure_jitter_sigma);
  manifest.set("config.perturb.T_rel_sigma", s.perturbation.T_rel_sigma);
  manifest.set("config.perturb.a_rel_sigma", s.perturbation.a_rel_sigma);
  manifest.set("config.perturb.b_rel_sigma", s.perturbation.b_rel_sigma);
}

void record_grid_spec(Manifest& manifest, const sagwave::GridSpec& spec) {
  manifest.set("grid.t0", spec.t0);
  manifest.set("grid.x0", spec.x0);
  manifest.set("grid.dt", spec.dt);
  manifest.set("grid.dx", spec.dx);
  manifest.set("grid.n_t", static_cast<std::uint64_t>(spec.n_t));
  manifest.set("grid.n_x", static_cast<std::uint64_t>(spec.n_x));
}

std::string to_string_stream(const auto& writer) {
  std::ostringstream out;
  writer(out);
  return out.str();
}

int cmd_simulate(const std::string& config_path, std::uint64_t seed, const std::string& out_dir,
                 const GridFlags& grid_flags) {
  sagwave::Scenario scenario;
  sagwave::GridSpec spec;
  try {
    scenario = load_scenario(config_path);
    spec = grid_flags.resolve(scenario);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  sagwave::ReplicationResult result;
  try {
    const sagwave::Scenario sampled = sagwave::sample_replication(scenario, seed, 0);
    result = sagwave::run_replication(sampled, sagwave::derive_stream_seed(seed, 0));
  } catch (const std::exception& e) {
    std::cerr << "simulation error: " << e.what() << '\n';
    return kExitSimulation;
  }

  fs::create_directories(out_dir);
  Manifest manifest;
  manifest.set("subcommand", "simulate");
  manifest.set("version", kVersion);
  manifest.set("seed", seed);
  manifest.set("config.path", config_path);
  record_scenario(manifest, scenario);
  record_grid_spec(manifest, spec);
  manifest.set("deferred_entries", static_cast<std::uint64_t>(result.deferred_entries));

  write_output(fs::path(out_dir) / "trajectories.csv",
               to_string_stream([&](std::ostream& o) { sagwave::write_trajectories_csv(o, result.trajectories); }),
               manifest);
  write_output(fs::path(out_dir) / "detectors.csv",
               to_string_stream([&](std::ostream& o) { sagwave::write_detector_csv(o, result.detectors); }),
               manifest);

  sagwave::TimeSpaceGrid grid = sagwave::aggregate_trajectories(result.trajectories, spec);
  grid = sagwave::fill_gaps(grid, scenario.base_params.v0);
  write_output(fs::path(out_dir) / "grid.csv",
               to_string_stream([&](std::ostream& o) { sagwave::write_grid_csv(o, grid); }), manifest);
  write_output(fs::path(out_dir) / "grid.pgm",
               sagwave::render_grid(grid, {sagwave::ScaleKind::grayscale, 0.0, scenario.base_params.v0}),
               manifest);

  manifest.write(fs::path(out_dir) / "manifest.txt");
  std::cout << "simulated " << result.trajectories.size() << " trajectories\n";
  return kExitOk;
}

int cmd_detect(const std::string& grid_path, int width, double epsilon, double v_ref,
               const std::string& out_dir) {
  sagwave::TimeSpaceGrid grid;
  try {
    std::ifstream in(grid_path);
    if (!in) throw std::runtime_error("cannot open grid '" + grid_path + "'");
    grid = sagwave::read_grid_csv(in);
  } catch (const std::exception& e) {
    std::cerr << "grid error: " << e.what() << '\n';
    return kExitConfig;
  }

  sagwave::ActivationMap activation;
  sagwave::BinaryMap binary;
  try {
    const sagwave::DetectorConfig config{width, epsilon, v_ref};
    activation = sagwave::kernel_activation(grid, config);
    binary = sagwave::classify(activation, epsilon);
  } catch (const std::exception& e) {
    std::cerr << "detection error: " << e.what() << '\n';
    return kExitDetection;
  }

  fs::create_directories(out_dir);
  Manifest manifest;
  manifest.set("subcommand", "detect");
  manifest.set("version", kVersion);
  manifest.set("input.grid", grid_path);
  manifest.set("detector.width", static_cast<std::uint64_t>(width));
  manifest.set("detector.epsilon", epsilon);
  manifest.set("detector.v_ref", v_ref);
  manifest.set("detector.clamp_warnings", static_cast<std::uint64_t>(activation.clamp_warnings));
  record_grid_spec(manifest, grid.spec);

  write_output(fs::path(out_dir) / "activation.csv",
               to_string_stream([&](std::ostream& o) { sagwave::write_activation_csv(o, activation); }),
               manifest);
  write_output(fs::path(out_dir) / "binary.csv",
               to_string_stream([&](std::ostream& o) { sagwave::write_binary_csv(o, binary); }),
               manifest);
  write_output(fs::path(out_dir) / "activation.ppm", sagwave::render_activation(activation), manifest);
  write_output(fs::path(out_dir) / "overlay.ppm", sagwave::boost_overlay(activation, epsilon), manifest);

  manifest.write(fs::path(out_dir) / "manifest.txt");
  std::size_t flagged = 0;
  for (auto v : binary.indicators) flagged += v;
  std::cout << "flagged " << flagged << " cells\n";
  if (activation.clamp_warnings > 0)
    std::cerr << "warning: " << activation.clamp_warnings << " activations clamped (speeds above v_ref)\n";
  return kExitOk;
}

int cmd_bootstrap(const std::string& config_path, std::size_t replications, std::uint64_t seed,
                  int width, double epsilon, double v_ref_flag, std::size_t workers,
                  const std::string& u_band, const std::string& out_dir, const GridFlags& grid_flags) {
  sagwave::Scenario scenario;
  sagwave::GridSpec spec;
  double u_lo = 0.25, u_hi = 0.75;
  try {
    scenario = load_scenario(config_path);
    spec = grid_flags.resolve(scenario);
    if (!u_band.empty()) {
      const auto values = sagwave::parse_double_list(u_band);
      if (values.size() != 2) throw std::runtime_error("--u-band expects lo,hi");
      u_lo = values[0];
      u_hi = values[1];
    }
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  const double v_ref = v_ref_flag > 0.0 ? v_ref_flag : scenario.base_params.v0;
  const sagwave::DetectorConfig config{width, epsilon, v_ref};

  sagwave::BootstrapReport report;
  try {
    report = sagwave::run_bootstrap(scenario, spec, config, replications, seed, workers, u_lo, u_hi);
  } catch (const std::exception& e) {
    std::cerr << "bootstrap error: " << e.what() << '\n';
    return kExitSimulation;
  }

  fs::create_directories(out_dir);
  Manifest manifest;
  manifest.set("subcommand", "bootstrap");
  manifest.set("version", kVersion);
  manifest.set("seed", seed);
  manifest.set("config.path", config_path);
  manifest.set("replications", static_cast<std::uint64_t>(report.k));
  manifest.set("workers", static_cast<std::uint64_t>(report.workers));
  manifest.set("detector.width", static_cast<std::uint64_t>(width));
  manifest.set("detector.epsilon", epsilon);
  manifest.set("detector.v_ref", v_ref);
  manifest.set("u_band.lo", u_lo);
  manifest.set("u_band.hi", u_hi);
  record_scenario(manifest, scenario);
  record_grid_spec(manifest, spec);

  write_output(fs::path(out_dir) / "probability.csv",
               to_string_stream([&](std::ostream& o) { sagwave::write_probability_csv(o, report.probability); }),
               manifest);
  write_output(fs::path(out_dir) / "probability.ppm", sagwave::render_probability(report.probability),
               manifest);

  std::ostringstream summary;
  summary << "k = " << report.k << '\n'
          << "master_seed = " << report.master_seed << '\n'
          << "U = " << report.uncertainty << '\n'
          << "u_band = (" << u_lo << ", " << u_hi << ")\n"
          << "clamp_warnings = " << report.clamp_warnings << '\n'
          << "deferred_entries = " << report.deferred_entries << '\n'
          << "wall_seconds = " << report.wall_seconds << '\n';
  write_output(fs::path(out_dir) / "summary.txt", summary.str(), manifest);

  manifest.write(fs::path(out_dir) / "manifest.txt");
  std::printf("U=%.6f\n", report.uncertainty);
  return kExitOk;
}

int cmd_ingest(const std::string& csv_path, const sagwave::GridSpec& spec, const std::string& out_dir) {
  sagwave::DetectorParseResult parsed;
  try {
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("cannot open '" + csv_path + "'");
    parsed = sagwave::parse_detector_csv(in);
    spec.validate();
  } catch (const std::exception& e) {
    std::cerr << "ingest error: " << e.what() << '\n';
    return kExitConfig;
  }

  fs::create_directories(out_dir);
  if (!parsed.rejects.empty()) {
    std::ofstream rejects(fs::path(out_dir) / "rejects.csv");
    sagwave::write_rejects_report(rejects, parsed.rejects);
  }
  if (parsed.series.empty()) {
    std::cerr << "ingest error: no data rows";
    if (!parsed.rejects.empty())
      std::cerr << " (see " << (fs::path(out_dir) / "rejects.csv").string() << ")";
    std::cerr << '\n';
    return kExitConfig;
  }

  Manifest manifest;
  manifest.set("subcommand", "ingest");
  manifest.set("version", kVersion);
  manifest.set("input.detectors", csv_path);
  manifest.set("stations", static_cast<std::uint64_t>(parsed.series.size()));
  manifest.set("rejects", static_cast<std::uint64_t>(parsed.rejects.size()));
  record_grid_spec(manifest, spec);

  const sagwave::TimeSpaceGrid grid = sagwave::series_to_grid(parsed.series, spec);
  write_output(fs::path(out_dir) / "grid.csv",
               to_string_stream([&](std::ostream& o) { sagwave::write_grid_csv(o, grid); }), manifest);
  manifest.write(fs::path(out_dir) / "manifest.txt");
  std::cout << "ingested " << parsed.series.size() << " stations, " << parsed.rejects.size()
            << " rejects\n";
  return kExitOk;
}

std::size_t default_workers() {
  if (const char* env = std::getenv("SAGWAVE_WORKERS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<std::size_t>(n);
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stop-and-go wave simulation, detection and uncertainty quantification"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // simulate
  std::string sim_config, sim_out = "out";
  std::uint64_t sim_seed = 0;
  GridFlags sim_grid;
  auto* simulate = app.add_subcommand("simulate", "run one replication, write trajectories/detectors/grid");
  simulate->add_option("--config", sim_config, "scenario config file")->required();
  simulate->add_option("--seed", sim_seed, "random seed");
  simulate->add_option("--out", sim_out, "output directory");
  add_grid_flags(simulate, sim_grid);

  // detect
  std::string det_grid, det_out = "out";
  int det_width = 4;
  double det_epsilon = 0.30, det_vref = 33.3;
  auto* detect = app.add_subcommand("detect", "detect SAG waves on a time-space grid CSV");
  detect->add_option("grid", det_grid, "grid CSV path")->required();
  detect->add_option("--width", det_width, "kernel width, s (positive even)");
  detect->add_option("--epsilon", det_epsilon, "classification threshold");
  detect->add_option("--v-ref", det_vref, "normalization reference speed, m/s");
  detect->add_option("--out", det_out, "output directory");

  // bootstrap
  std::string boot_config, boot_out = "out", boot_uband;
  std::uint64_t boot_seed = 0;
  std::size_t boot_k = 100, boot_workers = default_workers();
  int boot_width = 4;
  double boot_epsilon = 0.30, boot_vref = 0.0;
  GridFlags boot_grid;
  auto* bootstrap = app.add_subcommand("bootstrap", "replicate the pipeline k times, emit probability map and U");
  bootstrap->add_option("--config", boot_config, "scenario config file")->required();
  bootstrap->add_option("--replications", boot_k, "replication count k");
  bootstrap->add_option("--seed", boot_seed, "master seed");
  bootstrap->add_option("--width", boot_width, "kernel width, s");
  bootstrap->add_option("--epsilon", boot_epsilon, "classification threshold");
  bootstrap->add_option("--v-ref", boot_vref, "normalization speed, m/s (default: scenario v0)");
  bootstrap->add_option("--workers", boot_workers, "concurrent replications");
  bootstrap->add_option("--u-band", boot_uband, "uncertainty band 'lo,hi' (default 0.25,0.75)");
  bootstrap->add_option("--out", boot_out, "output directory");
  add_grid_flags(bootstrap, boot_grid);

  // ingest
  std::string ing_csv, ing_out = "out";
  sagwave::GridSpec ing_spec;
  auto* ingest = app.add_subcommand("ingest", "build a comparison grid from a detector CSV");
  ingest->add_option("detectors", ing_csv, "detector CSV path")->required();
  ingest->add_option("--t0", ing_spec.t0, "window start, s");
  ingest->add_option("--x0", ing_spec.x0, "segment start, m");
  ingest->add_option("--dt", ing_spec.dt, "column duration, s");
  ingest->add_option("--dx", ing_spec.dx, "row height, m");
  ingest->add_option("--n-t", ing_spec.n_t, "column count");
  ingest->add_option("--n-x", ing_spec.n_x, "row count");
  ingest->add_option("--out", ing_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sim_config, sim_seed, sim_out, sim_grid);
    if (detect->parsed()) return cmd_detect(det_grid, det_width, det_epsilon, det_vref, det_out);
    if (bootstrap->parsed())
      return cmd_bootstrap(boot_config, boot_k, boot_seed, boot_width, boot_epsilon, boot_vref,
                           boot_workers, boot_uband, boot_out, boot_grid);
    if (ingest->parsed()) return cmd_ingest(ing_csv, ing_spec, ing_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
