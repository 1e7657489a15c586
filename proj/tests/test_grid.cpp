#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "sagwave/grid.hpp"
#include "sagwave/simulator.hpp"

using namespace sagwave;

namespace {

// Independent brute-force binner for the aggregation oracle.
TimeSpaceGrid brute_force_bin(const std::vector<Trajectory>& trajectories, const GridSpec& spec) {
  TimeSpaceGrid grid;
  grid.spec = spec;
  grid.speeds.assign(spec.cells(), 0.0);
  grid.mask.assign(spec.cells(), 0);
  std::vector<std::vector<double>> samples(spec.cells());
  for (const auto& traj : trajectories) {
    for (const auto& s : traj.samples) {
      const double tc = (s.t - spec.t0) / spec.dt;
      const double xc = (s.x - spec.x0) / spec.dx;
      if (tc < 0 || xc < 0) continue;
      const auto col = static_cast<long>(std::floor(tc));
      const auto row = static_cast<long>(std::floor(xc));
      if (col >= static_cast<long>(spec.n_t) || row >= static_cast<long>(spec.n_x)) continue;
      samples[static_cast<std::size_t>(row) * spec.n_t + static_cast<std::size_t>(col)].push_back(s.v);
    }
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].empty()) continue;
    double sum = 0.0;
    for (double v : samples[i]) sum += v;
    grid.speeds[i] = sum / static_cast<double>(samples[i].size());
    grid.mask[i] = 1;
  }
  return grid;
}

Scenario default_ring() {
  Scenario s;
  s.topology = Topology::ring;
  s.length = 1000.0;
  s.n_vehicles = 50;
  s.duration = 400.0;
  s.warmup = 300.0;
  return s;
}

}  // namespace

TEST_CASE("constant-speed vehicle fills a one-row grid") {
  Trajectory traj{0, {}};
  for (int k = 0; k <= 100; ++k)
    traj.samples.push_back({0.1 * k, 2.0 * k, 20.0});
  GridSpec spec{0.0, 0.0, 1.0, 200.0, 10, 1};
  const TimeSpaceGrid grid = aggregate_trajectories({traj}, spec);
  for (std::size_t col = 0; col < spec.n_t; ++col) {
    CHECK(grid.masked(0, col));
    CHECK(grid.speed(0, col) == doctest::Approx(20.0));
  }
}

TEST_CASE("two samples in one cell average") {
  Trajectory a{0, {{0.5, 5.0, 10.0}}};
  Trajectory b{1, {{0.6, 6.0, 30.0}}};
  GridSpec spec{0.0, 0.0, 1.0, 10.0, 1, 1};
  const TimeSpaceGrid grid = aggregate_trajectories({a, b}, spec);
  CHECK(grid.speed(0, 0) == doctest::Approx(20.0));
}

TEST_CASE("aggregation matches brute-force binner on seed 42") {
  Scenario scenario = default_ring();
  const auto result = run_replication(sample_replication(scenario, 42, 0), derive_stream_seed(42, 0));
  GridSpec spec{300.0, 0.0, 1.0, 10.0, 100, 50};
  const TimeSpaceGrid grid = aggregate_trajectories(result.trajectories, spec);
  const TimeSpaceGrid oracle = brute_force_bin(result.trajectories, spec);
  REQUIRE(grid.speeds.size() == oracle.speeds.size());
  for (std::size_t i = 0; i < grid.speeds.size(); ++i) {
    CHECK(grid.mask[i] == oracle.mask[i]);
    CHECK(grid.speeds[i] == doctest::Approx(oracle.speeds[i]).epsilon(1e-12));
  }
}

TEST_CASE("aggregation mass check") {
  Scenario scenario = default_ring();
  const auto result = run_replication(sample_replication(scenario, 7, 0), derive_stream_seed(7, 0));
  GridSpec spec{300.0, 0.0, 1.0, 10.0, 100, 50};

  // Independent tally of in-window sample speeds and per-cell counts.
  std::vector<std::uint32_t> counts(spec.cells(), 0);
  double total_speed = 0.0;
  for (const auto& traj : result.trajectories) {
    for (const auto& s : traj.samples) {
      if (s.t < spec.t0 || s.t >= spec.t0 + spec.dt * spec.n_t) continue;
      if (s.x < spec.x0 || s.x >= spec.x0 + spec.dx * spec.n_x) continue;
      const auto col = static_cast<std::size_t>(std::floor((s.t - spec.t0) / spec.dt));
      const auto row = static_cast<std::size_t>(std::floor((s.x - spec.x0) / spec.dx));
      counts[row * spec.n_t + col] += 1;
      total_speed += s.v;
    }
  }
  const TimeSpaceGrid grid = aggregate_trajectories(result.trajectories, spec);
  double mass = 0.0;
  for (std::size_t i = 0; i < grid.speeds.size(); ++i)
    if (grid.mask[i]) mass += grid.speeds[i] * counts[i];
  CHECK(mass == doctest::Approx(total_speed).epsilon(1e-9));
}

TEST_CASE("permutation invariance of aggregation") {
  Scenario scenario = default_ring();
  auto result = run_replication(sample_replication(scenario, 3, 0), derive_stream_seed(3, 0));
  GridSpec spec{300.0, 0.0, 1.0, 10.0, 100, 50};
  const TimeSpaceGrid grid = aggregate_trajectories(result.trajectories, spec);
  std::mt19937 shuffler(1);
  std::shuffle(result.trajectories.begin(), result.trajectories.end(), shuffler);
  const TimeSpaceGrid shuffled = aggregate_trajectories(result.trajectories, spec);
  CHECK(grid.speeds == shuffled.speeds);
  CHECK(grid.mask == shuffled.mask);
}

TEST_CASE("aggregation error cases") {
  GridSpec spec;
  CHECK_THROWS_WITH_AS(aggregate_trajectories({}, spec), "no input trajectories",
                       std::invalid_argument);
  GridSpec degenerate{0, 0, 1.0, 10.0, 0, 5};
  Trajectory traj{0, {{0.0, 0.0, 1.0}}};
  CHECK_THROWS_WITH_AS(aggregate_trajectories({traj}, degenerate), "degenerate grid",
                       std::invalid_argument);
}

TEST_CASE("fill_gaps leaves fully masked grids unchanged") {
  TimeSpaceGrid grid;
  grid.spec = GridSpec{0, 0, 1.0, 10.0, 4, 2};
  grid.speeds = {1, 2, 3, 4, 5, 6, 7, 8};
  grid.mask.assign(8, 1);
  const TimeSpaceGrid filled = fill_gaps(grid, 33.3);
  CHECK(filled.speeds == grid.speeds);
  CHECK(filled.mask == grid.mask);
}

TEST_CASE("fill_gaps picks nearest in time, earlier on ties") {
  TimeSpaceGrid grid;
  grid.spec = GridSpec{0, 0, 1.0, 10.0, 3, 1};
  grid.speeds = {10.0, 0.0, 10.0};
  grid.mask = {1, 0, 1};
  const TimeSpaceGrid filled = fill_gaps(grid, 33.3);
  CHECK(filled.speed(0, 1) == 10.0);
  CHECK(filled.mask == grid.mask);

  grid.speeds = {10.0, 0.0, 20.0};
  const TimeSpaceGrid tie = fill_gaps(grid, 33.3);
  CHECK(tie.speed(0, 1) == 10.0);  // earlier neighbor wins the tie
}

TEST_CASE("fill_gaps falls back to free-flow speed on empty rows") {
  TimeSpaceGrid grid;
  grid.spec = GridSpec{0, 0, 1.0, 10.0, 3, 2};
  grid.speeds = {5, 5, 5, 0, 0, 0};
  grid.mask = {1, 1, 1, 0, 0, 0};
  const TimeSpaceGrid filled = fill_gaps(grid, 31.0);
  for (std::size_t col = 0; col < 3; ++col) CHECK(filled.speed(1, col) == 31.0);
}

TEST_CASE("fill_gaps is idempotent") {
  TimeSpaceGrid grid;
  grid.spec = GridSpec{0, 0, 1.0, 10.0, 5, 3};
  grid.speeds.assign(15, 0.0);
  grid.mask.assign(15, 0);
  grid.speed(0, 2) = 12.0;
  grid.mask[2] = 1;
  grid.speed(2, 0) = 4.0;
  grid.mask[2 * 5 + 0] = 1;
  const TimeSpaceGrid once = fill_gaps(grid, 33.3);
  const TimeSpaceGrid twice = fill_gaps(once, 33.3);
  CHECK(once.speeds == twice.speeds);
  CHECK(once.mask == twice.mask);
}

TEST_CASE("extract_neighborhood basics") {
  TimeSpaceGrid grid;
  grid.spec = GridSpec{0, 0, 1.0, 10.0, 3, 3};
  grid.speeds = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  grid.mask.assign(9, 1);

  const Neighborhood identity = extract_neighborhood(grid, 1, 1, 0, 0);
  CHECK(identity.values == std::vector<double>{5.0});

  const Neighborhood whole = extract_neighborhood(grid, 1, 1, 1, 1);
  CHECK(whole.values == grid.speeds);
}

TEST_CASE("extract_neighborhood boundary error") {
  TimeSpaceGrid grid;
  grid.spec = GridSpec{0, 0, 1.0, 10.0, 8, 3};
  grid.speeds.assign(24, 1.0);
  grid.mask.assign(24, 1);
  CHECK_THROWS_WITH_AS(extract_neighborhood(grid, 1, 3, 4, 1), "boundary", std::out_of_range);
}

TEST_CASE("neighborhood write-back round trip") {
  TimeSpaceGrid grid;
  grid.spec = GridSpec{0, 0, 1.0, 10.0, 7, 5};
  grid.speeds.resize(35);
  for (std::size_t i = 0; i < 35; ++i) grid.speeds[i] = static_cast<double>(i) * 0.5;
  grid.mask.assign(35, 1);
  const std::vector<double> before = grid.speeds;

  const Neighborhood nb = extract_neighborhood(grid, 2, 3, 2, 1);
  for (std::size_t r = 0; r < nb.rows(); ++r)
    for (std::size_t c = 0; c < nb.cols(); ++c)
      grid.speed(nb.center_row - nb.half_space + r, nb.center_col - nb.half_time + c) = nb.at(r, c);
  CHECK(grid.speeds == before);
}

TEST_CASE("grid CSV round-trips losslessly at printed precision") {
  Scenario scenario = default_ring();
  const auto result = run_replication(sample_replication(scenario, 9, 0), derive_stream_seed(9, 0));
  GridSpec spec{300.0, 0.0, 1.0, 10.0, 100, 50};
  TimeSpaceGrid grid = aggregate_trajectories(result.trajectories, spec);
  grid = fill_gaps(grid, scenario.base_params.v0);

  std::ostringstream first;
  write_grid_csv(first, grid);
  std::istringstream in(first.str());
  const TimeSpaceGrid reread = read_grid_csv(in);
  std::ostringstream second;
  write_grid_csv(second, reread);
  CHECK(first.str() == second.str());
  CHECK(reread.spec == grid.spec);
  CHECK(reread.mask == grid.mask);
}
