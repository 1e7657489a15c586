#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "sagwave/uq.hpp"

using namespace sagwave;

namespace {

BinaryMap make_binary(const GridSpec& spec, std::uint8_t indicator, std::uint8_t valid = 1) {
  BinaryMap map;
  map.spec = spec;
  map.indicators.assign(spec.cells(), indicator);
  map.valid.assign(spec.cells(), valid);
  return map;
}

ProbabilityMap make_probs(const std::vector<double>& probs) {
  ProbabilityMap pm;
  pm.spec = GridSpec{0, 0, 1, 10, probs.size(), 1};
  pm.probs = probs;
  pm.valid.assign(probs.size(), 1);
  pm.k = 10;
  return pm;
}

Scenario small_scenario() {
  Scenario s;
  s.n_vehicles = 20;
  s.length = 400.0;
  s.duration = 120.0;
  s.warmup = 60.0;
  return s;
}

GridSpec small_spec() { return GridSpec{60.0, 0.0, 1.0, 10.0, 60, 40}; }

}  // namespace

TEST_CASE("probability map of all-zero and mixed maps") {
  const GridSpec spec{0, 0, 1, 10, 4, 2};
  const ProbabilityMap zeros = probability_map({make_binary(spec, 0), make_binary(spec, 0)});
  CHECK(std::all_of(zeros.probs.begin(), zeros.probs.end(), [](double p) { return p == 0.0; }));

  const ProbabilityMap half = probability_map({make_binary(spec, 1), make_binary(spec, 0)});
  CHECK(std::all_of(half.probs.begin(), half.probs.end(), [](double p) { return p == 0.5; }));
}

TEST_CASE("probability map equals the counting oracle on random maps") {
  const GridSpec spec{0, 0, 1, 10, 15, 8};
  std::mt19937 rng(99);
  std::bernoulli_distribution coin(0.4), validity(0.9);
  std::vector<BinaryMap> maps;
  for (int i = 0; i < 100; ++i) {
    BinaryMap m = make_binary(spec, 0);
    for (std::size_t c = 0; c < spec.cells(); ++c) {
      m.indicators[c] = coin(rng);
      m.valid[c] = validity(rng);
    }
    maps.push_back(std::move(m));
  }
  const ProbabilityMap pm = probability_map(maps);
  for (std::size_t c = 0; c < spec.cells(); ++c) {
    int count = 0;
    bool all_valid = true;
    for (const auto& m : maps) {
      count += m.indicators[c];
      all_valid = all_valid && m.valid[c];
    }
    CHECK(pm.valid[c] == (all_valid ? 1 : 0));
    if (all_valid) {
      CHECK(pm.probs[c] == static_cast<double>(count) / 100.0);
      CHECK(std::abs(pm.probs[c] * 100.0 - std::round(pm.probs[c] * 100.0)) < 1e-12);
    }
  }
}

TEST_CASE("probability map is permutation invariant and monotone under all-ones") {
  const GridSpec spec{0, 0, 1, 10, 6, 3};
  std::mt19937 rng(5);
  std::bernoulli_distribution coin(0.5);
  std::vector<BinaryMap> maps;
  for (int i = 0; i < 9; ++i) {
    BinaryMap m = make_binary(spec, 0);
    for (auto& v : m.indicators) v = coin(rng);
    maps.push_back(std::move(m));
  }
  const ProbabilityMap base = probability_map(maps);
  std::shuffle(maps.begin(), maps.end(), rng);
  const ProbabilityMap shuffled = probability_map(maps);
  CHECK(base.probs == shuffled.probs);

  maps.push_back(make_binary(spec, 1));
  const ProbabilityMap extended = probability_map(maps);
  for (std::size_t c = 0; c < spec.cells(); ++c) CHECK(extended.probs[c] >= base.probs[c] - 1e-15);
}

TEST_CASE("probability map rejects mismatched specs") {
  const GridSpec a{0, 0, 1, 10, 4, 2};
  const GridSpec b{0, 0, 1, 10, 5, 2};
  CHECK_THROWS_WITH_AS(probability_map({make_binary(a, 0), make_binary(b, 0)}),
                       "incompatible replications", std::invalid_argument);
}

TEST_CASE("uncertainty fraction fixture and boundaries") {
  CHECK(uncertainty_fraction(make_probs({0.1, 0.5, 0.9, 0.3})) == doctest::Approx(0.5));
  CHECK(uncertainty_fraction(make_probs({0.25, 0.25, 0.25})) == 0.0);
  CHECK(uncertainty_fraction(make_probs({0.75, 0.75})) == 0.0);
  CHECK(uncertainty_fraction(make_probs({0.5, 0.5})) == 1.0);
}

TEST_CASE("uncertainty fraction rejects empty maps") {
  ProbabilityMap pm = make_probs({0.5, 0.5});
  pm.valid.assign(2, 0);
  CHECK_THROWS_WITH_AS(uncertainty_fraction(pm), "empty map", std::runtime_error);
}

TEST_CASE("k = 1 bootstrap equals that replication's binary map") {
  const Scenario scenario = small_scenario();
  const GridSpec spec = small_spec();
  const DetectorConfig config{4, 0.30, 33.3};
  const BootstrapReport report = run_bootstrap(scenario, spec, config, 1, 123);
  const BinaryMap single = replication_binary_map(scenario, spec, config, 123, 0);
  REQUIRE(report.probability.probs.size() == single.indicators.size());
  for (std::size_t c = 0; c < single.indicators.size(); ++c) {
    CHECK(report.probability.valid[c] == single.valid[c]);
    if (single.valid[c]) CHECK(report.probability.probs[c] == double(single.indicators[c]));
  }
}

TEST_CASE("zero-perturbation bootstrap yields degenerate probabilities") {
  Scenario scenario = small_scenario();
  scenario.perturbation = PerturbationSpec{0, 0, 0, 0, 0};
  const BootstrapReport report =
      run_bootstrap(scenario, small_spec(), {4, 0.30, 33.3}, 5, 9);
  for (std::size_t c = 0; c < report.probability.probs.size(); ++c)
    if (report.probability.valid[c])
      CHECK((report.probability.probs[c] == 0.0 || report.probability.probs[c] == 1.0));
}

TEST_CASE("bootstrap output is schedule independent") {
  const Scenario scenario = small_scenario();
  const GridSpec spec = small_spec();
  const DetectorConfig config{4, 0.30, 33.3};
  const BootstrapReport serial = run_bootstrap(scenario, spec, config, 8, 2718, 1);
  const BootstrapReport threaded = run_bootstrap(scenario, spec, config, 8, 2718, 4);
  CHECK(serial.probability.probs == threaded.probability.probs);
  CHECK(serial.probability.valid == threaded.probability.valid);

  std::ostringstream a, b;
  write_probability_csv(a, serial.probability);
  write_probability_csv(b, threaded.probability);
  CHECK(a.str() == b.str());
}

TEST_CASE("bernoulli convergence sanity at k = 100") {
  // Synthetic indicators injected directly into the estimator.
  const GridSpec spec{0, 0, 1, 10, 40, 25};
  const double q = 0.3;
  std::mt19937 rng(31);
  std::bernoulli_distribution coin(q);
  std::vector<BinaryMap> maps;
  for (int i = 0; i < 100; ++i) {
    BinaryMap m = make_binary(spec, 0);
    for (auto& v : m.indicators) v = coin(rng);
    maps.push_back(std::move(m));
  }
  const ProbabilityMap pm = probability_map(maps);
  const double bound = 3.0 * std::sqrt(q * (1 - q) / 100.0);
  std::size_t within = 0;
  for (double p : pm.probs)
    if (std::abs(p - q) <= bound) ++within;
  CHECK(static_cast<double>(within) / pm.probs.size() >= 0.99);
}

TEST_CASE("probability CSV round trip") {
  ProbabilityMap pm;
  pm.spec = GridSpec{0, 0, 1, 10, 5, 3};
  pm.k = 4;
  pm.probs = {0, 0.25, 0.5, 0.75, 1, 0, 0, 0.25, 1, 1, 0.5, 0.5, 0.5, 0, 0.75};
  pm.valid.assign(15, 1);
  pm.valid[3] = 0;
  std::ostringstream out;
  write_probability_csv(out, pm);
  std::istringstream in(out.str());
  const ProbabilityMap reread = read_probability_csv(in);
  std::ostringstream again;
  write_probability_csv(again, reread);
  CHECK(out.str() == again.str());
}
