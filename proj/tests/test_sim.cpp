#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "takeoff/error.hpp"
#include "takeoff/netgen.hpp"
#include "takeoff/sim.hpp"

using namespace takeoff;

namespace {

Graph path_graph(std::size_t n) {
  std::vector<std::pair<NodeId, NodeId>> e;
  for (NodeId v = 0; v + 1 < n; ++v) e.emplace_back(v, v + 1);
  return Graph(n, e);
}

Graph star_graph(std::size_t leaves) {
  std::vector<std::pair<NodeId, NodeId>> e;
  for (NodeId v = 1; v <= leaves; ++v) e.emplace_back(0, v);
  return Graph(leaves + 1, e);
}

SimConfig fixed_seed(NodeId v, std::uint64_t seed = 1) {
  SimConfig c;
  c.seed_selection = SeedSelection::FixedNode;
  c.fixed_node = v;
  c.master_seed = seed;
  return c;
}

}  // namespace

TEST_CASE("compartments are conserved and the record is causal") {
  const Graph g = generate_er(500, 5.0, 2);
  const auto batch = run_batch(g, {0.15, 0.2}, SimConfig{}, 50, 1);
  for (const auto& run : batch.runs) {
    const auto& c = run.trajectory.counts;
    REQUIRE(c.size() == run.trajectory.t_end + 1);
    for (std::size_t t = 0; t < c.size(); ++t) {
      CHECK(c[t].s + c[t].i + c[t].r == 500);
      if (t > 0) {
        CHECK(c[t].s <= c[t - 1].s);
        CHECK(c[t].r >= c[t - 1].r);
      }
    }
    CHECK(c.back().i == 0);
    CHECK(run.trajectory.final_r == c.back().r);
    CHECK(run.trajectory.final_r == run.record.infections.size() + run.record.seed_nodes.size());
    // every infector was infected strictly earlier and every node at most once
    std::map<NodeId, std::uint32_t> when;
    for (NodeId s : run.record.seed_nodes) when[s] = 0;
    for (const auto& inf : run.record.infections) {
      REQUIRE(when.count(inf.infector) == 1);
      CHECK(when[inf.infector] < inf.step);
      CHECK(when.count(inf.infectee) == 0);
      CHECK(g.has_edge(inf.infector, inf.infectee));
      when[inf.infectee] = inf.step;
    }
  }
}

TEST_CASE("no transmission leaves only the seed") {
  const Graph g = generate_er(300, 5.0, 3);
  const auto batch = run_batch(g, {0.0, 0.1}, SimConfig{}, 100, 2);
  for (const auto& run : batch.runs) CHECK(run.trajectory.final_r == 1);
}

TEST_CASE("certain transmission and recovery walks a path") {
  const Graph g = path_graph(4);
  const auto run = run_stochastic_sir(g, {1.0, 1.0}, fixed_seed(0), 0);
  CHECK(run.trajectory.t_end == 4);
  CHECK(run.trajectory.final_r == 4);
  for (std::size_t t = 0; t < 4; ++t) CHECK(run.trajectory.counts[t] == Compartments{static_cast<std::uint32_t>(3 - t), 1, static_cast<std::uint32_t>(t)});
  const auto tg = run.record.transmission_graph(2);
  CHECK(tg == std::vector<std::pair<NodeId, NodeId>>{{0, 1}, {1, 2}});
}

TEST_CASE("star centre seeded with one-step infectious period is binomial") {
  const std::size_t leaves = 20;
  const double beta = 0.3;
  const auto batch = run_batch(star_graph(leaves), {beta, 1.0}, fixed_seed(0, 5), 20000, 1);
  double mean = 0.0;
  for (auto f : batch.final_sizes()) mean += static_cast<double>(f);
  mean /= 20000.0;
  // 1 + Binomial(20, 0.3): mean 7, sd of the sample mean ~0.0144
  CHECK(std::abs(mean - 7.0) < 5 * 0.0144);
}

TEST_CASE("batches are identical for any worker count") {
  const Graph g = generate_ba(400, 2, 4);
  SimConfig cfg;
  cfg.master_seed = 77;
  const auto a = run_batch(g, {0.1, 0.2}, cfg, 64, 1);
  const auto b = run_batch(g, {0.1, 0.2}, cfg, 64, 4);
  CHECK(a.runs == b.runs);
  std::ostringstream sa, sb;
  write_trajectory_jsonl(a, sa);
  write_trajectory_jsonl(b, sb);
  CHECK(sa.str() == sb.str());
  cfg.master_seed = 78;
  CHECK_FALSE(run_batch(g, {0.1, 0.2}, cfg, 64, 1).runs == a.runs);
}

TEST_CASE("trajectory jsonl round trip") {
  const Graph g = generate_er(200, 4.0, 6);
  const auto a = run_batch(g, {0.2, 0.3}, SimConfig{}, 10, 1);
  std::stringstream ss;
  write_trajectory_jsonl(a, ss);
  const auto b = read_trajectory_jsonl(ss, 200);
  CHECK(b.runs == a.runs);
  std::stringstream bad("{\"run_id\": 0}\n");
  CHECK_THROWS_AS(read_trajectory_jsonl(bad, 200), ParseError);
}

TEST_CASE("record horizon keeps exact final sizes") {
  const Graph g = generate_er(500, 5.0, 7);
  SimConfig full, cut;
  cut.record_horizon = 3;
  const auto a = run_batch(g, {0.15, 0.1}, full, 20, 1);
  const auto b = run_batch(g, {0.15, 0.1}, cut, 20, 1);
  for (std::size_t k = 0; k < 20; ++k) {
    CHECK(a.runs[k].trajectory.final_r == b.runs[k].trajectory.final_r);
    CHECK(a.runs[k].trajectory.t_end == b.runs[k].trajectory.t_end);
    CHECK(b.runs[k].trajectory.counts.size() <= 4);
    for (const auto& inf : b.runs[k].record.infections) CHECK(inf.step <= 3);
  }
}

TEST_CASE("configuration validation") {
  CHECK_THROWS_AS((SirParams{1.5, 0.1}.validate()), InvalidArgument);
  CHECK_THROWS_AS((SirParams{0.1, 0.0}.validate()), InvalidArgument);
  SimConfig c;
  c.initial_infected = 10;
  CHECK_THROWS_AS(c.validate(10), InvalidArgument);
}

TEST_CASE("histogram, smoothing and modes") {
  const std::vector<std::size_t> sizes{0, 1, 1, 2, 9, 10, 10};
  const Histogram h = final_size_histogram(sizes, 10, 2);
  CHECK(h.counts == std::vector<std::size_t>{3, 1, 0, 0, 1, 2});
  CHECK(h.total() == 7);
  const auto s = smooth_histogram(h, 3);
  CHECK(s[0] == doctest::Approx(2.0));  // clipped window: (3 + 1) / 2
  CHECK(s[1] == doctest::Approx(4.0 / 3));
  CHECK(s[5] == doctest::Approx(1.5));
  const std::vector<double> series{1, 3, 3, 2, 0, 0, 4, 1, 5};
  CHECK(local_maxima(series) == std::vector<std::size_t>{1, 6, 8});
  CHECK(estimate_dieout_prob(sizes, 5.0) == doctest::Approx(4.0 / 7));
  std::ostringstream csv;
  write_histogram_csv(h, csv);
  CHECK(csv.str().rfind("# format: takeoff-histogram/1\nbin_start,count\n0,3\n", 0) == 0);
}

TEST_CASE("ode conserves population and meets the final-size relation") {
  const double beta = 0.3, mu = 0.1, n = 1e4, i0 = 10;
  const auto traj = run_deterministic_sir(beta, mu, n, i0, 600.0, 0.01, 100);
  for (const auto& p : traj.samples) CHECK(std::abs(p.s + p.i + p.r - n) / n <= 1e-9);
  const auto& end = traj.samples.back();
  const double r0 = beta / mu;
  const double s0 = (n - i0) / n;
  // S(t) = S0 exp(-R0 R(t) / N) along the whole trajectory
  CHECK(std::abs(end.s / n - s0 * std::exp(-r0 * end.r / n)) < 1e-6);
  CHECK(end.i / n < 1e-9);
  CHECK_THROWS_AS(run_deterministic_sir(beta, mu, n, 0.0, 10.0, 0.1), InvalidArgument);
}
