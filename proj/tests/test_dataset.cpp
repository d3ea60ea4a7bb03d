#include <cmath>
#include <sstream>

#include "doctest.h"
#include "takeoff/dataset.hpp"
#include "takeoff/error.hpp"
#include "takeoff/netgen.hpp"
#include "takeoff/rng.hpp"

using namespace takeoff;

TEST_CASE("labels use the >= convention") {
  CHECK(label(100, 100.0) == 1);
  CHECK(label(99, 100.0) == 0);
  static_assert(label(5, 4.5) == 1);
}

TEST_CASE("auto threshold sits in the valley of a bimodal sample") {
  std::vector<std::size_t> sizes;
  RandomStream rng(1, 1);
  for (int i = 0; i < 3000; ++i) sizes.push_back(1 + rng.below(6));
  for (int i = 0; i < 2000; ++i) sizes.push_back(600 + rng.below(200));
  const double phi = auto_phi_star(sizes, 1000, 10, 5);
  // die-outs fill bin 0; the 5-bin smoother spreads them to bin 2, so the
  // flat zero valley starts at bin 3 and ties resolve to its left edge
  CHECK(phi == 30.0);
  std::vector<std::size_t> uni;
  for (int i = 0; i < 1000; ++i) uni.push_back(1 + rng.below(4));
  CHECK_THROWS_AS(auto_phi_star(uni, 1000, 10, 5), UnimodalError);
}

namespace {

BatchResult small_batch(std::size_t runs = 300, std::size_t horizon = std::numeric_limits<std::size_t>::max()) {
  static const Graph g = generate_er(400, 5.0, 3);
  SimConfig cfg;
  cfg.master_seed = 11;
  cfg.record_horizon = horizon;
  return run_batch(g, {0.12, 0.2}, cfg, runs, 1);
}

}  // namespace

TEST_CASE("truncation matches a recount of the transmission record") {
  const auto batch = small_batch(40);
  for (const auto& run : batch.runs) {
    for (std::size_t t_o : {0u, 1u, 5u, 12u}) {
      const auto seq = truncate(run, t_o);
      REQUIRE(seq.cum_counts.size() == t_o + 1);
      std::vector<std::uint32_t> fresh(t_o + 1, 0);
      for (const auto& inf : run.record.infections)
        if (inf.step <= t_o) ++fresh[inf.step];
      std::uint32_t cum = static_cast<std::uint32_t>(run.record.seed_nodes.size());
      CHECK(seq.new_counts[0] == 0);
      CHECK(seq.infected_nodes[0] == run.record.seed_nodes);
      for (std::size_t t = 0; t <= t_o; ++t) {
        if (t > 0) cum += fresh[t];
        CHECK(seq.new_counts[t] == fresh[t]);
        CHECK(seq.cum_counts[t] == cum);
        CHECK(seq.infected_nodes[t].size() == (t == 0 ? run.record.seed_nodes.size() : fresh[t]));
        if (t <= run.trajectory.t_end && t < run.trajectory.counts.size())
          CHECK(seq.cum_counts[t] == run.trajectory.counts[t].i + run.trajectory.counts[t].r);
      }
    }
  }
  const auto cut = small_batch(40, 4);
  bool threw = false;
  for (const auto& run : cut.runs)
    if (run.trajectory.t_end > 4) {
      CHECK_THROWS_AS(truncate(run, 8), InvalidArgument);
      threw = true;
      break;
    }
  CHECK(threw);
}

TEST_CASE("datasets are stratified and deterministic") {
  const auto batch = small_batch();
  const auto sizes = batch.final_sizes();
  const double phi = 40.0;
  const Dataset a = build_dataset(batch, 5, phi, {0.8, 0.1, 0.1}, 3);
  const Dataset b = build_dataset(batch, 5, phi, {0.8, 0.1, 0.1}, 3);
  CHECK(a == b);
  const Dataset c = build_dataset(batch, 5, phi, {0.8, 0.1, 0.1}, 4);
  CHECK_FALSE(a == c);
  std::size_t pos = 0;
  for (auto f : sizes) pos += f >= phi ? 1 : 0;
  REQUIRE(pos > 10);
  REQUIRE(pos < sizes.size() - 10);
  const double overall = static_cast<double>(pos) / static_cast<double>(sizes.size());
  CHECK(a.positive_fraction() == doctest::Approx(overall));
  std::size_t total = 0;
  for (Split s : {Split::Train, Split::Validation, Split::Test}) {
    const auto idx = a.indices(s);
    total += idx.size();
    double p = 0.0;
    for (auto i : idx) p += a.samples[i].label;
    // stratification keeps each split's balance within one sample of the overall rate
    CHECK(std::abs(p - overall * static_cast<double>(idx.size())) <= 1.0);
  }
  CHECK(total == sizes.size());
  CHECK(a.indices(Split::Train).size() == 240);
  for (const auto& s : a.samples) CHECK(s.label == label(s.final_r, phi));
  CHECK(a.provenance.t_o == 5);
  CHECK(a.provenance.phi_star == phi);
}

TEST_CASE("single-class datasets are rejected") {
  const auto batch = small_batch(50);
  CHECK_THROWS_AS(build_dataset(batch, 5, 399.0, {0.8, 0.1, 0.1}, 1), InvalidArgument);
  CHECK_THROWS_AS((SplitRatios{0.5, 0.1, 0.1}.validate()), InvalidArgument);
}

TEST_CASE("retruncation equals building at the shorter horizon") {
  const auto batch = small_batch();
  const Dataset long_ds = build_dataset(batch, 12, 40.0, {0.8, 0.1, 0.1}, 3);
  const Dataset short_ds = build_dataset(batch, 6, 40.0, {0.8, 0.1, 0.1}, 3);
  CHECK(retruncate(long_ds, 6) == short_ds);
  CHECK_THROWS_AS(retruncate(short_ds, 7), InvalidArgument);
}

TEST_CASE("dataset file round trip and validation") {
  const auto batch = small_batch();
  Provenance base;
  base.network = "test";
  base.graph_fingerprint = "abc";
  const Dataset ds = build_dataset(batch, 6, 40.0, {0.8, 0.1, 0.1}, 3, base);
  std::stringstream ss;
  save_dataset(ds, ss);
  const std::string text = ss.str();
  CHECK(load_dataset(ss) == ds);
  std::stringstream again;
  std::stringstream copy(text);
  save_dataset(load_dataset(copy), again);
  CHECK(again.str() == text);
  std::string tampered = text;
  tampered.replace(tampered.find("\"version\":1"), 11, "\"version\":9");
  std::stringstream bad(tampered);
  CHECK_THROWS_AS(load_dataset(bad), FormatError);
}
