#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "takeoff/error.hpp"

namespace fs = std::filesystem;
using takeoff::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::current_path() / "cli_scratch" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string content_hash(const fs::path& manifest) {
  return nlohmann::json::parse(slurp(manifest)).at("content_hash").get<std::string>();
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"generate", "--er", "--k", "5"}).code == 1);
  CHECK(cli({"generate", "--n", "100", "--k", "5"}).code == 1);
  CHECK(cli({"generate", "--er", "--n", "100"}).code == 1);
  CHECK(cli({"generate", "--er", "--ba", "--n", "100", "--k", "5", "--m", "2"}).code == 1);
  CHECK(cli({"simulate", "--graph", "x"}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("generate writes an edge list") {
  const auto r = cli({"generate", "--er", "--n", "1000", "--k", "5", "--seed", "1"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("# takeoff edge list v1\n", 0) == 0);
  const auto edges = static_cast<long>(std::count(r.out.begin(), r.out.end(), '\n')) - 2;
  CHECK(std::abs(edges - 2500) < 250);
  CHECK(cli({"generate", "--er", "--n", "1000", "--k", "5", "--seed", "1"}).out == r.out);

  const auto dir = scratch("generate");
  const auto path = (dir / "ba.edges").string();
  REQUIRE(cli({"generate", "--ba", "--n", "300", "--m", "3", "--out", path}).code == 0);
  CHECK(fs::exists(path + ".manifest.json"));
  CHECK(cli({"generate", "--ba", "--n", "2", "--m", "3", "--out", path}).code == 2);
}

TEST_CASE("simulate") {
  const auto dir = scratch("simulate");
  const auto g = (dir / "er.edges").string();
  REQUIRE(cli({"generate", "--er", "--n", "400", "--k", "5", "--out", g}).code == 0);

  SUBCASE("beta 0 never spreads") {
    const auto t = (dir / "zero.jsonl").string();
    REQUIRE(cli({"simulate", "--graph", g, "--beta", "0", "--runs", "100", "--out", t}).code == 0);
    std::ifstream in(t);
    std::string line;
    std::getline(in, line);
    CHECK(nlohmann::json::parse(line).at("format") == "takeoff-trajectories");
    std::size_t n = 0;
    while (std::getline(in, line)) {
      CHECK(nlohmann::json::parse(line).at("final_r") == 1);
      ++n;
    }
    CHECK(n == 100);
  }
  SUBCASE("reruns and worker counts give identical bytes") {
    const std::vector<std::string> base{"simulate", "--graph", g, "--beta", "0.2", "--mu", "0.2", "--runs", "300",
                                        "--seed", "7"};
    auto with = [&](const std::string& name, const std::string& workers) {
      auto a = base;
      a.insert(a.end(), {"--out", (dir / name).string(), "--workers", workers});
      REQUIRE(cli(a).code == 0);
      return std::make_pair(slurp(dir / name), slurp(dir / fs::path(name).replace_extension(".hist.csv")));
    };
    const auto one = with("a.jsonl", "1");
    const auto again = with("a.jsonl", "1");
    const auto four = with("b.jsonl", "4");
    CHECK(one == again);
    CHECK(one == four);
    CHECK(one.second.rfind("# format: takeoff-histogram/1\n", 0) == 0);
  }
  SUBCASE("every invalid field is reported") {
    const auto r = cli({"simulate", "--graph", g, "--beta", "1.5", "--runs", "0", "--out", (dir / "x").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("beta") != std::string::npos);
    CHECK(r.err.find("runs") != std::string::npos);
  }
  SUBCASE("missing input file is a runtime error") {
    CHECK(cli({"simulate", "--graph", (dir / "nope").string(), "--beta", "0.1", "--out", (dir / "x").string()})
              .code == 3);
  }
  SUBCASE("config file with flag override") {
    const auto cfg = dir / "sim.toml";
    std::ofstream(cfg) << "# simulation\nbeta = 0.0\nruns = 5\nmu = 0.5\n[plot]\ntitle = \"ignored\"\n";
    const auto t = (dir / "cfg.jsonl").string();
    REQUIRE(cli({"simulate", "--config", cfg.string(), "--graph", g, "--runs", "12", "--out", t}).code == 0);
    const auto text = slurp(t);
    CHECK(std::count(text.begin(), text.end(), '\n') == 13);
    CHECK(text.find("\"mu\":0.5") != std::string::npos);
    const auto man = nlohmann::json::parse(slurp(t + ".manifest.json"));
    CHECK(man.at("config").at("runs") == "12");
    CHECK(man.at("config").at("beta") == "0.0");
  }
}

TEST_CASE("pipeline from simulation to evaluation") {
  const auto dir = scratch("pipeline");
  const auto p = [&](const std::string& n) { return (dir / n).string(); };
  REQUIRE(cli({"generate", "--er", "--n", "600", "--k", "5", "--out", p("er.edges")}).code == 0);
  REQUIRE(cli({"simulate", "--graph", p("er.edges"), "--beta", "0.15", "--mu", "0.2", "--runs", "600",
               "--record-horizon", "8", "--out", p("runs.jsonl")})
              .code == 0);
  REQUIRE(cli({"build-dataset", "--graph", p("er.edges"), "--trajectories", p("runs.jsonl"), "--t-o", "6",
               "--auto-phi", "--out", p("ds.json")})
              .code == 0);
  CHECK(cli({"build-dataset", "--graph", p("er.edges"), "--trajectories", p("runs.jsonl"), "--t-o", "6", "--out",
             p("x.json")})
            .code == 1);

  const std::vector<std::string> ogwn{"train", "--dataset", p("ds.json"), "--model", "ogwn", "--graph", p("er.edges"),
                                      "--epochs", "3", "--hidden", "4", "--mlp-hidden", "6", "--sample-points", "3",
                                      "--out", p("ogwn.ckpt")};
  REQUIRE(cli(ogwn).code == 0);
  const auto ck1 = slurp(p("ogwn.ckpt"));
  REQUIRE(cli(ogwn).code == 0);
  CHECK(slurp(p("ogwn.ckpt")) == ck1);
  CHECK(slurp(p("ogwn.history.csv")).rfind("# format: takeoff-history/1\n", 0) == 0);

  const std::vector<std::string> ev{"evaluate", "--model", p("ogwn.ckpt"), "--dataset", p("ds.json"), "--graph",
                                    p("er.edges"), "--out", p("metrics.csv")};
  REQUIRE(cli(ev).code == 0);
  const auto m1 = slurp(p("metrics.csv"));
  const auto h1 = content_hash(p("metrics.csv.manifest.json"));
  REQUIRE(cli(ev).code == 0);
  CHECK(slurp(p("metrics.csv")) == m1);
  CHECK(content_hash(p("metrics.csv.manifest.json")) == h1);
  CHECK(m1.rfind("# format: takeoff-metrics/1\n", 0) == 0);
  CHECK(fs::exists(p("metrics.roc.json")));

  REQUIRE(cli({"train", "--dataset", p("ds.json"), "--model", "knn", "--out", p("knn.ckpt")}).code == 0);
  REQUIRE(cli({"evaluate", "--model", p("knn.ckpt"), "--dataset", p("ds.json"), "--out", p("knn.csv")}).code == 0);
  CHECK(cli({"train", "--dataset", p("ds.json"), "--model", "ogwn", "--out", p("bad.ckpt")}).code == 2);
  CHECK(cli({"train", "--dataset", p("ds.json"), "--model", "svm", "--out", p("bad.ckpt")}).code == 2);

  REQUIRE(cli({"sweep", "--graph", p("er.edges"), "--trajectories", p("runs.jsonl"), "--t-o", "4,6", "--auto-phi",
               "--models", "st5,knn", "--out", p("sweep.csv")})
              .code == 0);
  const auto sweep = slurp(p("sweep.csv"));
  CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 6);

  REQUIRE(cli({"plot", "--input", p("sweep.csv"), "--out", p("sweep.svg")}).code == 0);
  const auto svg = slurp(p("sweep.svg"));
  CHECK(svg.find("data-label=\"st5\" data-x=\"4 6\"") != std::string::npos);

  SUBCASE("finetune refuses its own pretraining network") {
    REQUIRE(cli({"pretrain", "--networks", "file:" + p("er.edges"), "--betas", "0.15", "--mu", "0.2",
                 "--runs-per-cell", "300", "--t-o", "6", "--epochs", "2", "--hidden", "4", "--mlp-hidden", "6",
                 "--sample-points", "3", "--out", p("pre.ckpt")})
                .code == 0);
    const auto r = cli({"finetune", "--model", p("pre.ckpt"), "--dataset", p("ds.json"), "--graph", p("er.edges"),
                        "--out", p("ft.ckpt")});
    CHECK(r.code == 2);
    CHECK(r.err.find("pretraining") != std::string::npos);
    CHECK_FALSE(fs::exists(p("ft.ckpt")));
  }
}

TEST_CASE("plot") {
  const auto dir = scratch("plot");
  SUBCASE("empty series") {
    std::ofstream(dir / "empty.csv") << "x,y\n";
    const auto r = cli({"plot", "--input", (dir / "empty.csv").string(), "--out", (dir / "e.svg").string()});
    CHECK(r.code == 2);
    std::istringstream in("x,y\n");
    CHECK_THROWS_AS(takeoff::cli::parse_plot_input(in), takeoff::EmptyInput);
  }
  SUBCASE("two-point line") {
    std::ofstream(dir / "line.csv") << "x,y\n0,0\n1,1\n";
    REQUIRE(cli({"plot", "--input", (dir / "line.csv").string(), "--out", (dir / "l.svg").string()}).code == 0);
    const auto svg = slurp(dir / "l.svg");
    const std::regex poly("<polyline [^>]*>");
    CHECK(std::distance(std::sregex_iterator(svg.begin(), svg.end(), poly), std::sregex_iterator()) == 1);
    CHECK(svg.find("data-x=\"0 1\" data-y=\"0 1\"") != std::string::npos);
    CHECK(svg.find("data-format=\"takeoff-plot/1\"") != std::string::npos);
  }
  SUBCASE("metrics: one polyline per model") {
    std::ostringstream csv;
    csv << "# format: takeoff-metrics/1\nmodel,t_o,accuracy,precision,recall,f1,auc,n_test\n";
    for (const char* m : {"st5", "knn", "ogwn"})
      for (int t = 1; t <= 5; ++t) csv << m << ',' << t << ",0.5,0.5,0.5,0.5," << 0.5 + 0.05 * t << ",100\n";
    std::istringstream in(csv.str());
    const auto data = takeoff::cli::parse_plot_input(in);
    REQUIRE(data.series.size() == 3);
    CHECK(data.series[2].label == "ogwn");
    CHECK(data.series[2].x == std::vector<double>{1, 2, 3, 4, 5});
    const auto svg = takeoff::cli::render_svg(data);
    const std::regex poly("<polyline ");
    CHECK(std::distance(std::sregex_iterator(svg.begin(), svg.end(), poly), std::sregex_iterator()) == 3);
  }
  SUBCASE("histogram bars") {
    std::istringstream in("# format: takeoff-histogram/1\nbin_start,count\n0,10\n5,0\n10,3\n");
    const auto data = takeoff::cli::parse_plot_input(in);
    CHECK(data.kind == takeoff::cli::PlotData::Kind::Bars);
    const auto svg = takeoff::cli::render_svg(data);
    CHECK(svg.find("data-x=\"10\" data-y=\"3\"") != std::string::npos);
  }
}
