#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "cli.hpp"
#include "takeoff/dataset.hpp"
#include "takeoff/error.hpp"
#include "takeoff/eval.hpp"
#include "takeoff/graphwave.hpp"
#include "takeoff/models.hpp"
#include "takeoff/netgen.hpp"
#include "takeoff/sim.hpp"

namespace takeoff::cli {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

/// Bad flag combination that CLI11 cannot express; reported as a usage error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config, out;
  std::uint64_t seed = 1;
  std::size_t workers = 1;

  bool er = false, ba = false, ws = false;
  std::size_t n = 0, m = 0;
  double k = 0.0, p = 0.1;

  std::string graph, trajectories, histogram;
  double beta = 0.0, mu = 0.1;
  std::size_t runs = 1000, max_steps = 1000, initial_infected = 1, record_horizon = 0, bin_width = 0;

  std::size_t t_o = 0, smooth_window = 5;
  double phi_star = 0.0;
  bool auto_phi = false;
  std::string split = "0.8,0.1,0.1";
  std::uint64_t split_seed = 1;

  std::string dataset, model, models = "st5,st15,st25,knn,ocnn,ogwn", t_os, pretrained, roc, eval_split = "test";
  std::size_t knn_k = 5, hidden = 64, ocnn_filters = 64, ocnn_embed = 32, ocnn_vocab = 32;
  std::string mlp_hidden = "128,64", ocnn_windows = "2,3,4", ocnn_head = "64";
  std::size_t sample_points = 25, cheb_order = 40;
  double t_max = 100.0, scale = 0.0;
  std::string embedding_cache;
  std::size_t epochs = 100, batch_size = 32, patience = 10;
  double lr = 1e-3, clip = 5.0;

  std::string networks, betas;
  std::size_t runs_per_cell = 2000, finetune_epochs = 10;
  double lr_multiplier = 0.1;

  std::string input, metric = "auc", title;
};

struct Context {
  Options& o;
  CLI::App* sub;
  std::ostream& out;
  std::ostream& err;
  Clock::time_point start;

  bool given(const std::string& flag) const {
    const auto* opt = sub->get_option_no_throw(flag);
    return opt && opt->count() > 0;
  }
  double elapsed() const { return std::chrono::duration<double>(Clock::now() - start).count(); }
};

// ---------------------------------------------------------------- parsing helpers

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string w;
  while (std::getline(ss, w, ','))
    if (!w.empty()) out.push_back(w);
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw InvalidArgument(what + ": '" + s + "' is not a number");
  return v;
}

std::size_t parse_size(const std::string& s, const std::string& what) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw InvalidArgument(what + ": '" + s + "' is not a non-negative integer");
  return std::stoull(s);
}

std::vector<double> doubles(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& w : words(s)) out.push_back(parse_double(w, what));
  return out;
}

std::vector<std::size_t> sizes(const std::string& s, const std::string& what) {
  std::vector<std::size_t> out;
  for (const auto& w : words(s)) out.push_back(parse_size(w, what));
  return out;
}

/// er:N:K:SEED, ba:N:M:SEED, ws:N:K:P:SEED or file:PATH.
NetworkSpec parse_network(const std::string& text) {
  std::vector<std::string> f;
  std::stringstream ss(text);
  std::string w;
  while (std::getline(ss, w, ':')) f.push_back(w);
  NetworkSpec spec;
  const std::string bad = "network '" + text + "'";
  if (f.size() == 2 && f[0] == "file") {
    spec.kind = NetworkKind::File;
    spec.path = f[1];
  } else if (f.size() == 4 && f[0] == "er") {
    spec.kind = NetworkKind::ER;
    spec.n = parse_size(f[1], bad);
    spec.avg_degree = parse_double(f[2], bad);
    spec.rng_seed = parse_size(f[3], bad);
  } else if (f.size() == 4 && f[0] == "ba") {
    spec.kind = NetworkKind::BA;
    spec.n = parse_size(f[1], bad);
    spec.m = parse_size(f[2], bad);
    spec.rng_seed = parse_size(f[3], bad);
  } else if (f.size() == 5 && f[0] == "ws") {
    spec.kind = NetworkKind::WS;
    spec.n = parse_size(f[1], bad);
    spec.avg_degree = parse_double(f[2], bad);
    spec.rewire_p = parse_double(f[3], bad);
    spec.rng_seed = parse_size(f[4], bad);
  } else {
    throw InvalidArgument(bad + ": expected er:N:K:SEED, ba:N:M:SEED, ws:N:K:P:SEED or file:PATH");
  }
  return spec;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "validation") return Split::Validation;
  if (s == "test") return Split::Test;
  throw InvalidArgument("split must be train, validation or test, not '" + s + "'");
}

/// Collects every failing field before reporting.
class Checks {
 public:
  template <class F>
  void field(const std::string& name, F&& check) {
    try {
      check();
    } catch (const InvalidArgument& e) {
      errors_.push_back(name + ": " + e.what());
    }
  }
  void require(bool ok, const std::string& message) {
    if (!ok) errors_.push_back(message);
  }
  void done() const {
    if (errors_.empty()) return;
    std::string msg = "invalid configuration";
    for (const auto& e : errors_) msg += "\n  " + e;
    throw InvalidArgument(msg);
  }

 private:
  std::vector<std::string> errors_;
};

// ---------------------------------------------------------------- config builders

SplitRatios split_ratios(const Options& o) {
  const auto r = doubles(o.split, "split");
  if (r.size() != 3) throw InvalidArgument("split needs three comma-separated fractions");
  return {r[0], r[1], r[2]};
}

WaveletConfig wavelet_config(const Context& c) {
  WaveletConfig w;
  if (c.given("--scale")) w.scale = c.o.scale;
  w.cheb_order = c.o.cheb_order;
  w.sample_points = WaveletConfig::evenly_spaced(c.o.sample_points, c.o.t_max);
  return w;
}

OgwnConfig ogwn_config(const Context& c) {
  OgwnConfig g;
  g.wavelet = wavelet_config(c);
  g.hidden = c.o.hidden;
  g.mlp_hidden = sizes(c.o.mlp_hidden, "mlp-hidden");
  return g;
}

OcnnConfig ocnn_config(const Options& o) {
  OcnnConfig cfg;
  cfg.conv.vocab_size = o.ocnn_vocab;
  cfg.conv.embed_dim = o.ocnn_embed;
  cfg.conv.filters_per_window = o.ocnn_filters;
  cfg.conv.windows = sizes(o.ocnn_windows, "ocnn-windows");
  cfg.head_hidden = sizes(o.ocnn_head, "ocnn-head");
  return cfg;
}

TrainConfig train_config(const Options& o) {
  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.learning_rate = o.lr;
  tc.patience = o.patience;
  tc.clip_norm = o.clip;
  tc.seed = o.seed;
  return tc;
}

SimConfig sim_config(const Context& c) {
  SimConfig cfg;
  cfg.max_steps = c.o.max_steps;
  cfg.initial_infected = c.o.initial_infected;
  cfg.master_seed = c.o.seed;
  if (c.given("--record-horizon")) cfg.record_horizon = c.o.record_horizon;
  return cfg;
}

std::uint64_t split_seed(const Context& c) { return c.given("--split-seed") ? c.o.split_seed : c.o.seed; }

/// Explicit --phi-star, or the histogram valley with --auto-phi.
double resolve_phi(const Context& c, const BatchResult& batch) {
  const bool fixed = c.given("--phi-star");
  if (fixed == c.o.auto_phi) throw UsageError("give exactly one of --phi-star and --auto-phi");
  if (fixed) return c.o.phi_star;
  LabelingConfig lab;
  lab.auto_phi = true;
  lab.bin_width = c.o.bin_width;
  lab.smooth_window = c.o.smooth_window;
  return lab.resolve(batch);
}

Provenance graph_provenance(const Graph& g, const std::string& path) {
  Provenance p;
  p.network = "file:" + fs::path(path).filename().string();
  p.graph_fingerprint = g.fingerprint_hex();
  return p;
}

void check_graph_matches(const Graph& g, const Provenance& p) {
  if (!p.graph_fingerprint.empty() && p.graph_fingerprint != g.fingerprint_hex())
    throw InvalidArgument("graph " + g.fingerprint_hex() + " does not match the dataset's network " +
                          p.graph_fingerprint);
}

std::shared_ptr<const EmbeddingMatrix> node_embedding(const Graph& g, const WaveletConfig& w, const Options& o) {
  return std::make_shared<EmbeddingMatrix>(o.embedding_cache.empty() ? embed_nodes(g, w, o.workers)
                                                                     : cached_embedding(g, w, o.embedding_cache,
                                                                                        o.workers));
}

BatchResult load_batch(const std::string& path, std::size_t n_nodes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  return read_trajectory_jsonl(in, n_nodes);
}

// ---------------------------------------------------------------- outputs

void write_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  body(out);
  if (!out) throw IoError("write failed: " + path);
}

std::string sibling(const std::string& out, const std::string& extension) {
  return fs::path(out).replace_extension(extension).string();
}

void write_history(const std::string& path, const TrainHistory& h) {
  write_file(path, [&](std::ostream& out) {
    out << "# format: takeoff-history/1\nepoch,train_loss,val_loss,val_auc\n";
    char buf[96];
    for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
      const double vl = e < h.val_loss.size() ? h.val_loss[e] : NAN;
      std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,", e + 1, h.train_loss[e], vl);
      out << buf;
      if (e < h.val_auc.size() && h.val_auc[e]) {
        std::snprintf(buf, sizeof buf, "%.10g", *h.val_auc[e]);
        out << buf;
      } else {
        out << "undefined";
      }
      out << '\n';
    }
  });
}

/// Options as given or defaulted, minus those that cannot change an output.
nlohmann::ordered_json config_snapshot(const CLI::App* sub) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const auto& name = opt->get_lnames().front();
    if (name == "help" || name == "config" || name == "workers") continue;
    if (opt->count() > 0) {
      j[name] = opt->results().back();
    } else if (!opt->get_default_str().empty()) {
      j[name] = opt->get_default_str();
    } else {
      j[name] = nullptr;
    }
  }
  return j;
}

Manifest manifest_for(const Context& c) {
  Manifest m;
  m.command = c.sub->get_name();
  m.config = config_snapshot(c.sub);
  m.seeds["seed"] = c.o.seed;
  return m;
}

void finish(const Context& c, Manifest& m) { m.write(c.o.out + ".manifest.json", c.elapsed()); }

const char* fmt_opt(std::optional<double> v, char* buf, std::size_t len) {
  if (!v) return "undefined";
  std::snprintf(buf, len, "%.4f", *v);
  return buf;
}

// ---------------------------------------------------------------- commands

int cmd_generate(Context& c) {
  const auto& o = c.o;
  if (o.er + o.ba + o.ws != 1) throw UsageError("choose exactly one of --er, --ba, --ws");
  NetworkSpec spec;
  spec.n = o.n;
  spec.rng_seed = o.seed;
  if (o.er || o.ws) {
    if (!c.given("--k")) throw UsageError("--k is required for --er and --ws");
    spec.kind = o.er ? NetworkKind::ER : NetworkKind::WS;
    spec.avg_degree = o.k;
    spec.rewire_p = o.p;
  } else {
    if (!c.given("--m")) throw UsageError("--m is required for --ba");
    spec.kind = NetworkKind::BA;
    spec.m = o.m;
  }
  Checks checks;
  checks.field("network", [&] { spec.validate(); });
  checks.done();
  const Graph g = build_network(spec);
  if (o.out.empty() || o.out == "-") {
    write_edge_list(g, c.out);
    return kExitOk;
  }
  save_edge_list(g, o.out);
  c.out << spec.describe() << ": " << g.num_nodes() << " nodes, " << g.num_edges() << " edges, fingerprint "
        << g.fingerprint_hex() << '\n';
  auto m = manifest_for(c);
  m.outputs = {o.out};
  m.extra["fingerprint"] = g.fingerprint_hex();
  m.extra["edges"] = g.num_edges();
  finish(c, m);
  return kExitOk;
}

int cmd_simulate(Context& c) {
  const auto& o = c.o;
  const Graph g = load_edge_list(o.graph);
  const SirParams params{o.beta, o.mu};
  const SimConfig cfg = sim_config(c);
  Checks checks;
  checks.field("beta/mu", [&] { params.validate(); });
  checks.field("simulation", [&] { cfg.validate(g.num_nodes()); });
  checks.require(o.runs > 0, "runs: must be positive");
  checks.done();

  const BatchResult batch = run_batch(g, params, cfg, o.runs, o.workers);
  write_file(o.out, [&](std::ostream& out) { write_trajectory_jsonl(batch, out); });
  const std::size_t bw = o.bin_width ? o.bin_width : std::max<std::size_t>(1, g.num_nodes() / 100);
  const std::string hist_path = o.histogram.empty() ? sibling(o.out, ".hist.csv") : o.histogram;
  write_file(hist_path, [&](std::ostream& out) { write_histogram_csv(final_size_histogram(batch, bw), out); });

  const auto finals = batch.final_sizes();
  double mean = 0.0;
  for (auto f : finals) mean += static_cast<double>(f);
  mean /= static_cast<double>(finals.size());
  auto m = manifest_for(c);
  m.inputs = {o.graph};
  m.outputs = {o.out, hist_path};
  m.extra["mean_final_size"] = mean;
  c.out << o.runs << " runs, mean final size " << mean;
  try {
    const double phi = auto_phi_star(finals, g.num_nodes(), bw, o.smooth_window);
    const double q = estimate_dieout_prob(finals, phi);
    c.out << ", phi* " << phi << ", die-out probability " << q << '\n';
    m.extra["phi_star"] = phi;
    m.extra["dieout_prob"] = q;
  } catch (const UnimodalError&) {
    c.out << ", final-size distribution is unimodal\n";
    m.extra["phi_star"] = nullptr;
  }
  finish(c, m);
  return kExitOk;
}

int cmd_build_dataset(Context& c) {
  const auto& o = c.o;
  const Graph g = load_edge_list(o.graph);
  const BatchResult batch = load_batch(o.trajectories, g.num_nodes());
  SplitRatios ratios;
  Checks checks;
  checks.field("split", [&] {
    ratios = split_ratios(o);
    ratios.validate();
  });
  checks.done();
  const double phi = resolve_phi(c, batch);
  const Dataset ds = build_dataset(batch, o.t_o, phi, ratios, split_seed(c), graph_provenance(g, o.graph));
  save_dataset(ds, o.out);
  c.out << ds.samples.size() << " samples at t_o=" << o.t_o << ", phi* " << phi << ", positive fraction "
        << ds.positive_fraction() << " (train " << ds.indices(Split::Train).size() << ", validation "
        << ds.indices(Split::Validation).size() << ", test " << ds.indices(Split::Test).size() << ")\n";
  auto m = manifest_for(c);
  m.seeds["split_seed"] = split_seed(c);
  m.inputs = {o.graph, o.trajectories};
  m.outputs = {o.out};
  m.extra["phi_star"] = phi;
  finish(c, m);
  return kExitOk;
}

int cmd_train(Context& c) {
  const auto& o = c.o;
  const Dataset ds = load_dataset(o.dataset);
  const ModelKind kind = parse_model_kind(o.model);
  const TrainConfig tc = train_config(o);
  Checks checks;
  checks.require(kind != ModelKind::PretrainFinetune, "model: pretrain-finetune models come from 'finetune'");
  checks.field("training", [&] { tc.validate(); });
  OgwnConfig og;
  OcnnConfig oc;
  checks.field("ogwn", [&] {
    og = ogwn_config(c);
    if (kind == ModelKind::Ogwn) og.validate();
  });
  checks.field("ocnn", [&] {
    oc = ocnn_config(o);
    if (kind == ModelKind::Ocnn) oc.validate();
  });
  checks.field("knn-k", [&] { KnnConfig{o.knn_k}.validate(); });
  checks.require(kind != ModelKind::Ogwn || !o.graph.empty(), "graph: ogwn needs --graph");
  checks.done();

  auto m = manifest_for(c);
  m.inputs = {o.dataset};
  std::unique_ptr<Classifier> model;
  std::optional<TrainHistory> history;
  switch (kind) {
    case ModelKind::St5: model = std::make_unique<StClassifier>(5); break;
    case ModelKind::St15: model = std::make_unique<StClassifier>(15); break;
    case ModelKind::St25: model = std::make_unique<StClassifier>(25); break;
    case ModelKind::Knn: {
      auto knn = std::make_unique<KnnClassifier>(KnnConfig{o.knn_k});
      knn->fit(ds);
      model = std::move(knn);
      break;
    }
    case ModelKind::Ocnn: {
      auto ocnn = std::make_unique<OcnnClassifier>(oc, o.seed);
      history = ocnn->train(ds, tc);
      model = std::move(ocnn);
      break;
    }
    case ModelKind::Ogwn: {
      const Graph g = load_edge_list(o.graph);
      check_graph_matches(g, ds.provenance);
      auto ogwn = std::make_unique<OgwnClassifier>(og, o.seed);
      ogwn->attach_embedding(node_embedding(g, og.wavelet, o));
      history = ogwn->train(ds, tc);
      model = std::move(ogwn);
      m.inputs.push_back(o.graph);
      break;
    }
    case ModelKind::PretrainFinetune: break;
  }
  model->provenance.dataset = ds.provenance;
  save_model(*model, o.out);
  m.outputs = {o.out};
  c.out << "trained " << model->kind() << " on " << ds.indices(Split::Train).size() << " samples";
  if (history) {
    const std::string hp = sibling(o.out, ".history.csv");
    write_history(hp, *history);
    m.outputs.push_back(hp);
    m.extra["best_epoch"] = history->best_epoch;
    c.out << ", " << history->train_loss.size() << " epochs, best " << history->best_epoch;
  }
  c.out << '\n';
  finish(c, m);
  return kExitOk;
}

/// Loads a checkpoint; graph-based models get embeddings for `graph_path`.
std::unique_ptr<Classifier> load_for_dataset(const Context& c, const std::string& path, const Dataset& ds,
                                             std::vector<std::string>& inputs) {
  auto model = load_model(path);
  inputs.push_back(path);
  if (auto* og = dynamic_cast<OgwnClassifier*>(model.get())) {
    if (c.o.graph.empty()) throw InvalidArgument("graph: " + model->kind() + " needs --graph");
    const Graph g = load_edge_list(c.o.graph);
    check_graph_matches(g, ds.provenance);
    og->attach_embedding(node_embedding(g, og->config().wavelet, c.o));
    inputs.push_back(c.o.graph);
  }
  return model;
}

int cmd_evaluate(Context& c) {
  const auto& o = c.o;
  const Split split = parse_split(o.eval_split);
  const Dataset ds = load_dataset(o.dataset);
  auto m = manifest_for(c);
  m.inputs = {o.dataset};
  const auto model = load_for_dataset(c, o.model, ds, m.inputs);
  const auto report = evaluate(*model, ds, model->kind(), split);
  write_file(o.out, [&](std::ostream& out) { write_metrics_csv(std::span(&report, 1), out); });
  const std::string roc_path = o.roc.empty() ? sibling(o.out, ".roc.json") : o.roc;
  write_file(roc_path, [&](std::ostream& out) { write_roc_json(std::span(&report, 1), out); });
  m.outputs = {o.out, roc_path};
  char b1[32], b2[32];
  c.out << report.model << " on " << report.n_test << " " << split_name(split) << " samples: accuracy "
        << fmt_opt(report.metrics.accuracy, b1, sizeof b1) << ", AUC " << fmt_opt(report.auc, b2, sizeof b2)
        << '\n';
  finish(c, m);
  return kExitOk;
}

FinetuneConfig finetune_config(const Options& o, std::size_t epochs) {
  FinetuneConfig fc;
  fc.epochs = epochs;
  fc.lr_multiplier = o.lr_multiplier;
  fc.batch_size = o.batch_size;
  fc.patience = o.patience;
  fc.seed = o.seed;
  return fc;
}

std::shared_ptr<OgwnClassifier> load_pretrained(const std::string& path) {
  auto model = load_model(path);
  auto* og = dynamic_cast<OgwnClassifier*>(model.get());
  if (!og) throw InvalidArgument("model: " + path + " holds a " + model->kind() + " model, not a pretrained ogwn");
  return std::make_shared<OgwnClassifier>(std::move(*og));
}

int cmd_sweep(Context& c) {
  const auto& o = c.o;
  SweepConfig cfg;
  Checks checks;
  checks.field("models", [&] {
    for (const auto& w : words(o.models)) cfg.models.push_back(parse_model_kind(w));
  });
  checks.field("t-o", [&] { cfg.t_os = sizes(o.t_os, "t-o"); });
  checks.field("split", [&] { cfg.split = split_ratios(o); });
  checks.field("ogwn", [&] { cfg.ogwn = ogwn_config(c); });
  checks.field("ocnn", [&] { cfg.ocnn = ocnn_config(o); });
  checks.done();
  cfg.split_seed = split_seed(c);
  cfg.knn = KnnConfig{o.knn_k};
  cfg.train = train_config(o);
  cfg.finetune = finetune_config(o, o.finetune_epochs);
  cfg.pretrain_lr = o.lr;

  auto m = manifest_for(c);
  m.seeds["split_seed"] = cfg.split_seed;
  m.inputs = {o.graph, o.trajectories};
  const bool wants_pf =
      std::find(cfg.models.begin(), cfg.models.end(), ModelKind::PretrainFinetune) != cfg.models.end();
  if (wants_pf) {
    if (o.pretrained.empty()) throw InvalidArgument("pretrained: pretrain-finetune needs --pretrained");
    auto pre = load_pretrained(o.pretrained);
    cfg.ogwn.wavelet = pre->config().wavelet;
    if (pre->provenance.learning_rate > 0.0) cfg.pretrain_lr = pre->provenance.learning_rate;
    cfg.pretrained = pre;
    m.inputs.push_back(o.pretrained);
  }
  cfg.validate();

  const Graph g = load_edge_list(o.graph);
  const BatchResult batch = load_batch(o.trajectories, g.num_nodes());
  const double phi = resolve_phi(c, batch);
  std::shared_ptr<const EmbeddingMatrix> emb;
  if (wants_pf || std::find(cfg.models.begin(), cfg.models.end(), ModelKind::Ogwn) != cfg.models.end())
    emb = node_embedding(g, cfg.ogwn.wavelet, o);
  const auto reports = sweep_observation_times(batch, emb, phi, cfg, graph_provenance(g, o.graph));

  write_file(o.out, [&](std::ostream& out) { write_metrics_csv(reports, out); });
  const std::string roc_path = o.roc.empty() ? sibling(o.out, ".roc.json") : o.roc;
  write_file(roc_path, [&](std::ostream& out) { write_roc_json(reports, out); });
  m.outputs = {o.out, roc_path};
  m.extra["phi_star"] = phi;
  std::size_t failed = 0;
  for (const auto& r : reports) {
    char b[32];
    if (r.failed) {
      ++failed;
      c.err << "warning: " << r.model << " at t_o=" << r.t_o << " failed: " << r.error << '\n';
      continue;
    }
    c.out << r.model << " t_o=" << r.t_o << " AUC " << fmt_opt(r.auc, b, sizeof b) << '\n';
  }
  m.extra["failed_cells"] = failed;
  finish(c, m);
  return kExitOk;
}

int cmd_pretrain(Context& c) {
  const auto& o = c.o;
  PretrainConfig pc;
  Checks checks;
  checks.field("networks", [&] {
    for (const auto& w : words(o.networks)) pc.networks.push_back(parse_network(w));
  });
  checks.field("betas", [&] { pc.betas = doubles(o.betas, "betas"); });
  checks.field("split", [&] { pc.split = split_ratios(o); });
  checks.field("ogwn", [&] { pc.model = ogwn_config(c); });
  checks.done();
  pc.mu = o.mu;
  pc.runs_per_cell = o.runs_per_cell;
  pc.t_o = o.t_o;
  pc.sim = sim_config(c);
  if (c.given("--phi-star")) {
    pc.labeling = LabelingConfig{o.phi_star, false};
  } else {
    pc.labeling.auto_phi = true;
    pc.labeling.bin_width = o.bin_width;
    pc.labeling.smooth_window = o.smooth_window;
  }
  pc.split_seed = split_seed(c);
  pc.train = train_config(o);
  pc.workers = o.workers;
  pc.embedding_cache_dir = o.embedding_cache;
  pc.validate();

  const auto res = pretrain(pc, o.seed);
  save_model(res.model, o.out);
  const std::string cells_path = sibling(o.out, ".cells.csv");
  write_file(cells_path, [&](std::ostream& out) {
    out << "# format: takeoff-pretrain-cells/1\nnetwork,fingerprint,beta,phi_star,samples,positive_fraction,skipped\n";
    char buf[160];
    for (const auto& cell : res.cells) {
      out << cell.network << ',' << cell.fingerprint << ',';
      std::snprintf(buf, sizeof buf, "%.10g,", cell.beta);
      out << buf;
      if (cell.phi_star) {
        std::snprintf(buf, sizeof buf, "%.10g,%zu,%.10g,", *cell.phi_star, cell.samples, cell.positive_fraction);
        out << buf << '\n';
      } else {
        out << "undefined,0,undefined," << cell.skipped_reason << '\n';
      }
    }
  });
  const std::string hp = sibling(o.out, ".history.csv");
  write_history(hp, res.history);
  auto m = manifest_for(c);
  m.seeds["split_seed"] = pc.split_seed;
  for (const auto& n : pc.networks)
    if (n.kind == NetworkKind::File) m.inputs.push_back(n.path);
  m.outputs = {o.out, cells_path, hp};
  m.extra["pooled_samples"] = res.pooled_samples;
  m.extra["pooled_positive_fraction"] = res.pooled_positive_fraction;
  c.out << "pretrained on " << res.pooled_samples << " samples from " << res.cells.size() << " cells, positive fraction "
        << res.pooled_positive_fraction << ", best epoch " << res.history.best_epoch << '\n';
  finish(c, m);
  return kExitOk;
}

int cmd_finetune(Context& c) {
  const auto& o = c.o;
  const Dataset ds = load_dataset(o.dataset);
  const auto pre = load_pretrained(o.model);
  const Graph g = load_edge_list(o.graph);
  check_graph_matches(g, ds.provenance);
  const FinetuneConfig fc = finetune_config(o, o.finetune_epochs);
  Checks checks;
  checks.field("finetune", [&] { fc.validate(); });
  checks.done();
  const double pretrain_lr = pre->provenance.learning_rate > 0.0 ? pre->provenance.learning_rate : o.lr;
  TrainHistory h;
  const auto tuned = finetune(*pre, ds, node_embedding(g, pre->config().wavelet, o), fc, pretrain_lr, &h);
  save_model(tuned, o.out);
  const std::string hp = sibling(o.out, ".history.csv");
  write_history(hp, h);
  auto m = manifest_for(c);
  m.inputs = {o.model, o.dataset, o.graph};
  m.outputs = {o.out, hp};
  c.out << "finetuned for " << h.train_loss.size() << " epochs at learning rate " << tuned.provenance.learning_rate
        << '\n';
  finish(c, m);
  return kExitOk;
}

int cmd_plot(Context& c) {
  auto data = read_plot_input(c.o.input, c.o.metric);
  if (!c.o.title.empty()) data.title = c.o.title;
  const auto svg = render_svg(data);
  write_file(c.o.out, [&](std::ostream& out) { out << svg; });
  auto m = manifest_for(c);
  m.inputs = {c.o.input};
  m.outputs = {c.o.out};
  finish(c, m);
  return kExitOk;
}

int cmd_embed(Context& c) {
  const auto& o = c.o;
  const WaveletConfig w = wavelet_config(c);
  Checks checks;
  checks.field("wavelet", [&] { w.validate(); });
  checks.done();
  const Graph g = load_edge_list(o.graph);
  const auto emb = node_embedding(g, w, o);
  write_file(o.out, [&](std::ostream& out) { write_embedding_csv(*emb, out); });
  auto m = manifest_for(c);
  m.inputs = {o.graph};
  m.outputs = {o.out};
  m.extra["scale"] = w.scale ? *w.scale : default_scale(g);
  finish(c, m);
  return kExitOk;
}

// ---------------------------------------------------------------- option groups

void add_common(CLI::App* s, Options& o, bool out_required = true) {
  s->add_option("--config", o.config, "TOML-style file of flag = value lines");
  s->add_option("--seed", o.seed, "master seed");
  auto* out = s->add_option("--out", o.out, "primary output file");
  if (out_required) out->required();
}

void add_workers(CLI::App* s, Options& o) {
  s->add_option("--workers", o.workers, "worker threads (0 = all cores); never changes results");
}

void add_sim(CLI::App* s, Options& o) {
  s->add_option("--max-steps", o.max_steps, "step cap per run");
  s->add_option("--initial-infected", o.initial_infected, "seed nodes per run");
}

void add_labels(CLI::App* s, Options& o) {
  s->add_option("--phi-star", o.phi_star, "take-off threshold on the final size");
  s->add_flag("--auto-phi", o.auto_phi, "threshold at the final-size histogram valley");
  s->add_option("--bin-width", o.bin_width, "histogram bin width (0 = N/100)");
  s->add_option("--smooth-window", o.smooth_window, "moving-average window for the valley search");
  s->add_option("--split", o.split, "train,validation,test fractions");
  s->add_option("--split-seed", o.split_seed, "split seed (default: --seed)");
}

void add_wavelet(CLI::App* s, Options& o) {
  s->add_option("--scale", o.scale, "heat-kernel scale (default from the spectral gap)");
  s->add_option("--cheb-order", o.cheb_order, "Chebyshev expansion order");
  s->add_option("--sample-points", o.sample_points, "characteristic-function sample points");
  s->add_option("--t-max", o.t_max, "largest sample point");
  s->add_option("--embedding-cache", o.embedding_cache, "directory for cached embeddings");
}

void add_models(CLI::App* s, Options& o) {
  add_wavelet(s, o);
  s->add_option("--knn-k", o.knn_k, "neighbours for knn");
  s->add_option("--hidden", o.hidden, "ogwn GRU width per direction");
  s->add_option("--mlp-hidden", o.mlp_hidden, "ogwn head layer widths");
  s->add_option("--ocnn-vocab", o.ocnn_vocab, "ocnn token vocabulary");
  s->add_option("--ocnn-embed", o.ocnn_embed, "ocnn token embedding width");
  s->add_option("--ocnn-filters", o.ocnn_filters, "ocnn filters per window");
  s->add_option("--ocnn-windows", o.ocnn_windows, "ocnn window widths");
  s->add_option("--ocnn-head", o.ocnn_head, "ocnn head layer widths");
}

void add_training(CLI::App* s, Options& o, bool epochs = true) {
  if (epochs) s->add_option("--epochs", o.epochs, "maximum training epochs");
  s->add_option("--batch-size", o.batch_size, "minibatch size");
  s->add_option("--lr", o.lr, "Adam learning rate");
  s->add_option("--patience", o.patience, "early-stopping patience in epochs");
  s->add_option("--clip", o.clip, "gradient clip norm (0 = off)");
}

}  // namespace

int run(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
  const auto start = Clock::now();
  Options o;
  CLI::App app{"Predict stochastic take-off or die-out of early SIR outbreaks on networks.", "takeoff"};
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  std::map<std::string, std::function<int(Context&)>> handlers;

  auto* gen = app.add_subcommand("generate", "write a synthetic network as an edge list");
  add_common(gen, o, false);
  auto* fer = gen->add_flag("--er", o.er, "Erdos-Renyi");
  auto* fba = gen->add_flag("--ba", o.ba, "Barabasi-Albert");
  auto* fws = gen->add_flag("--ws", o.ws, "Watts-Strogatz");
  fer->excludes(fba, fws);
  fba->excludes(fws);
  gen->add_option("--n", o.n, "nodes")->required();
  gen->add_option("--k", o.k, "mean degree (ER) or lattice degree (WS)");
  gen->add_option("--m", o.m, "edges per new node (BA)");
  gen->add_option("--p", o.p, "rewiring probability (WS)");
  handlers["generate"] = cmd_generate;

  auto* sim = app.add_subcommand("simulate", "run a batch of stochastic SIR outbreaks");
  add_common(sim, o);
  add_workers(sim, o);
  add_sim(sim, o);
  sim->add_option("--graph", o.graph, "edge-list file")->required();
  sim->add_option("--beta", o.beta, "per-step transmission probability")->required();
  sim->add_option("--mu", o.mu, "per-step recovery probability");
  sim->add_option("--runs", o.runs, "number of runs");
  sim->add_option("--record-horizon", o.record_horizon, "store per-step data up to this step only");
  sim->add_option("--histogram", o.histogram, "histogram CSV (default: beside --out)");
  sim->add_option("--bin-width", o.bin_width, "histogram bin width (0 = N/100)");
  sim->add_option("--smooth-window", o.smooth_window, "moving-average window for the valley search");
  handlers["simulate"] = cmd_simulate;

  auto* bds = app.add_subcommand("build-dataset", "label and split simulated runs at one observation time");
  add_common(bds, o);
  bds->add_option("--graph", o.graph, "edge-list file the runs were simulated on")->required();
  bds->add_option("--trajectories", o.trajectories, "trajectory JSONL from simulate")->required();
  bds->add_option("--t-o", o.t_o, "observation time")->required();
  add_labels(bds, o);
  handlers["build-dataset"] = cmd_build_dataset;

  auto* tr = app.add_subcommand("train", "train one model on a dataset");
  add_common(tr, o);
  add_workers(tr, o);
  tr->add_option("--dataset", o.dataset, "dataset file")->required();
  tr->add_option("--model", o.model, "st5|st15|st25|knn|ocnn|ogwn")->required();
  tr->add_option("--graph", o.graph, "edge-list file (ogwn)");
  add_models(tr, o);
  add_training(tr, o);
  handlers["train"] = cmd_train;

  auto* ev = app.add_subcommand("evaluate", "score a saved model on a dataset split");
  add_common(ev, o);
  add_workers(ev, o);
  ev->add_option("--model", o.model, "checkpoint file")->required();
  ev->add_option("--dataset", o.dataset, "dataset file")->required();
  ev->add_option("--graph", o.graph, "edge-list file (ogwn, pretrain-finetune)");
  ev->add_option("--split", o.eval_split, "train|validation|test");
  ev->add_option("--roc", o.roc, "ROC JSON (default: beside --out)");
  ev->add_option("--embedding-cache", o.embedding_cache, "directory for cached embeddings");
  handlers["evaluate"] = cmd_evaluate;

  auto* sw = app.add_subcommand("sweep", "train and score every model at several observation times");
  add_common(sw, o);
  add_workers(sw, o);
  sw->add_option("--graph", o.graph, "edge-list file")->required();
  sw->add_option("--trajectories", o.trajectories, "trajectory JSONL from simulate")->required();
  sw->add_option("--models", o.models, "comma-separated model names");
  sw->add_option("--t-o", o.t_os, "comma-separated observation times")->required();
  sw->add_option("--pretrained", o.pretrained, "pretrained checkpoint for pretrain-finetune");
  sw->add_option("--finetune-epochs", o.finetune_epochs, "finetuning epochs");
  sw->add_option("--lr-multiplier", o.lr_multiplier, "finetuning learning-rate factor");
  sw->add_option("--roc", o.roc, "ROC JSON (default: beside --out)");
  add_labels(sw, o);
  add_models(sw, o);
  add_training(sw, o);
  handlers["sweep"] = cmd_sweep;

  auto* pt = app.add_subcommand("pretrain", "train ogwn on pooled simulations over networks and betas");
  add_common(pt, o);
  add_workers(pt, o);
  add_sim(pt, o);
  pt->add_option("--networks", o.networks, "er:N:K:SEED, ba:N:M:SEED, ws:N:K:P:SEED or file:PATH, comma-separated")
      ->required();
  pt->add_option("--betas", o.betas, "comma-separated transmission probabilities")->required();
  pt->add_option("--mu", o.mu, "per-step recovery probability");
  pt->add_option("--runs-per-cell", o.runs_per_cell, "runs per network and beta");
  pt->add_option("--t-o", o.t_o, "observation time")->required();
  add_labels(pt, o);
  add_models(pt, o);
  add_training(pt, o);
  handlers["pretrain"] = cmd_pretrain;

  auto* ft = app.add_subcommand("finetune", "adapt a pretrained model to a dataset from an unseen network");
  add_common(ft, o);
  add_workers(ft, o);
  ft->add_option("--model", o.model, "pretrained checkpoint")->required();
  ft->add_option("--dataset", o.dataset, "target dataset")->required();
  ft->add_option("--graph", o.graph, "target edge-list file")->required();
  ft->add_option("--epochs", o.finetune_epochs, "finetuning epochs");
  ft->add_option("--lr-multiplier", o.lr_multiplier, "factor on the pretraining learning rate");
  ft->add_option("--lr", o.lr, "pretraining learning rate when the checkpoint lacks one");
  ft->add_option("--batch-size", o.batch_size, "minibatch size");
  ft->add_option("--patience", o.patience, "early-stopping patience in epochs");
  ft->add_option("--embedding-cache", o.embedding_cache, "directory for cached embeddings");
  handlers["finetune"] = cmd_finetune;

  auto* pl = app.add_subcommand("plot", "render a metrics, histogram, ROC or x,y file as SVG");
  add_common(pl, o);
  pl->add_option("--input", o.input, "input file")->required();
  pl->add_option("--metric", o.metric, "metrics column to plot against t_o");
  pl->add_option("--title", o.title, "chart title");
  handlers["plot"] = cmd_plot;

  auto* em = app.add_subcommand("embed", "write GraphWave node embeddings");
  add_common(em, o);
  add_workers(em, o);
  em->add_option("--graph", o.graph, "edge-list file")->required();
  add_wavelet(em, o);
  handlers["embed"] = cmd_embed;

  std::vector<std::string> names;
  for (const auto& [name, _] : handlers) names.push_back(name);

  try {
    auto args = expand_config(args_in, names);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  Context ctx{o, sub, out, err, start};
  try {
    return handlers.at(sub->get_name())(ctx);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n" << sub->help();
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ProvenanceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const UnimodalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace takeoff::cli
