#include "takeoff/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "json.hpp"
#include "takeoff/error.hpp"

namespace takeoff {

namespace {

void check_lengths(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw InvalidArgument("labels and scores differ in length");
}

// 1-based midranks in input order.
std::vector<double> midranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t q = i; q <= j; ++q) rank[order[q]] = r;
    i = j + 1;
  }
  return rank;
}

std::string fmt(std::optional<double> v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", *v);
  return buf;
}

}  // namespace

ConfusionCounts confusion(std::span<const int> labels, std::span<const double> scores, double cutoff) {
  check_lengths(labels, scores);
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = scores[i] >= cutoff;
    if (labels[i] == 1) (pred ? c.tp : c.fn)++;
    else (pred ? c.fp : c.tn)++;
  }
  return c;
}

Metrics metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw InvalidArgument("metrics of an empty confusion table");
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  Metrics m;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fn + c.fp);
  return m;
}

std::optional<double> auc(std::span<const int> labels, std::span<const double> scores) {
  check_lengths(labels, scores);
  const auto rank = midranks(scores);
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  const double neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

std::vector<RocPoint> roc_curve(std::span<const int> labels, std::span<const double> scores) {
  check_lengths(labels, scores);
  std::size_t pos = 0;
  for (int y : labels) pos += y == 1 ? 1 : 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw InvalidArgument("ROC curve needs both classes");
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> curve{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double cut = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == cut; ++i) (labels[order[i]] == 1 ? tp : fp)++;
    curve.push_back({static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos), cut});
  }
  return curve;
}

std::optional<double> spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman: series differ in length");
  if (x.size() < 2) return std::nullopt;
  const auto rx = midranks(x), ry = midranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

EvalReport evaluate(const Classifier& model, const Dataset& ds, const std::string& name, Split split) {
  EvalReport r;
  r.model = name;
  r.t_o = ds.provenance.t_o;
  const auto idx = ds.indices(split);
  r.n_test = idx.size();
  if (idx.empty()) throw InvalidArgument(std::string("the ") + split_name(split) + " split is empty");
  const auto scores = model.predict(ds, idx);
  for (double s : scores)
    if (!(s >= 0.0 && s <= 1.0)) throw NumericalError(name + " produced a score outside [0, 1]");
  std::vector<int> labels;
  for (auto i : idx) labels.push_back(ds.samples[i].label);
  r.metrics = metrics(confusion(labels, scores));
  r.auc = auc(labels, scores);
  if (r.auc) r.roc = roc_curve(labels, scores);
  return r;
}

void SweepConfig::validate() const {
  if (models.empty()) throw InvalidArgument("sweep: no models");
  if (t_os.empty()) throw InvalidArgument("sweep: no observation times");
  split.validate();
  knn.validate();
  ocnn.validate();
  ogwn.validate();
  train.validate();
  finetune.validate();
}

std::vector<EvalReport> sweep_observation_times(const BatchResult& batch, std::shared_ptr<const EmbeddingMatrix> emb,
                                                double phi_star, const SweepConfig& config, const Provenance& base) {
  config.validate();
  std::vector<EvalReport> out;
  for (std::size_t t_o : config.t_os) {
    Dataset ds;
    std::string ds_error;
    try {
      ds = build_dataset(batch, t_o, phi_star, config.split, config.split_seed, base);
    } catch (const std::exception& e) {
      ds_error = e.what();
    }
    for (ModelKind kind : config.models) {
      const std::string name(model_name(kind));
      EvalReport r;
      try {
        if (!ds_error.empty()) throw InvalidArgument(ds_error);
        std::unique_ptr<Classifier> model;
        switch (kind) {
          case ModelKind::St5: model = std::make_unique<StClassifier>(5); break;
          case ModelKind::St15: model = std::make_unique<StClassifier>(15); break;
          case ModelKind::St25: model = std::make_unique<StClassifier>(25); break;
          case ModelKind::Knn: {
            auto knn = std::make_unique<KnnClassifier>(config.knn);
            knn->fit(ds);
            model = std::move(knn);
            break;
          }
          case ModelKind::Ocnn: {
            auto ocnn = std::make_unique<OcnnClassifier>(config.ocnn, config.train.seed);
            ocnn->train(ds, config.train);
            model = std::move(ocnn);
            break;
          }
          case ModelKind::Ogwn: {
            if (!emb) throw InvalidArgument("ogwn needs node embeddings");
            auto ogwn = std::make_unique<OgwnClassifier>(config.ogwn, config.train.seed);
            ogwn->attach_embedding(emb);
            ogwn->train(ds, config.train);
            model = std::move(ogwn);
            break;
          }
          case ModelKind::PretrainFinetune: {
            if (!config.pretrained) throw InvalidArgument("pretrain-finetune needs a pretrained model");
            if (!emb) throw InvalidArgument("pretrain-finetune needs node embeddings");
            model = std::make_unique<OgwnClassifier>(
                finetune(*config.pretrained, ds, emb, config.finetune, config.pretrain_lr));
            break;
          }
        }
        r = evaluate(*model, ds, name);
      } catch (const std::exception& e) {
        r = EvalReport{};
        r.model = name;
        r.t_o = t_o;
        r.failed = true;
        r.error = e.what();
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

void write_metrics_csv(std::span<const EvalReport> reports, std::ostream& out) {
  out << "# format: takeoff-metrics/1\n";
  out << "model,t_o,accuracy,precision,recall,f1,auc,n_test\n";
  for (const auto& r : reports) {
    out << r.model << ',' << r.t_o << ',';
    if (r.failed) {
      out << "failed,failed,failed,failed,failed," << r.n_test << '\n';
      continue;
    }
    out << fmt(r.metrics.accuracy) << ',' << fmt(r.metrics.precision) << ',' << fmt(r.metrics.recall) << ','
        << fmt(r.metrics.f1) << ',' << fmt(r.auc) << ',' << r.n_test << '\n';
  }
}

void write_roc_json(std::span<const EvalReport> reports, std::ostream& out) {
  nlohmann::ordered_json j;
  j["format"] = "takeoff-roc";
  j["version"] = 1;
  auto& curves = j["curves"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json c;
    c["model"] = r.model;
    c["t_o"] = r.t_o;
    c["auc"] = r.auc ? nlohmann::ordered_json(*r.auc) : nlohmann::ordered_json(nullptr);
    auto& pts = c["points"] = nlohmann::ordered_json::array();
    for (const auto& p : r.roc) pts.push_back({p.fpr, p.tpr});
    if (r.failed) c["error"] = r.error;
    curves.push_back(std::move(c));
  }
  out << j.dump(1) << '\n';
}

}  // namespace takeoff
