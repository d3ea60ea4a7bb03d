#pragma once

// Classification metrics, ROC curves and observation-time sweeps.

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "takeoff/dataset.hpp"
#include "takeoff/models.hpp"

namespace takeoff {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// A sample is predicted positive when its score is >= cutoff.
ConfusionCounts confusion(std::span<const int> labels, std::span<const double> scores, double cutoff = 0.5);

/// Undefined ratios (zero denominators) are nullopt, never 0.
struct Metrics {
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

/// Throws InvalidArgument for empty counts.
Metrics metrics(const ConfusionCounts& c);

/// Mann-Whitney rank statistic with midranks; nullopt unless both classes occur.
std::optional<double> auc(std::span<const int> labels, std::span<const double> scores);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double cutoff = 0.0;  // +inf for the (0, 0) end point
};

/// One point per distinct score (descending cutoffs) between (0, 0) and (1, 1).
/// Throws InvalidArgument when a class is missing.
std::vector<RocPoint> roc_curve(std::span<const int> labels, std::span<const double> scores);

/// Rank correlation with midranks; nullopt when either series is constant.
std::optional<double> spearman_rho(std::span<const double> x, std::span<const double> y);

struct EvalReport {
  std::string model;
  std::size_t t_o = 0;
  Metrics metrics;
  std::optional<double> auc;
  std::size_t n_test = 0;
  std::vector<RocPoint> roc;  // empty when undefined
  bool failed = false;
  std::string error;
};

/// Scores the given split of a dataset.
EvalReport evaluate(const Classifier& model, const Dataset& ds, const std::string& name, Split split = Split::Test);

struct SweepConfig {
  std::vector<ModelKind> models;
  std::vector<std::size_t> t_os;
  SplitRatios split;
  std::uint64_t split_seed = 1;
  KnnConfig knn;
  OcnnConfig ocnn;
  OgwnConfig ogwn;
  TrainConfig train;
  /// Required for pretrain-finetune cells.
  std::shared_ptr<const OgwnClassifier> pretrained;
  double pretrain_lr = 1e-3;
  FinetuneConfig finetune;

  void validate() const;
};

/// Builds one dataset per t_o from the same batch, trains every model on it
/// and scores the test split. A cell that throws is reported as failed.
std::vector<EvalReport> sweep_observation_times(const BatchResult& batch, std::shared_ptr<const EmbeddingMatrix> emb,
                                                double phi_star, const SweepConfig& config,
                                                const Provenance& base = {});

/// `model,t_o,accuracy,precision,recall,f1,auc,n_test` behind a format header.
void write_metrics_csv(std::span<const EvalReport> reports, std::ostream& out);
/// {"format": "takeoff-roc", "curves": [{model, t_o, auc, points: [[fpr, tpr], ...]}]}
void write_roc_json(std::span<const EvalReport> reports, std::ostream& out);

}  // namespace takeoff
