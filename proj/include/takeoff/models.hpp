#pragma once

// Outbreak predictors behind one contract: a trained model maps an observed
// window to a take-off probability in [0, 1].

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "takeoff/dataset.hpp"
#include "takeoff/graphwave.hpp"
#include "takeoff/nn.hpp"

namespace takeoff {

enum class ModelKind { St5, St15, St25, Knn, Ocnn, Ogwn, PretrainFinetune };

std::string_view model_name(ModelKind k) noexcept;
/// Accepts st5|st15|st25|knn|ocnn|ogwn|pretrain-finetune.
ModelKind parse_model_kind(std::string_view name);

/// Where a trained model's data came from.
struct ModelProvenance {
  Provenance dataset;
  std::vector<std::string> pretrain_networks;
  std::vector<std::string> pretrain_fingerprints;
  double learning_rate = 0.0;  // of the last training run
};

class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string kind() const = 0;
  virtual double predict_proba(const ObservedSequence& obs) const = 0;
  virtual std::vector<double> predict_batch(std::span<const ObservedSequence* const> batch) const;
  virtual nn::Checkpoint checkpoint() const = 0;

  /// Scores for the given sample positions of a dataset.
  std::vector<double> predict(const Dataset& ds, std::span<const std::size_t> positions) const;

  ModelProvenance provenance;
};

// ---------------------------------------------------------------- training loop

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t patience = 10;  // epochs without validation improvement
  double clip_norm = 5.0;     // 0 disables clipping
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<std::optional<double>> val_auc;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
  bool stopped_early = false;
};

// ---------------------------------------------------------------- surveillance threshold

/// Predicts take-off once the cumulative case count reaches the threshold.
class StClassifier final : public Classifier {
 public:
  explicit StClassifier(std::uint32_t threshold);

  std::string kind() const override;
  double predict_proba(const ObservedSequence& obs) const override;
  nn::Checkpoint checkpoint() const override;
  std::uint32_t threshold() const noexcept { return threshold_; }

 private:
  std::uint32_t threshold_;
};

// ---------------------------------------------------------------- k nearest neighbours

struct KnnConfig {
  std::size_t k = 5;
  void validate() const;
};

/// Cumulative counts for steps 0..t_o; shorter sequences repeat their last value.
std::vector<double> knn_features(const ObservedSequence& obs, std::size_t t_o);

class KnnClassifier final : public Classifier {
 public:
  explicit KnnClassifier(KnnConfig config = {});

  /// Stores the training split. Throws InvalidArgument when k exceeds it.
  void fit(const Dataset& ds);
  void fit(std::vector<std::vector<double>> features, std::vector<int> labels, std::vector<std::uint64_t> ids,
           std::size_t t_o);

  /// Training rows of the k nearest neighbours, nearest first; ties go to the lower sample id.
  std::vector<std::size_t> neighbors(std::span<const double> query) const;

  std::string kind() const override;
  double predict_proba(const ObservedSequence& obs) const override;
  nn::Checkpoint checkpoint() const override;
  static KnnClassifier from_checkpoint(const nn::Checkpoint& ck);

  const KnnConfig& config() const noexcept { return config_; }
  std::size_t t_o() const noexcept { return t_o_; }

 private:
  KnnConfig config_;
  std::size_t t_o_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> features_;  // row-major, one row per training sample
  std::vector<int> labels_;
  std::vector<std::uint64_t> ids_;
};

// ---------------------------------------------------------------- OCNN

struct OcnnConfig {
  nn::Conv1dSpec conv;
  std::vector<std::size_t> head_hidden{64};

  void validate() const;
};

/// Log-banded count token: 0, 1, 2, then 1 + floor(log2(count + 1)), capped at vocab - 1.
std::uint32_t count_token(std::uint32_t count, std::size_t vocab_size) noexcept;
/// Tokens of the new-infection counts at steps 1..t_o.
std::vector<std::uint32_t> ocnn_tokens(const ObservedSequence& obs, std::size_t vocab_size);

class OcnnClassifier final : public Classifier {
 public:
  explicit OcnnClassifier(OcnnConfig config = {}, std::uint64_t init_seed = 1);

  TrainHistory train(const Dataset& ds, const TrainConfig& tc);

  std::string kind() const override;
  double predict_proba(const ObservedSequence& obs) const override;
  nn::Checkpoint checkpoint() const override;
  static OcnnClassifier from_checkpoint(const nn::Checkpoint& ck);

  nn::ParamRefs parameters();
  const OcnnConfig& config() const noexcept { return config_; }

 private:
  OcnnConfig config_;
  nn::Conv1dMaxPool conv_;
  nn::Mlp head_;
};

// ---------------------------------------------------------------- OGWN

struct OgwnConfig {
  WaveletConfig wavelet;
  std::size_t hidden = 64;  // per direction
  std::vector<std::size_t> mlp_hidden{128, 64};

  void validate() const;
  std::size_t feature_width() const noexcept { return 1 + wavelet.embedding_dim(); }
};

/// Per-step features for steps 0..t_o, row-major (t_o + 1) x (1 + dim):
/// log1p(#new infections) followed by the mean embedding of those nodes
/// (zeros when there are none). Step 0 uses the seed nodes.
std::vector<double> ogwn_features(const EmbeddingMatrix& emb, const ObservedSequence& obs);

/// A feature sequence paired with its label, independent of any graph.
struct OgwnSample {
  std::vector<double> features;  // steps x width, not normalised
  int label = 0;
};

/// Per-column z-scores fitted on training features.
struct FeatureNormalizer {
  std::vector<double> mean;
  std::vector<double> inv_std;

  static FeatureNormalizer fit(std::span<const OgwnSample> samples, std::size_t width);
  void apply(std::span<double> seq) const;
};

class OgwnClassifier final : public Classifier {
 public:
  explicit OgwnClassifier(OgwnConfig config = {}, std::uint64_t init_seed = 1);

  /// Embeddings used by predict_proba on observed sequences.
  void attach_embedding(std::shared_ptr<const EmbeddingMatrix> emb);

  /// Fits the normaliser on `train` and trains from the current weights.
  TrainHistory train(std::span<const OgwnSample> train, std::span<const OgwnSample> validation,
                     const TrainConfig& tc);
  /// Continues training with the stored normaliser.
  TrainHistory continue_training(std::span<const OgwnSample> train, std::span<const OgwnSample> validation,
                                 const TrainConfig& tc);
  /// Train and validation splits of ds featurised with the attached embedding.
  TrainHistory train(const Dataset& ds, const TrainConfig& tc);

  std::string kind() const override;
  double predict_proba(const ObservedSequence& obs) const override;
  std::vector<double> predict_batch(std::span<const ObservedSequence* const> batch) const override;
  std::vector<double> predict_features(std::span<const OgwnSample> samples) const;
  /// Mean BCE over the samples; parameter gradients are accumulated.
  double loss_and_gradient(std::span<const OgwnSample* const> samples);
  nn::Checkpoint checkpoint() const override;
  static OgwnClassifier from_checkpoint(const nn::Checkpoint& ck);

  nn::ParamRefs parameters();
  const OgwnConfig& config() const noexcept { return config_; }
  const FeatureNormalizer& normalizer() const noexcept { return normalizer_; }
  const std::shared_ptr<const EmbeddingMatrix>& embedding() const noexcept { return embedding_; }
  void set_kind(std::string k) { kind_ = std::move(k); }

 private:
  std::vector<double> batch_logits(std::span<const OgwnSample* const> batch, nn::BiGruTrace* gt,
                                   nn::MlpTrace* mt) const;

  OgwnConfig config_;
  nn::BiGru gru_;
  nn::Mlp head_;
  FeatureNormalizer normalizer_;
  std::shared_ptr<const EmbeddingMatrix> embedding_;
  std::string kind_ = "ogwn";
};

/// Featurises the given positions of a dataset.
std::vector<OgwnSample> ogwn_samples(const EmbeddingMatrix& emb, const Dataset& ds,
                                     std::span<const std::size_t> positions);

// ---------------------------------------------------------------- pretrain / finetune

struct PretrainConfig {
  std::vector<NetworkSpec> networks;
  std::vector<double> betas;
  double mu = 0.1;
  std::size_t runs_per_cell = 2000;
  std::size_t t_o = 10;
  SimConfig sim;
  LabelingConfig labeling{std::nullopt, true};
  SplitRatios split;
  std::uint64_t split_seed = 1;
  OgwnConfig model;
  TrainConfig train;
  std::size_t workers = 1;
  std::string embedding_cache_dir;  // empty: no cache

  void validate() const;
};

struct PretrainCell {
  std::string network;
  std::string fingerprint;
  double beta = 0.0;
  std::optional<double> phi_star;  // nullopt when skipped
  std::size_t samples = 0;
  double positive_fraction = 0.0;
  std::string skipped_reason;
};

struct PretrainResult {
  OgwnClassifier model;
  std::vector<PretrainCell> cells;
  TrainHistory history;
  std::size_t pooled_samples = 0;
  double pooled_positive_fraction = 0.0;
};

/// Supervised training on the pooled scenario grid. Unimodal cells are skipped
/// (reported in `cells`); throws UnimodalError when every cell is skipped.
PretrainResult pretrain(const PretrainConfig& config, std::uint64_t nn_seed);

struct FinetuneConfig {
  std::size_t epochs = 10;
  double lr_multiplier = 0.1;
  std::size_t batch_size = 32;
  std::size_t patience = 10;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Continues training a pretrained model on a target dataset from a network
/// it has not seen. Throws ProvenanceError when the target graph was part of
/// pretraining.
OgwnClassifier finetune(const OgwnClassifier& pretrained, const Dataset& target,
                        std::shared_ptr<const EmbeddingMatrix> target_embedding, const FinetuneConfig& fc,
                        double pretrain_lr, TrainHistory* history = nullptr);

// ---------------------------------------------------------------- persistence

void save_model(const Classifier& model, const std::string& path);
std::unique_ptr<Classifier> model_from_checkpoint(const nn::Checkpoint& ck);
std::unique_ptr<Classifier> load_model(const std::string& path);

}  // namespace takeoff
