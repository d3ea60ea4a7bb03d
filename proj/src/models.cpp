#include "takeoff/models.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "takeoff/error.hpp"
#include "takeoff/eval.hpp"
#include "takeoff/rng.hpp"

namespace takeoff {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566666C65ull;  // "shuffle"

ojson provenance_json(const ModelProvenance& p) {
  const auto& d = p.dataset;
  ojson j;
  j["network"] = d.network;
  j["graph"] = d.graph_fingerprint;
  j["n_nodes"] = d.n_nodes;
  j["beta"] = d.beta;
  j["mu"] = d.mu;
  j["phi_star"] = d.phi_star;
  j["master_seed"] = d.master_seed;
  j["split_seed"] = d.split_seed;
  j["t_o"] = d.t_o;
  j["pretrain_networks"] = p.pretrain_networks;
  j["pretrain_graphs"] = p.pretrain_fingerprints;
  j["learning_rate"] = p.learning_rate;
  return j;
}

ModelProvenance provenance_from_json(const ojson& j) {
  ModelProvenance p;
  auto& d = p.dataset;
  d.network = j.at("network").get<std::string>();
  d.graph_fingerprint = j.at("graph").get<std::string>();
  d.n_nodes = j.at("n_nodes").get<std::size_t>();
  d.beta = j.at("beta").get<double>();
  d.mu = j.at("mu").get<double>();
  d.phi_star = j.at("phi_star").get<double>();
  d.master_seed = j.at("master_seed").get<std::uint64_t>();
  d.split_seed = j.at("split_seed").get<std::uint64_t>();
  d.t_o = j.at("t_o").get<std::size_t>();
  p.pretrain_networks = j.at("pretrain_networks").get<std::vector<std::string>>();
  p.pretrain_fingerprints = j.at("pretrain_graphs").get<std::vector<std::string>>();
  p.learning_rate = j.at("learning_rate").get<double>();
  return p;
}

nn::Checkpoint make_checkpoint(const std::string& kind, const ModelProvenance& prov, ojson model,
                               const nn::ParamRefs& params) {
  ojson cfg;
  cfg["kind"] = kind;
  cfg["provenance"] = provenance_json(prov);
  cfg["model"] = std::move(model);
  return nn::Checkpoint::capture(std::move(cfg), params);
}

const ojson& model_block(const nn::Checkpoint& ck) {
  if (!ck.config.contains("model") || !ck.config.contains("provenance")) throw FormatError("checkpoint lacks a model block");
  return ck.config.at("model");
}

void shuffle(std::vector<std::size_t>& v, RandomStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

// Something the shared loop can train: gradients for a mini-batch of training
// rows and scores for the validation set.
class Trainable {
 public:
  virtual ~Trainable() = default;
  virtual nn::ParamRefs params() = 0;
  virtual double batch_gradient(std::span<const std::size_t> rows) = 0;
  virtual std::vector<double> validation_scores() = 0;
};

std::vector<std::vector<double>> snapshot(const nn::ParamRefs& params) {
  std::vector<std::vector<double>> s;
  for (auto* p : params) s.emplace_back(p->value.span().begin(), p->value.span().end());
  return s;
}

void restore(const nn::ParamRefs& params, const std::vector<std::vector<double>>& s) {
  for (std::size_t k = 0; k < params.size(); ++k) std::copy(s[k].begin(), s[k].end(), params[k]->value.data());
}

TrainHistory run_training(Trainable& net, std::size_t n_train, std::span<const int> val_labels,
                          const TrainConfig& tc) {
  tc.validate();
  TrainHistory hist;
  if (tc.epochs == 0) return hist;
  if (n_train == 0) throw InvalidArgument("training split is empty");
  const auto params = net.params();
  nn::Adam opt(params, nn::AdamConfig{tc.learning_rate});
  std::vector<double> val_y(val_labels.begin(), val_labels.end());
  auto best = snapshot(params);
  double best_metric = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    RandomStream rng(tc.seed, kShuffleStream + epoch);
    shuffle(order, rng);
    double total = 0.0;
    for (std::size_t start = 0; start < n_train; start += tc.batch_size) {
      const std::size_t len = std::min(tc.batch_size, n_train - start);
      nn::zero_grad(params);
      const double loss = net.batch_gradient(std::span(order).subspan(start, len));
      if (!std::isfinite(loss)) throw NumericalError("training diverged: non-finite loss");
      for (auto* p : params) p->grad.check_finite(p->name.c_str());
      nn::clip_grad_norm(params, tc.clip_norm);
      opt.step();
      total += loss * static_cast<double>(len);
    }
    hist.train_loss.push_back(total / static_cast<double>(n_train));
    if (val_y.empty()) {
      hist.best_epoch = epoch + 1;
      best = snapshot(params);
      continue;
    }
    const auto scores = net.validation_scores();
    const double vloss = nn::bce_loss(val_y, scores);
    const auto vauc = auc(val_labels, scores);
    hist.val_loss.push_back(vloss);
    hist.val_auc.push_back(vauc);
    const double metric = vauc ? *vauc : -vloss;
    if (metric > best_metric) {
      best_metric = metric;
      best = snapshot(params);
      hist.best_epoch = epoch + 1;
      since_best = 0;
    } else if (++since_best >= tc.patience) {
      hist.stopped_early = true;
      break;
    }
  }
  restore(params, best);
  return hist;
}

std::vector<int> split_labels(const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<int> y;
  y.reserve(idx.size());
  for (auto i : idx) y.push_back(ds.samples[i].label);
  return y;
}

}  // namespace

std::string_view model_name(ModelKind k) noexcept {
  switch (k) {
    case ModelKind::St5: return "st5";
    case ModelKind::St15: return "st15";
    case ModelKind::St25: return "st25";
    case ModelKind::Knn: return "knn";
    case ModelKind::Ocnn: return "ocnn";
    case ModelKind::Ogwn: return "ogwn";
    case ModelKind::PretrainFinetune: return "pretrain-finetune";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  for (auto k : {ModelKind::St5, ModelKind::St15, ModelKind::St25, ModelKind::Knn, ModelKind::Ocnn, ModelKind::Ogwn,
                 ModelKind::PretrainFinetune})
    if (model_name(k) == name) return k;
  throw InvalidArgument("unknown model '" + std::string(name) + "'");
}

std::vector<double> Classifier::predict_batch(std::span<const ObservedSequence* const> batch) const {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto* obs : batch) out.push_back(predict_proba(*obs));
  return out;
}

std::vector<double> Classifier::predict(const Dataset& ds, std::span<const std::size_t> positions) const {
  std::vector<const ObservedSequence*> batch;
  batch.reserve(positions.size());
  for (auto i : positions) batch.push_back(&ds.samples.at(i).observed);
  return predict_batch(batch);
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be > 0");
  if (patience < 1) throw InvalidArgument("patience must be >= 1");
  if (clip_norm < 0.0) throw InvalidArgument("clip_norm must be >= 0");
}

// ---------------------------------------------------------------- ST

StClassifier::StClassifier(std::uint32_t threshold) : threshold_(threshold) {
  if (threshold < 1) throw InvalidArgument("surveillance threshold must be >= 1");
}

std::string StClassifier::kind() const { return "st" + std::to_string(threshold_); }

double StClassifier::predict_proba(const ObservedSequence& obs) const {
  if (obs.cum_counts.empty()) return 0.0;
  return obs.cum_counts.back() >= threshold_ ? 1.0 : 0.0;
}

nn::Checkpoint StClassifier::checkpoint() const {
  return make_checkpoint(kind(), provenance, ojson{{"threshold", threshold_}}, {});
}

// ---------------------------------------------------------------- KNN

void KnnConfig::validate() const {
  if (k < 1) throw InvalidArgument("knn: k must be >= 1");
}

std::vector<double> knn_features(const ObservedSequence& obs, std::size_t t_o) {
  std::vector<double> f(t_o + 1, 0.0);
  double last = 0.0;
  for (std::size_t t = 0; t <= t_o; ++t) {
    if (t < obs.cum_counts.size()) last = obs.cum_counts[t];
    f[t] = last;
  }
  return f;
}

KnnClassifier::KnnClassifier(KnnConfig config) : config_(config) { config_.validate(); }

void KnnClassifier::fit(const Dataset& ds) {
  const auto idx = ds.indices(Split::Train);
  std::vector<std::vector<double>> feats;
  std::vector<int> labels;
  std::vector<std::uint64_t> ids;
  for (auto i : idx) {
    const auto& s = ds.samples[i];
    feats.push_back(knn_features(s.observed, ds.provenance.t_o));
    labels.push_back(s.label);
    ids.push_back(s.id);
  }
  fit(std::move(feats), std::move(labels), std::move(ids), ds.provenance.t_o);
  provenance.dataset = ds.provenance;
}

void KnnClassifier::fit(std::vector<std::vector<double>> features, std::vector<int> labels,
                        std::vector<std::uint64_t> ids, std::size_t t_o) {
  if (features.size() != labels.size() || features.size() != ids.size())
    throw InvalidArgument("knn: features, labels and ids differ in length");
  if (features.empty()) throw InvalidArgument("knn: empty training set");
  if (config_.k > features.size()) throw InvalidArgument("knn: k exceeds the training set size");
  dim_ = features.front().size();
  features_.clear();
  for (const auto& f : features) {
    if (f.size() != dim_) throw InvalidArgument("knn: ragged feature rows");
    features_.insert(features_.end(), f.begin(), f.end());
  }
  labels_ = std::move(labels);
  ids_ = std::move(ids);
  t_o_ = t_o;
}

std::vector<std::size_t> KnnClassifier::neighbors(std::span<const double> query) const {
  if (query.size() != dim_) throw InvalidArgument("knn: query width mismatch");
  const std::size_t n = labels_.size();
  std::vector<double> dist(n);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    const double* row = features_.data() + r * dim_;
    for (std::size_t c = 0; c < dim_; ++c) {
      const double d = row[c] - query[c];
      s += d * d;
    }
    dist[r] = s;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto k = static_cast<std::ptrdiff_t>(config_.k);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](std::size_t a, std::size_t b) {
    return dist[a] != dist[b] ? dist[a] < dist[b] : ids_[a] < ids_[b];
  });
  order.resize(config_.k);
  return order;
}

std::string KnnClassifier::kind() const { return "knn"; }

double KnnClassifier::predict_proba(const ObservedSequence& obs) const {
  if (labels_.empty()) throw InvalidArgument("knn: model is not fitted");
  const auto q = knn_features(obs, t_o_);
  std::size_t pos = 0;
  for (auto r : neighbors(q)) pos += labels_[r] == 1 ? 1 : 0;
  return static_cast<double>(pos) / static_cast<double>(config_.k);
}

nn::Checkpoint KnnClassifier::checkpoint() const {
  auto ck = make_checkpoint(kind(), provenance, ojson{{"k", config_.k}, {"t_o", t_o_}, {"dim", dim_}}, {});
  nn::Tensor f({labels_.size(), dim_});
  std::copy(features_.begin(), features_.end(), f.data());
  nn::Tensor y({labels_.size()}), ids({labels_.size()});
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    y[i] = labels_[i];
    ids[i] = static_cast<double>(ids_[i]);
  }
  ck.arrays.emplace_back("knn.features", std::move(f));
  ck.arrays.emplace_back("knn.labels", std::move(y));
  ck.arrays.emplace_back("knn.ids", std::move(ids));
  return ck;
}

KnnClassifier KnnClassifier::from_checkpoint(const nn::Checkpoint& ck) {
  const auto& m = model_block(ck);
  KnnClassifier knn(KnnConfig{m.at("k").get<std::size_t>()});
  if (ck.arrays.size() != 3) throw FormatError("knn checkpoint needs features, labels and ids");
  const auto& f = ck.arrays[0].second;
  const auto& y = ck.arrays[1].second;
  const auto& ids = ck.arrays[2].second;
  const std::size_t dim = m.at("dim").get<std::size_t>();
  if (f.size() != y.size() * dim || ids.size() != y.size()) throw FormatError("knn checkpoint shape mismatch");
  std::vector<std::vector<double>> feats(y.size());
  std::vector<int> labels(y.size());
  std::vector<std::uint64_t> id(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    feats[i].assign(f.data() + i * dim, f.data() + (i + 1) * dim);
    labels[i] = static_cast<int>(y[i]);
    id[i] = static_cast<std::uint64_t>(ids[i]);
  }
  knn.fit(std::move(feats), std::move(labels), std::move(id), m.at("t_o").get<std::size_t>());
  knn.provenance = provenance_from_json(ck.config.at("provenance"));
  return knn;
}

// ---------------------------------------------------------------- OCNN

void OcnnConfig::validate() const {
  conv.validate();
  for (auto h : head_hidden)
    if (h < 1) throw InvalidArgument("ocnn: hidden layer sizes must be >= 1");
}

std::uint32_t count_token(std::uint32_t count, std::size_t vocab_size) noexcept {
  std::uint32_t band = 1;
  for (std::uint64_t c = static_cast<std::uint64_t>(count) + 1; c > 1; c >>= 1) ++band;
  const std::uint32_t tok = std::min(count, band);
  return static_cast<std::uint32_t>(std::min<std::size_t>(tok, vocab_size - 1));
}

std::vector<std::uint32_t> ocnn_tokens(const ObservedSequence& obs, std::size_t vocab_size) {
  std::vector<std::uint32_t> t;
  for (std::size_t s = 1; s < obs.new_counts.size(); ++s) t.push_back(count_token(obs.new_counts[s], vocab_size));
  return t;
}

namespace {

std::vector<std::size_t> head_sizes(std::size_t in, const std::vector<std::size_t>& hidden) {
  std::vector<std::size_t> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(1);
  return s;
}

class OcnnTrainable final : public Trainable {
 public:
  OcnnTrainable(nn::Conv1dMaxPool& conv, nn::Mlp& head, std::vector<std::vector<std::uint32_t>> train_tokens,
                std::vector<double> train_y, std::vector<std::vector<std::uint32_t>> val_tokens)
      : conv_(conv), head_(head), tokens_(std::move(train_tokens)), y_(std::move(train_y)), val_(std::move(val_tokens)) {}

  nn::ParamRefs params() override {
    auto p = conv_.parameters();
    auto q = head_.parameters();
    p.insert(p.end(), q.begin(), q.end());
    return p;
  }

  double batch_gradient(std::span<const std::size_t> rows) override {
    const std::size_t B = rows.size(), D = conv_.spec.output_dim();
    std::vector<nn::ConvTrace> traces(B);
    nn::Tensor x({B, D});
    std::vector<double> y(B);
    for (std::size_t b = 0; b < B; ++b) {
      const auto f = nn::conv1d_maxpool(conv_, tokens_[rows[b]], &traces[b]);
      std::copy(f.begin(), f.end(), x.data() + b * D);
      y[b] = y_[rows[b]];
    }
    nn::MlpTrace mt;
    const nn::Tensor logits = nn::mlp_forward(head_, x, &mt);
    nn::Tensor d({B, 1});
    const double loss = nn::bce_with_logits(y, logits.span(), d.span());
    const nn::Tensor dx = nn::mlp_backward(head_, mt, d);
    for (std::size_t b = 0; b < B; ++b)
      nn::conv1d_maxpool_backward(conv_, traces[b], std::span(dx.data() + b * D, D));
    return loss;
  }

  std::vector<double> validation_scores() override {
    std::vector<double> out;
    for (const auto& t : val_) out.push_back(score(conv_, head_, t));
    return out;
  }

  static double score(const nn::Conv1dMaxPool& conv, const nn::Mlp& head, std::span<const std::uint32_t> tokens) {
    const auto f = nn::conv1d_maxpool(conv, tokens, nullptr);
    nn::Tensor x({1, f.size()});
    std::copy(f.begin(), f.end(), x.data());
    return nn::sigmoid(nn::mlp_forward(head, x, nullptr)[0]);
  }

 private:
  nn::Conv1dMaxPool& conv_;
  nn::Mlp& head_;
  std::vector<std::vector<std::uint32_t>> tokens_;
  std::vector<double> y_;
  std::vector<std::vector<std::uint32_t>> val_;
};

}  // namespace

OcnnClassifier::OcnnClassifier(OcnnConfig config, std::uint64_t init_seed)
    : config_(std::move(config)), conv_(config_.conv), head_("ocnn.head", head_sizes(config_.conv.output_dim(), config_.head_hidden)) {
  config_.validate();
  conv_.init(init_seed);
  head_.init(init_seed);
}

nn::ParamRefs OcnnClassifier::parameters() {
  auto p = conv_.parameters();
  auto q = head_.parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

TrainHistory OcnnClassifier::train(const Dataset& ds, const TrainConfig& tc) {
  const auto tr = ds.indices(Split::Train);
  const auto va = ds.indices(Split::Validation);
  std::vector<std::vector<std::uint32_t>> ttok, vtok;
  std::vector<double> ty;
  for (auto i : tr) {
    ttok.push_back(ocnn_tokens(ds.samples[i].observed, config_.conv.vocab_size));
    ty.push_back(ds.samples[i].label);
  }
  for (auto i : va) vtok.push_back(ocnn_tokens(ds.samples[i].observed, config_.conv.vocab_size));
  const auto vy = split_labels(ds, va);
  OcnnTrainable net(conv_, head_, std::move(ttok), std::move(ty), std::move(vtok));
  auto hist = run_training(net, tr.size(), vy, tc);
  provenance.dataset = ds.provenance;
  provenance.learning_rate = tc.learning_rate;
  return hist;
}

std::string OcnnClassifier::kind() const { return "ocnn"; }

double OcnnClassifier::predict_proba(const ObservedSequence& obs) const {
  return OcnnTrainable::score(conv_, head_, ocnn_tokens(obs, config_.conv.vocab_size));
}

nn::Checkpoint OcnnClassifier::checkpoint() const {
  ojson m;
  m["vocab_size"] = config_.conv.vocab_size;
  m["embed_dim"] = config_.conv.embed_dim;
  m["windows"] = config_.conv.windows;
  m["filters_per_window"] = config_.conv.filters_per_window;
  m["head_hidden"] = config_.head_hidden;
  auto& self = const_cast<OcnnClassifier&>(*this);
  return make_checkpoint(kind(), provenance, std::move(m), self.parameters());
}

OcnnClassifier OcnnClassifier::from_checkpoint(const nn::Checkpoint& ck) {
  const auto& m = model_block(ck);
  OcnnConfig cfg;
  cfg.conv.vocab_size = m.at("vocab_size").get<std::size_t>();
  cfg.conv.embed_dim = m.at("embed_dim").get<std::size_t>();
  cfg.conv.windows = m.at("windows").get<std::vector<std::size_t>>();
  cfg.conv.filters_per_window = m.at("filters_per_window").get<std::size_t>();
  cfg.head_hidden = m.at("head_hidden").get<std::vector<std::size_t>>();
  OcnnClassifier model(cfg);
  ck.restore(model.parameters());
  model.provenance = provenance_from_json(ck.config.at("provenance"));
  return model;
}

// ---------------------------------------------------------------- OGWN

void OgwnConfig::validate() const {
  wavelet.validate();
  if (hidden < 1) throw InvalidArgument("ogwn: hidden size must be >= 1");
  for (auto h : mlp_hidden)
    if (h < 1) throw InvalidArgument("ogwn: MLP layer sizes must be >= 1");
}

std::vector<double> ogwn_features(const EmbeddingMatrix& emb, const ObservedSequence& obs) {
  const std::size_t steps = obs.infected_nodes.size(), dim = emb.dim, width = 1 + dim;
  std::vector<double> f(steps * width, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    const auto& nodes = obs.infected_nodes[t];
    double* row = f.data() + t * width;
    row[0] = std::log1p(static_cast<double>(nodes.size()));
    if (nodes.empty()) continue;
    for (NodeId v : nodes) {
      if (v >= emb.n) throw InvalidArgument("node " + std::to_string(v) + " has no embedding");
      const auto e = emb.row(v);
      for (std::size_t c = 0; c < dim; ++c) row[1 + c] += e[c];
    }
    const double inv = 1.0 / static_cast<double>(nodes.size());
    for (std::size_t c = 0; c < dim; ++c) row[1 + c] *= inv;
  }
  return f;
}

FeatureNormalizer FeatureNormalizer::fit(std::span<const OgwnSample> samples, std::size_t width) {
  FeatureNormalizer n;
  n.mean.assign(width, 0.0);
  n.inv_std.assign(width, 1.0);
  std::vector<double> sq(width, 0.0);
  std::size_t rows = 0;
  for (const auto& s : samples) {
    if (s.features.size() % width != 0) throw InvalidArgument("feature sequence width mismatch");
    for (std::size_t r = 0; r < s.features.size() / width; ++r, ++rows)
      for (std::size_t c = 0; c < width; ++c) n.mean[c] += s.features[r * width + c];
  }
  if (rows == 0) return n;
  for (auto& m : n.mean) m /= static_cast<double>(rows);
  for (const auto& s : samples)
    for (std::size_t r = 0; r < s.features.size() / width; ++r)
      for (std::size_t c = 0; c < width; ++c) {
        const double d = s.features[r * width + c] - n.mean[c];
        sq[c] += d * d;
      }
  for (std::size_t c = 0; c < width; ++c) {
    const double sd = std::sqrt(sq[c] / static_cast<double>(rows));
    n.inv_std[c] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  return n;
}

void FeatureNormalizer::apply(std::span<double> seq) const {
  const std::size_t width = mean.size();
  for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = (seq[i] - mean[i % width]) * inv_std[i % width];
}

std::vector<OgwnSample> ogwn_samples(const EmbeddingMatrix& emb, const Dataset& ds,
                                     std::span<const std::size_t> positions) {
  std::vector<OgwnSample> out;
  out.reserve(positions.size());
  for (auto i : positions) out.push_back({ogwn_features(emb, ds.samples.at(i).observed), ds.samples.at(i).label});
  return out;
}

OgwnClassifier::OgwnClassifier(OgwnConfig config, std::uint64_t init_seed)
    : config_(std::move(config)),
      gru_(config_.hidden, config_.feature_width()),
      head_("ogwn.head", head_sizes(2 * config_.hidden, config_.mlp_hidden)) {
  config_.validate();
  gru_.init(init_seed);
  head_.init(init_seed);
  normalizer_.mean.assign(config_.feature_width(), 0.0);
  normalizer_.inv_std.assign(config_.feature_width(), 1.0);
}

void OgwnClassifier::attach_embedding(std::shared_ptr<const EmbeddingMatrix> emb) {
  if (emb && emb->dim != config_.wavelet.embedding_dim())
    throw InvalidArgument("embedding width does not match the model");
  embedding_ = std::move(emb);
}

nn::ParamRefs OgwnClassifier::parameters() {
  auto p = gru_.parameters();
  auto q = head_.parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

std::vector<double> OgwnClassifier::batch_logits(std::span<const OgwnSample* const> batch, nn::BiGruTrace* gt,
                                                 nn::MlpTrace* mt) const {
  const std::size_t B = batch.size(), F = config_.feature_width();
  if (B == 0) return {};
  const std::size_t len = batch.front()->features.size();
  if (len == 0 || len % F != 0) throw InvalidArgument("ogwn: empty or malformed feature sequence");
  const std::size_t T = len / F;
  std::vector<double> xs(T * B * F);
  std::vector<double> tmp;
  for (std::size_t b = 0; b < B; ++b) {
    if (batch[b]->features.size() != len) throw InvalidArgument("ogwn: sequences in a batch differ in length");
    tmp = batch[b]->features;
    normalizer_.apply(tmp);
    for (std::size_t t = 0; t < T; ++t) std::copy_n(tmp.data() + t * F, F, xs.data() + (t * B + b) * F);
  }
  const nn::Tensor h = nn::bigru_forward(gru_, xs, B, T, gt);
  const nn::Tensor logits = nn::mlp_forward(head_, h, mt);
  return {logits.span().begin(), logits.span().end()};
}

double OgwnClassifier::loss_and_gradient(std::span<const OgwnSample* const> samples) {
  nn::BiGruTrace gt;
  nn::MlpTrace mt;
  const auto logits = batch_logits(samples, &gt, &mt);
  std::vector<double> y;
  for (const auto* s : samples) y.push_back(s->label);
  nn::Tensor d({samples.size(), 1});
  const double loss = nn::bce_with_logits(y, logits, d.span());
  const nn::Tensor dh = nn::mlp_backward(head_, mt, d);
  nn::bigru_backward(gru_, gt, dh);
  return loss;
}

std::vector<double> OgwnClassifier::predict_features(std::span<const OgwnSample> samples) const {
  constexpr std::size_t kChunk = 256;
  std::vector<double> out;
  out.reserve(samples.size());
  std::vector<const OgwnSample*> ptrs;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    ptrs.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + kChunk); ++i) ptrs.push_back(&samples[i]);
    for (double a : batch_logits(ptrs, nullptr, nullptr)) out.push_back(nn::sigmoid(a));
  }
  return out;
}

namespace {

class OgwnTrainable final : public Trainable {
 public:
  OgwnTrainable(OgwnClassifier& model, std::span<const OgwnSample> train, std::span<const OgwnSample> val)
      : model_(model), train_(train), val_(val) {}

  nn::ParamRefs params() override { return model_.parameters(); }

  double batch_gradient(std::span<const std::size_t> rows) override {
    ptrs_.clear();
    for (auto r : rows) ptrs_.push_back(&train_[r]);
    return model_.loss_and_gradient(ptrs_);
  }

  std::vector<double> validation_scores() override { return model_.predict_features(val_); }

 private:
  OgwnClassifier& model_;
  std::span<const OgwnSample> train_;
  std::span<const OgwnSample> val_;
  std::vector<const OgwnSample*> ptrs_;
};

}  // namespace

TrainHistory OgwnClassifier::train(std::span<const OgwnSample> train, std::span<const OgwnSample> validation,
                                   const TrainConfig& tc) {
  normalizer_ = FeatureNormalizer::fit(train, config_.feature_width());
  return continue_training(train, validation, tc);
}

TrainHistory OgwnClassifier::continue_training(std::span<const OgwnSample> train,
                                               std::span<const OgwnSample> validation, const TrainConfig& tc) {
  std::vector<int> vy;
  for (const auto& s : validation) vy.push_back(s.label);
  OgwnTrainable net(*this, train, validation);
  auto hist = run_training(net, train.size(), vy, tc);
  provenance.learning_rate = tc.learning_rate;
  return hist;
}

TrainHistory OgwnClassifier::train(const Dataset& ds, const TrainConfig& tc) {
  if (!embedding_) throw InvalidArgument("ogwn: no embedding attached");
  const auto tr = ogwn_samples(*embedding_, ds, ds.indices(Split::Train));
  const auto va = ogwn_samples(*embedding_, ds, ds.indices(Split::Validation));
  auto hist = train(tr, va, tc);
  provenance.dataset = ds.provenance;
  return hist;
}

std::string OgwnClassifier::kind() const { return kind_; }

double OgwnClassifier::predict_proba(const ObservedSequence& obs) const {
  const ObservedSequence* p = &obs;
  return predict_batch(std::span(&p, 1)).front();
}

std::vector<double> OgwnClassifier::predict_batch(std::span<const ObservedSequence* const> batch) const {
  if (!embedding_) throw InvalidArgument("ogwn: no embedding attached");
  std::vector<OgwnSample> samples;
  samples.reserve(batch.size());
  for (const auto* obs : batch) samples.push_back({ogwn_features(*embedding_, *obs), 0});
  return predict_features(samples);
}

nn::Checkpoint OgwnClassifier::checkpoint() const {
  ojson m;
  ojson w;
  w["scale"] = config_.wavelet.scale ? ojson(*config_.wavelet.scale) : ojson(nullptr);
  w["cheb_order"] = config_.wavelet.cheb_order;
  w["sample_points"] = config_.wavelet.sample_points;
  m["wavelet"] = std::move(w);
  m["hidden"] = config_.hidden;
  m["mlp_hidden"] = config_.mlp_hidden;
  m["norm_mean"] = normalizer_.mean;
  m["norm_inv_std"] = normalizer_.inv_std;
  auto& self = const_cast<OgwnClassifier&>(*this);
  return make_checkpoint(kind(), provenance, std::move(m), self.parameters());
}

OgwnClassifier OgwnClassifier::from_checkpoint(const nn::Checkpoint& ck) {
  const auto& m = model_block(ck);
  OgwnConfig cfg;
  const auto& w = m.at("wavelet");
  if (!w.at("scale").is_null()) cfg.wavelet.scale = w.at("scale").get<double>();
  cfg.wavelet.cheb_order = w.at("cheb_order").get<std::size_t>();
  cfg.wavelet.sample_points = w.at("sample_points").get<std::vector<double>>();
  cfg.hidden = m.at("hidden").get<std::size_t>();
  cfg.mlp_hidden = m.at("mlp_hidden").get<std::vector<std::size_t>>();
  OgwnClassifier model(cfg);
  ck.restore(model.parameters());
  model.normalizer_.mean = m.at("norm_mean").get<std::vector<double>>();
  model.normalizer_.inv_std = m.at("norm_inv_std").get<std::vector<double>>();
  if (model.normalizer_.mean.size() != cfg.feature_width() || model.normalizer_.inv_std.size() != cfg.feature_width())
    throw FormatError("ogwn checkpoint normaliser width mismatch");
  model.kind_ = ck.config.at("kind").get<std::string>();
  model.provenance = provenance_from_json(ck.config.at("provenance"));
  return model;
}

// ---------------------------------------------------------------- pretrain / finetune

void PretrainConfig::validate() const {
  if (networks.empty() || betas.empty()) throw InvalidArgument("pretrain grid is empty");
  for (const auto& n : networks) n.validate();
  for (double b : betas) SirParams{b, mu}.validate();
  if (runs_per_cell < 1) throw InvalidArgument("runs_per_cell must be >= 1");
  split.validate();
  model.validate();
  train.validate();
}

PretrainResult pretrain(const PretrainConfig& config, std::uint64_t nn_seed) {
  config.validate();
  std::vector<OgwnSample> train, val;
  std::vector<PretrainCell> cells;
  std::vector<std::string> networks, fingerprints;
  std::size_t pooled = 0, pooled_pos = 0, cell_index = 0;
  for (const auto& spec : config.networks) {
    const Graph g = build_network(spec);
    const auto emb = config.embedding_cache_dir.empty()
                         ? embed_nodes(g, config.model.wavelet, config.workers)
                         : cached_embedding(g, config.model.wavelet, config.embedding_cache_dir, config.workers);
    networks.push_back(spec.describe());
    fingerprints.push_back(g.fingerprint_hex());
    for (double beta : config.betas) {
      PretrainCell cell{spec.describe(), g.fingerprint_hex(), beta, std::nullopt, 0, 0.0, {}};
      SimConfig sc = config.sim;
      sc.master_seed = mix64(config.sim.master_seed + cell_index++);
      sc.record_horizon = config.t_o;
      const auto batch = run_batch(g, SirParams{beta, config.mu}, sc, config.runs_per_cell, config.workers);
      try {
        const double phi = config.labeling.resolve(batch);
        Provenance base;
        base.network = spec.describe();
        base.graph_fingerprint = g.fingerprint_hex();
        const Dataset ds = build_dataset(batch, config.t_o, phi, config.split, config.split_seed, base);
        cell.phi_star = phi;
        cell.samples = ds.samples.size();
        cell.positive_fraction = ds.positive_fraction();
        for (auto& s : ogwn_samples(emb, ds, ds.indices(Split::Train))) train.push_back(std::move(s));
        for (auto& s : ogwn_samples(emb, ds, ds.indices(Split::Validation))) val.push_back(std::move(s));
        pooled += ds.samples.size();
        for (const auto& s : ds.samples) pooled_pos += s.label == 1 ? 1 : 0;
      } catch (const UnimodalError& e) {
        cell.skipped_reason = e.what();
        std::cerr << "warning: skipping " << cell.network << " beta=" << beta << ": " << e.what() << '\n';
      } catch (const InvalidArgument& e) {
        cell.skipped_reason = e.what();
        std::cerr << "warning: skipping " << cell.network << " beta=" << beta << ": " << e.what() << '\n';
      }
      cells.push_back(std::move(cell));
    }
  }
  if (pooled == 0) throw UnimodalError("every pretraining cell was skipped");
  TrainConfig tc = config.train;
  tc.seed = nn_seed;
  PretrainResult res{OgwnClassifier(config.model, nn_seed), std::move(cells), {}, pooled,
                     static_cast<double>(pooled_pos) / static_cast<double>(pooled)};
  res.history = res.model.train(train, val, tc);
  res.model.provenance.dataset = Provenance{};
  res.model.provenance.dataset.mu = config.mu;
  res.model.provenance.dataset.t_o = config.t_o;
  res.model.provenance.pretrain_networks = std::move(networks);
  res.model.provenance.pretrain_fingerprints = std::move(fingerprints);
  return res;
}

void FinetuneConfig::validate() const {
  if (!(lr_multiplier > 0.0)) throw InvalidArgument("finetune learning-rate multiplier must be > 0");
  if (batch_size < 1 || patience < 1) throw InvalidArgument("finetune batch_size and patience must be >= 1");
}

OgwnClassifier finetune(const OgwnClassifier& pretrained, const Dataset& target,
                        std::shared_ptr<const EmbeddingMatrix> target_embedding, const FinetuneConfig& fc,
                        double pretrain_lr, TrainHistory* history) {
  fc.validate();
  const auto& fps = pretrained.provenance.pretrain_fingerprints;
  if (fps.empty()) throw ProvenanceError("checkpoint carries no pretraining provenance");
  if (std::find(fps.begin(), fps.end(), target.provenance.graph_fingerprint) != fps.end())
    throw ProvenanceError("target network " + target.provenance.graph_fingerprint + " was used for pretraining");
  if (!target_embedding) throw InvalidArgument("finetune: target embedding missing");
  OgwnClassifier model = pretrained;
  model.attach_embedding(std::move(target_embedding));
  model.set_kind("pretrain-finetune");
  model.provenance.dataset = target.provenance;
  if (fc.epochs == 0) {
    if (history) *history = {};
    return model;
  }
  TrainConfig tc;
  tc.epochs = fc.epochs;
  tc.batch_size = fc.batch_size;
  tc.patience = fc.patience;
  tc.learning_rate = pretrain_lr * fc.lr_multiplier;
  tc.seed = fc.seed;
  const auto tr = ogwn_samples(*model.embedding(), target, target.indices(Split::Train));
  const auto va = ogwn_samples(*model.embedding(), target, target.indices(Split::Validation));
  auto h = model.continue_training(tr, va, tc);
  if (history) *history = std::move(h);
  return model;
}

// ---------------------------------------------------------------- persistence

void save_model(const Classifier& model, const std::string& path) { model.checkpoint().save(path); }

std::unique_ptr<Classifier> model_from_checkpoint(const nn::Checkpoint& ck) {
  if (!ck.config.contains("kind")) throw FormatError("checkpoint lacks a model kind");
  const auto kind = ck.config.at("kind").get<std::string>();
  if (kind.rfind("st", 0) == 0) {
    auto m = std::make_unique<StClassifier>(model_block(ck).at("threshold").get<std::uint32_t>());
    m->provenance = provenance_from_json(ck.config.at("provenance"));
    return m;
  }
  if (kind == "knn") return std::make_unique<KnnClassifier>(KnnClassifier::from_checkpoint(ck));
  if (kind == "ocnn") return std::make_unique<OcnnClassifier>(OcnnClassifier::from_checkpoint(ck));
  if (kind == "ogwn" || kind == "pretrain-finetune")
    return std::make_unique<OgwnClassifier>(OgwnClassifier::from_checkpoint(ck));
  throw FormatError("unknown model kind '" + kind + "'");
}

std::unique_ptr<Classifier> load_model(const std::string& path) { return model_from_checkpoint(nn::Checkpoint::load(path)); }

}  // namespace takeoff
