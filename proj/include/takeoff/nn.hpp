#pragma once

// Small dense neural-network kernel: GRU / BiGRU, 1-D convolution with
// max-over-time pooling, MLP, binary cross-entropy and Adam. Gradients are
// hand-derived per layer (no general autodiff graph). Double precision.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace takeoff::nn {

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const noexcept { return shape_.size() < 2 ? 1 : shape_[1]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& at(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

  void fill(double v) noexcept;
  /// Throws NumericalError naming `what` when any entry is NaN or infinite.
  void check_finite(const char* what) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<std::size_t> shape) : name(std::move(n)), value(shape), grad(shape) {}
};

using ParamRefs = std::vector<Parameter*>;

void zero_grad(const ParamRefs& params);
/// Euclidean norm over all gradients.
double grad_norm(const ParamRefs& params);
/// Scales gradients so their joint norm is at most max_norm (no-op when <= 0).
void clip_grad_norm(const ParamRefs& params, double max_norm);

double sigmoid(double x) noexcept;

/// Uniform(-a, a) initialisation from a counter-based stream.
void init_uniform(Tensor& t, double a, std::uint64_t seed, std::uint64_t stream);

// ---------------------------------------------------------------- GRU

/// Gates read the concatenation [h_{t-1}, x_t]; each weight is hidden x (hidden + input).
struct GruCell {
  std::size_t hidden = 0;
  std::size_t input = 0;
  Parameter w_update, w_reset, w_candidate;
  Parameter b_update, b_reset, b_candidate;

  GruCell() = default;
  GruCell(std::string prefix, std::size_t hidden, std::size_t input);

  void init(std::uint64_t seed, std::uint64_t stream);
  ParamRefs parameters();
};

/// Single-sample step: z = sig(W_u[h,x]+b_u), r = sig(W_r[h,x]+b_r),
/// c = tanh(W_c[r*h,x]+b_c), h' = (1-z)*h + z*c.
std::vector<double> gru_step(const GruCell& cell, std::span<const double> h_prev, std::span<const double> x);

/// Activations kept for backpropagation through time.
struct GruTrace {
  std::size_t batch = 0;
  std::size_t steps = 0;
  bool reverse = false;
  std::vector<double> hx, z, r, rhx, c, h_prev;  // per processed step, concatenated
};

/// Runs the cell over `steps` inputs laid out as [step][batch][input] starting
/// from h = 0, forwards or in reverse time order. Returns the final state
/// (batch x hidden).
Tensor gru_forward(const GruCell& cell, std::span<const double> xs, std::size_t batch, std::size_t steps,
                   bool reverse, GruTrace* trace);

/// Accumulates parameter gradients given dL/dh_final. When `dxs` is non-empty
/// it receives dL/dx with the layout of the forward input (accumulated).
void gru_backward(GruCell& cell, const GruTrace& trace, const Tensor& d_final, std::span<double> dxs = {});

struct BiGru {
  GruCell forward;
  GruCell backward;

  BiGru() = default;
  BiGru(std::size_t hidden, std::size_t input);
  void init(std::uint64_t seed);
  ParamRefs parameters();
  std::size_t output_dim() const noexcept { return 2 * forward.hidden; }
};

struct BiGruTrace {
  GruTrace fwd, bwd;
};

/// Concatenation of the forward final state and the backward state after
/// reading the first element (batch x 2*hidden).
Tensor bigru_forward(const BiGru& net, std::span<const double> xs, std::size_t batch, std::size_t steps,
                     BiGruTrace* trace);
void bigru_backward(BiGru& net, const BiGruTrace& trace, const Tensor& d_out, std::span<double> dxs = {});

// ---------------------------------------------------------------- Conv1d

struct Conv1dSpec {
  std::size_t vocab_size = 32;
  std::size_t embed_dim = 32;
  std::vector<std::size_t> windows{2, 3, 4};
  std::size_t filters_per_window = 64;

  void validate() const;
  std::size_t output_dim() const noexcept { return windows.size() * filters_per_window; }
};

/// Token embedding table followed by ReLU convolutions and max-over-time pooling.
struct Conv1dMaxPool {
  Conv1dSpec spec;
  Parameter embedding;             // vocab x embed_dim
  std::vector<Parameter> filters;  // per window: filters x (h * embed_dim)
  std::vector<Parameter> biases;   // per window: filters

  Conv1dMaxPool() = default;
  explicit Conv1dMaxPool(const Conv1dSpec& spec);
  void init(std::uint64_t seed);
  ParamRefs parameters();
};

struct ConvTrace {
  std::vector<std::uint32_t> tokens;
  std::size_t padded_len = 0;
  std::vector<double> embedded;     // padded_len x embed_dim
  std::vector<std::size_t> argmax;  // per output feature
  std::vector<double> pre_max;      // per output feature, before ReLU
};

/// Sequences shorter than the widest window are right-padded with zero rows.
std::vector<double> conv1d_maxpool(const Conv1dMaxPool& layer, std::span<const std::uint32_t> tokens,
                                   ConvTrace* trace);
void conv1d_maxpool_backward(Conv1dMaxPool& layer, const ConvTrace& trace, std::span<const double> d_out);

// ---------------------------------------------------------------- MLP

/// Fully connected layers with ReLU between them; the last layer is linear
/// (one logit when used as a classifier head).
struct Mlp {
  std::vector<std::size_t> sizes;
  std::vector<Parameter> weights;  // out x in
  std::vector<Parameter> biases;

  Mlp() = default;
  Mlp(std::string prefix, std::vector<std::size_t> sizes);
  void init(std::uint64_t seed);
  ParamRefs parameters();
};

struct MlpTrace {
  std::vector<Tensor> inputs;  // input of each layer (post-activation of the previous one)
  std::vector<Tensor> pre;     // pre-activation of each layer
};

Tensor mlp_forward(const Mlp& mlp, const Tensor& x, MlpTrace* trace);
/// Returns dL/dx.
Tensor mlp_backward(Mlp& mlp, const MlpTrace& trace, const Tensor& d_out);

// ---------------------------------------------------------------- loss / optimiser

inline constexpr double kProbClamp = 1e-12;

/// Mean binary cross-entropy with predictions clamped to [eps, 1 - eps].
double bce_loss(std::span<const double> y_true, std::span<const double> y_pred);

/// Mean BCE of sigmoid(logits); writes dL/dlogit = (sigmoid(a) - y) / n.
double bce_with_logits(std::span<const double> y_true, std::span<const double> logits, std::span<double> d_logits);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParamRefs params, AdamConfig config);

  void step();
  std::size_t steps() const noexcept { return t_; }
  AdamConfig& config() noexcept { return config_; }

 private:
  ParamRefs params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------- checkpoints

/// Versioned container: a JSON config block plus named arrays in a fixed order.
struct Checkpoint {
  static constexpr int kVersion = 1;

  nlohmann::ordered_json config;
  std::vector<std::pair<std::string, Tensor>> arrays;

  static Checkpoint capture(nlohmann::ordered_json config, const ParamRefs& params);
  /// Copies arrays into `params`; throws FormatError on name/shape mismatch.
  void restore(const ParamRefs& params) const;

  void save(std::ostream& out) const;
  static Checkpoint load(std::istream& in);
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace takeoff::nn
