#include "takeoff/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>

#include "takeoff/error.hpp"
#include "takeoff/rng.hpp"
#include "takeoff/simd/kernels.hpp"

namespace takeoff::nn {

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (auto d : shape_) n *= d;
  data_.assign(shape_.empty() ? 0 : n, fill);
}

void Tensor::fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

void Tensor::check_finite(const char* what) const {
  for (double v : data_)
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value in ") + what);
}

void zero_grad(const ParamRefs& params) {
  for (auto* p : params) p->grad.fill(0.0);
}

double grad_norm(const ParamRefs& params) {
  double s = 0.0;
  for (auto* p : params)
    for (double g : p->grad.span()) s += g * g;
  return std::sqrt(s);
}

void clip_grad_norm(const ParamRefs& params, double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = grad_norm(params);
  if (!std::isfinite(norm)) throw NumericalError("non-finite gradient");
  if (norm <= max_norm) return;
  const double f = max_norm / norm;
  for (auto* p : params)
    for (double& g : p->grad.span()) g *= f;
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void init_uniform(Tensor& t, double a, std::uint64_t seed, std::uint64_t stream) {
  RandomStream rng(seed, stream);
  for (double& v : t.span()) v = (2.0 * rng.uniform() - 1.0) * a;
}

namespace {

// y[rows x n] = broadcast bias
void set_rows(double* y, std::size_t rows, const Tensor& bias) {
  const std::size_t n = bias.size();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(bias.data(), n, y + r * n);
}

void add_colsum(const double* x, std::size_t rows, std::size_t n, Tensor& out) {
  for (std::size_t r = 0; r < rows; ++r) simd::active().axpy(1.0, x + r * n, out.data(), n);
}

std::uint64_t name_stream(const std::string& name) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : name) h = (h ^ c) * 0x100000001B3ull;
  return h;
}

}  // namespace

// ---------------------------------------------------------------- GRU

GruCell::GruCell(std::string prefix, std::size_t hidden_dim, std::size_t input_dim)
    : hidden(hidden_dim),
      input(input_dim),
      w_update(prefix + ".w_update", {hidden_dim, hidden_dim + input_dim}),
      w_reset(prefix + ".w_reset", {hidden_dim, hidden_dim + input_dim}),
      w_candidate(prefix + ".w_candidate", {hidden_dim, hidden_dim + input_dim}),
      b_update(prefix + ".b_update", {hidden_dim}),
      b_reset(prefix + ".b_reset", {hidden_dim}),
      b_candidate(prefix + ".b_candidate", {hidden_dim}) {}

void GruCell::init(std::uint64_t seed, std::uint64_t stream) {
  const double a = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (auto* p : parameters()) {
    if (p->value.shape().size() == 2) init_uniform(p->value, a, seed, stream ^ name_stream(p->name));
    else p->value.fill(0.0);
  }
}

ParamRefs GruCell::parameters() { return {&w_update, &w_reset, &w_candidate, &b_update, &b_reset, &b_candidate}; }

std::vector<double> gru_step(const GruCell& cell, std::span<const double> h_prev, std::span<const double> x) {
  if (h_prev.size() != cell.hidden || x.size() != cell.input) throw InvalidArgument("gru_step: shape mismatch");
  const std::size_t H = cell.hidden, K = cell.hidden + cell.input;
  const auto& k = simd::active();
  std::vector<double> hx(K), rhx(K), z(H), r(H), c(H), out(H);
  std::copy(h_prev.begin(), h_prev.end(), hx.begin());
  std::copy(x.begin(), x.end(), hx.begin() + static_cast<std::ptrdiff_t>(H));
  for (std::size_t j = 0; j < H; ++j) {
    z[j] = sigmoid(k.dot(cell.w_update.value.data() + j * K, hx.data(), K) + cell.b_update.value[j]);
    r[j] = sigmoid(k.dot(cell.w_reset.value.data() + j * K, hx.data(), K) + cell.b_reset.value[j]);
  }
  rhx = hx;
  for (std::size_t j = 0; j < H; ++j) rhx[j] = r[j] * h_prev[j];
  for (std::size_t j = 0; j < H; ++j) {
    c[j] = std::tanh(k.dot(cell.w_candidate.value.data() + j * K, rhx.data(), K) + cell.b_candidate.value[j]);
    out[j] = (1.0 - z[j]) * h_prev[j] + z[j] * c[j];
  }
  return out;
}

Tensor gru_forward(const GruCell& cell, std::span<const double> xs, std::size_t batch, std::size_t steps,
                   bool reverse, GruTrace* trace) {
  const std::size_t H = cell.hidden, F = cell.input, K = H + F, B = batch;
  if (xs.size() != steps * B * F) throw InvalidArgument("gru_forward: input size mismatch");
  const auto& k = simd::active();
  Tensor h({B, H});
  std::vector<double> hx(B * K), rhx(B * K), z(B * H), r(B * H), c(B * H);
  if (trace) {
    trace->batch = B;
    trace->steps = steps;
    trace->reverse = reverse;
    for (auto* v : {&trace->hx, &trace->rhx}) v->assign(steps * B * K, 0.0);
    for (auto* v : {&trace->z, &trace->r, &trace->c, &trace->h_prev}) v->assign(steps * B * H, 0.0);
  }
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    const double* x = xs.data() + t * B * F;
    for (std::size_t b = 0; b < B; ++b) {
      std::copy_n(h.data() + b * H, H, hx.data() + b * K);
      std::copy_n(x + b * F, F, hx.data() + b * K + H);
    }
    set_rows(z.data(), B, cell.b_update.value);
    set_rows(r.data(), B, cell.b_reset.value);
    k.gemm_nt(hx.data(), cell.w_update.value.data(), z.data(), B, H, K, true);
    k.gemm_nt(hx.data(), cell.w_reset.value.data(), r.data(), B, H, K, true);
    for (auto& v : z) v = sigmoid(v);
    for (auto& v : r) v = sigmoid(v);
    rhx = hx;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < H; ++j) rhx[b * K + j] = r[b * H + j] * hx[b * K + j];
    set_rows(c.data(), B, cell.b_candidate.value);
    k.gemm_nt(rhx.data(), cell.w_candidate.value.data(), c.data(), B, H, K, true);
    for (auto& v : c) v = std::tanh(v);
    if (trace) {
      std::copy(hx.begin(), hx.end(), trace->hx.begin() + static_cast<std::ptrdiff_t>(s * B * K));
      std::copy(rhx.begin(), rhx.end(), trace->rhx.begin() + static_cast<std::ptrdiff_t>(s * B * K));
      std::copy(z.begin(), z.end(), trace->z.begin() + static_cast<std::ptrdiff_t>(s * B * H));
      std::copy(r.begin(), r.end(), trace->r.begin() + static_cast<std::ptrdiff_t>(s * B * H));
      std::copy(c.begin(), c.end(), trace->c.begin() + static_cast<std::ptrdiff_t>(s * B * H));
      std::copy_n(h.data(), B * H, trace->h_prev.begin() + static_cast<std::ptrdiff_t>(s * B * H));
    }
    for (std::size_t i = 0; i < B * H; ++i) h[i] = (1.0 - z[i]) * h[i] + z[i] * c[i];
  }
  return h;
}

void gru_backward(GruCell& cell, const GruTrace& tr, const Tensor& d_final, std::span<double> dxs) {
  const std::size_t H = cell.hidden, F = cell.input, K = H + F, B = tr.batch;
  if (d_final.size() != B * H) throw InvalidArgument("gru_backward: gradient shape mismatch");
  const bool want_dx = !dxs.empty();
  if (want_dx && dxs.size() != tr.steps * B * F) throw InvalidArgument("gru_backward: dx size mismatch");
  const auto& k = simd::active();
  std::vector<double> dh(d_final.span().begin(), d_final.span().end());
  std::vector<double> dhp(B * H), daz(B * H), dar(B * H), dac(B * H), dhx(B * K), drhx(B * K);
  for (std::size_t s = tr.steps; s-- > 0;) {
    const std::size_t t = tr.reverse ? tr.steps - 1 - s : s;
    const double* hx = tr.hx.data() + s * B * K;
    const double* rhx = tr.rhx.data() + s * B * K;
    const double* z = tr.z.data() + s * B * H;
    const double* r = tr.r.data() + s * B * H;
    const double* c = tr.c.data() + s * B * H;
    const double* hp = tr.h_prev.data() + s * B * H;
    for (std::size_t i = 0; i < B * H; ++i) {
      const double dz = dh[i] * (c[i] - hp[i]);
      const double dc = dh[i] * z[i];
      dhp[i] = dh[i] * (1.0 - z[i]);
      dac[i] = dc * (1.0 - c[i] * c[i]);
      daz[i] = dz * z[i] * (1.0 - z[i]);
    }
    k.gemm_tn_acc(dac.data(), rhx, cell.w_candidate.grad.data(), H, K, B);
    add_colsum(dac.data(), B, H, cell.b_candidate.grad);
    std::fill(drhx.begin(), drhx.end(), 0.0);
    k.gemm_nn_acc(dac.data(), cell.w_candidate.value.data(), drhx.data(), B, K, H);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t j = 0; j < H; ++j) {
        const std::size_t i = b * H + j;
        const double drh = drhx[b * K + j];
        const double dr = drh * hp[i];
        dhp[i] += drh * r[i];
        dar[i] = dr * r[i] * (1.0 - r[i]);
      }
    }
    k.gemm_tn_acc(daz.data(), hx, cell.w_update.grad.data(), H, K, B);
    k.gemm_tn_acc(dar.data(), hx, cell.w_reset.grad.data(), H, K, B);
    add_colsum(daz.data(), B, H, cell.b_update.grad);
    add_colsum(dar.data(), B, H, cell.b_reset.grad);
    std::fill(dhx.begin(), dhx.end(), 0.0);
    k.gemm_nn_acc(daz.data(), cell.w_update.value.data(), dhx.data(), B, K, H);
    k.gemm_nn_acc(dar.data(), cell.w_reset.value.data(), dhx.data(), B, K, H);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t j = 0; j < H; ++j) dhp[b * H + j] += dhx[b * K + j];
      if (want_dx) {
        double* dx = dxs.data() + (t * B + b) * F;
        for (std::size_t f = 0; f < F; ++f) dx[f] += dhx[b * K + H + f] + drhx[b * K + H + f];
      }
    }
    dh.swap(dhp);
  }
}

BiGru::BiGru(std::size_t hidden, std::size_t input) : forward("gru_fwd", hidden, input), backward("gru_bwd", hidden, input) {}

void BiGru::init(std::uint64_t seed) {
  forward.init(seed, 1);
  backward.init(seed, 2);
}

ParamRefs BiGru::parameters() {
  auto p = forward.parameters();
  auto q = backward.parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

Tensor bigru_forward(const BiGru& net, std::span<const double> xs, std::size_t batch, std::size_t steps,
                     BiGruTrace* trace) {
  if (steps == 0) throw InvalidArgument("BiGRU needs a non-empty sequence");
  const std::size_t H = net.forward.hidden;
  const Tensor hf = gru_forward(net.forward, xs, batch, steps, false, trace ? &trace->fwd : nullptr);
  const Tensor hb = gru_forward(net.backward, xs, batch, steps, true, trace ? &trace->bwd : nullptr);
  Tensor out({batch, 2 * H});
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(hf.data() + b * H, H, out.data() + b * 2 * H);
    std::copy_n(hb.data() + b * H, H, out.data() + b * 2 * H + H);
  }
  return out;
}

void bigru_backward(BiGru& net, const BiGruTrace& trace, const Tensor& d_out, std::span<double> dxs) {
  const std::size_t H = net.forward.hidden, B = trace.fwd.batch;
  Tensor df({B, H}), db({B, H});
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(d_out.data() + b * 2 * H, H, df.data() + b * H);
    std::copy_n(d_out.data() + b * 2 * H + H, H, db.data() + b * H);
  }
  gru_backward(net.forward, trace.fwd, df, dxs);
  gru_backward(net.backward, trace.bwd, db, dxs);
}

// ---------------------------------------------------------------- Conv1d

void Conv1dSpec::validate() const {
  if (vocab_size < 1 || embed_dim < 1 || filters_per_window < 1 || windows.empty())
    throw InvalidArgument("conv spec: sizes must be positive");
  for (auto h : windows)
    if (h < 1) throw InvalidArgument("conv spec: window sizes must be >= 1");
}

Conv1dMaxPool::Conv1dMaxPool(const Conv1dSpec& s) : spec(s), embedding("conv.embedding", {s.vocab_size, s.embed_dim}) {
  spec.validate();
  for (auto h : spec.windows) {
    filters.emplace_back("conv.w" + std::to_string(h), std::vector<std::size_t>{spec.filters_per_window, h * spec.embed_dim});
    biases.emplace_back("conv.b" + std::to_string(h), std::vector<std::size_t>{spec.filters_per_window});
  }
}

void Conv1dMaxPool::init(std::uint64_t seed) {
  init_uniform(embedding.value, 0.5, seed, name_stream(embedding.name));
  for (std::size_t w = 0; w < filters.size(); ++w) {
    const double fan_in = static_cast<double>(filters[w].value.cols());
    init_uniform(filters[w].value, std::sqrt(6.0 / (fan_in + static_cast<double>(spec.filters_per_window))), seed,
                 name_stream(filters[w].name));
    biases[w].value.fill(0.0);
  }
}

ParamRefs Conv1dMaxPool::parameters() {
  ParamRefs p{&embedding};
  for (std::size_t w = 0; w < filters.size(); ++w) {
    p.push_back(&filters[w]);
    p.push_back(&biases[w]);
  }
  return p;
}

std::vector<double> conv1d_maxpool(const Conv1dMaxPool& layer, std::span<const std::uint32_t> tokens,
                                   ConvTrace* trace) {
  const auto& spec = layer.spec;
  const std::size_t E = spec.embed_dim, nf = spec.filters_per_window;
  const std::size_t widest = *std::max_element(spec.windows.begin(), spec.windows.end());
  const std::size_t len = std::max(tokens.size(), widest);
  std::vector<double> m(len * E, 0.0);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] >= spec.vocab_size) throw InvalidArgument("token id out of vocabulary");
    std::copy_n(layer.embedding.value.data() + tokens[t] * E, E, m.data() + t * E);
  }
  const auto& k = simd::active();
  std::vector<double> out(spec.output_dim());
  std::vector<std::size_t> argmax(out.size());
  std::vector<double> pre(out.size());
  for (std::size_t w = 0; w < spec.windows.size(); ++w) {
    const std::size_t h = spec.windows[w];
    const std::size_t positions = len - h + 1;
    const double* W = layer.filters[w].value.data();
    for (std::size_t f = 0; f < nf; ++f) {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t best_pos = 0;
      for (std::size_t p = 0; p < positions; ++p) {
        const double v = k.dot(W + f * h * E, m.data() + p * E, h * E);
        if (v > best) {
          best = v;
          best_pos = p;
        }
      }
      best += layer.biases[w].value[f];
      const std::size_t o = w * nf + f;
      pre[o] = best;
      argmax[o] = best_pos;
      out[o] = std::max(0.0, best);
    }
  }
  if (trace) {
    trace->tokens.assign(tokens.begin(), tokens.end());
    trace->padded_len = len;
    trace->embedded = std::move(m);
    trace->argmax = std::move(argmax);
    trace->pre_max = std::move(pre);
  }
  return out;
}

void conv1d_maxpool_backward(Conv1dMaxPool& layer, const ConvTrace& tr, std::span<const double> d_out) {
  const auto& spec = layer.spec;
  const std::size_t E = spec.embed_dim, nf = spec.filters_per_window;
  if (d_out.size() != spec.output_dim()) throw InvalidArgument("conv backward: gradient size mismatch");
  const auto& k = simd::active();
  std::vector<double> dm(tr.padded_len * E, 0.0);
  for (std::size_t w = 0; w < spec.windows.size(); ++w) {
    const std::size_t h = spec.windows[w];
    for (std::size_t f = 0; f < nf; ++f) {
      const std::size_t o = w * nf + f;
      if (tr.pre_max[o] <= 0.0 || d_out[o] == 0.0) continue;
      const std::size_t p = tr.argmax[o];
      k.axpy(d_out[o], tr.embedded.data() + p * E, layer.filters[w].grad.data() + f * h * E, h * E);
      layer.biases[w].grad[f] += d_out[o];
      k.axpy(d_out[o], layer.filters[w].value.data() + f * h * E, dm.data() + p * E, h * E);
    }
  }
  for (std::size_t t = 0; t < tr.tokens.size(); ++t)
    k.axpy(1.0, dm.data() + t * E, layer.embedding.grad.data() + tr.tokens[t] * E, E);
}

// ---------------------------------------------------------------- MLP

Mlp::Mlp(std::string prefix, std::vector<std::size_t> layer_sizes) : sizes(std::move(layer_sizes)) {
  if (sizes.size() < 2) throw InvalidArgument("MLP needs at least input and output sizes");
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    weights.emplace_back(prefix + ".w" + std::to_string(l), std::vector<std::size_t>{sizes[l + 1], sizes[l]});
    biases.emplace_back(prefix + ".b" + std::to_string(l), std::vector<std::size_t>{sizes[l + 1]});
  }
}

void Mlp::init(std::uint64_t seed) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const double a = std::sqrt(6.0 / static_cast<double>(sizes[l] + sizes[l + 1]));
    init_uniform(weights[l].value, a, seed, name_stream(weights[l].name));
    biases[l].value.fill(0.0);
  }
}

ParamRefs Mlp::parameters() {
  ParamRefs p;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    p.push_back(&weights[l]);
    p.push_back(&biases[l]);
  }
  return p;
}

Tensor mlp_forward(const Mlp& mlp, const Tensor& x, MlpTrace* trace) {
  const std::size_t B = x.rows();
  if (x.cols() != mlp.sizes.front()) throw InvalidArgument("MLP input width mismatch");
  const auto& k = simd::active();
  Tensor cur = x;
  if (trace) {
    trace->inputs.clear();
    trace->pre.clear();
  }
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    const std::size_t in = mlp.sizes[l], out = mlp.sizes[l + 1];
    Tensor y({B, out});
    set_rows(y.data(), B, mlp.biases[l].value);
    k.gemm_nt(cur.data(), mlp.weights[l].value.data(), y.data(), B, out, in, true);
    if (trace) {
      trace->inputs.push_back(cur);
      trace->pre.push_back(y);
    }
    if (l + 1 < mlp.weights.size())
      for (double& v : y.span()) v = std::max(0.0, v);
    cur = std::move(y);
  }
  return cur;
}

Tensor mlp_backward(Mlp& mlp, const MlpTrace& trace, const Tensor& d_out) {
  const auto& k = simd::active();
  Tensor d = d_out;
  for (std::size_t l = mlp.weights.size(); l-- > 0;) {
    const std::size_t in = mlp.sizes[l], out = mlp.sizes[l + 1];
    const std::size_t B = d.rows();
    if (l + 1 < mlp.weights.size()) {
      const Tensor& pre = trace.pre[l];
      for (std::size_t i = 0; i < d.size(); ++i)
        if (pre[i] <= 0.0) d[i] = 0.0;
    }
    k.gemm_tn_acc(d.data(), trace.inputs[l].data(), mlp.weights[l].grad.data(), out, in, B);
    add_colsum(d.data(), B, out, mlp.biases[l].grad);
    Tensor dx({B, in});
    k.gemm_nn_acc(d.data(), mlp.weights[l].value.data(), dx.data(), B, in, out);
    d = std::move(dx);
  }
  return d;
}

// ---------------------------------------------------------------- loss / optimiser

double bce_loss(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw InvalidArgument("bce_loss: length mismatch");
  if (y_true.empty()) throw InvalidArgument("bce_loss: empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double p = std::clamp(y_pred[i], kProbClamp, 1.0 - kProbClamp);
    s += y_true[i] * std::log(p) + (1.0 - y_true[i]) * std::log(1.0 - p);
  }
  return -s / static_cast<double>(y_true.size());
}

double bce_with_logits(std::span<const double> y_true, std::span<const double> logits, std::span<double> d_logits) {
  if (y_true.size() != logits.size() || d_logits.size() != logits.size())
    throw InvalidArgument("bce_with_logits: length mismatch");
  std::vector<double> p(logits.size());
  const double n = static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = sigmoid(logits[i]);
    d_logits[i] = (p[i] - y_true[i]) / n;
  }
  return bce_loss(y_true, p);
}

Adam::Adam(ParamRefs params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = p.grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      p.value[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

// ---------------------------------------------------------------- checkpoints

Checkpoint Checkpoint::capture(nlohmann::ordered_json config, const ParamRefs& params) {
  Checkpoint c;
  c.config = std::move(config);
  for (auto* p : params) c.arrays.emplace_back(p->name, p->value);
  return c;
}

void Checkpoint::restore(const ParamRefs& params) const {
  if (params.size() != arrays.size()) throw FormatError("checkpoint parameter count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& [name, t] = arrays[k];
    if (name != params[k]->name) throw FormatError("checkpoint parameter '" + name + "' where '" + params[k]->name + "' expected");
    if (t.shape() != params[k]->value.shape()) throw FormatError("checkpoint shape mismatch for '" + name + "'");
    params[k]->value = t;
  }
}

void Checkpoint::save(std::ostream& out) const {
  nlohmann::ordered_json j;
  j["format"] = "takeoff-checkpoint";
  j["version"] = kVersion;
  j["config"] = config;
  auto& arr = j["arrays"] = nlohmann::ordered_json::array();
  for (const auto& [name, t] : arrays) {
    nlohmann::ordered_json a;
    a["name"] = name;
    a["shape"] = t.shape();
    a["data"] = std::vector<double>(t.span().begin(), t.span().end());
    arr.push_back(std::move(a));
  }
  out << j.dump() << '\n';
}

Checkpoint Checkpoint::load(std::istream& in) {
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("unreadable checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "takeoff-checkpoint") throw FormatError("not a checkpoint file");
  if (j.value("version", -1) != kVersion) throw FormatError("unsupported checkpoint version");
  Checkpoint c;
  c.config = j.at("config");
  for (const auto& a : j.at("arrays")) {
    Tensor t(a.at("shape").get<std::vector<std::size_t>>());
    const auto data = a.at("data").get<std::vector<double>>();
    if (data.size() != t.size()) throw FormatError("checkpoint array size mismatch");
    std::copy(data.begin(), data.end(), t.data());
    c.arrays.emplace_back(a.at("name").get<std::string>(), std::move(t));
  }
  return c;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  save(out);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  return load(in);
}

}  // namespace takeoff::nn
