#include "maskdiff/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace maskdiff {

namespace {

constexpr double kLnEps = 1e-5;

// y[t, out] = x[t, in] * W[in, out] + b[out]
void matmul_bias(const double* x, const double* w, const double* b, double* y,
                 std::size_t rows, std::size_t in, std::size_t out) {
  for (std::size_t t = 0; t < rows; ++t) {
    double* yr = y + t * out;
    if (b != nullptr)
      std::memcpy(yr, b, out * sizeof(double));
    else
      std::fill(yr, yr + out, 0.0);
    const double* xr = x + t * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xr[i];
      const double* wr = w + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wr[o];
    }
  }
}

// Accumulates dW += x^T dy and db += sum(dy); writes dx = dy W^T.
void matmul_backward(const double* x, const double* w, const double* dy,
                     double* dx, double* dw, double* db, std::size_t rows,
                     std::size_t in, std::size_t out) {
  for (std::size_t t = 0; t < rows; ++t) {
    const double* xr = x + t * in;
    const double* dyr = dy + t * out;
    if (db != nullptr)
      for (std::size_t o = 0; o < out; ++o) db[o] += dyr[o];
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xr[i];
      double* dwr = dw + i * out;
      const double* wr = w + i * out;
      double acc = 0.0;
      for (std::size_t o = 0; o < out; ++o) {
        dwr[o] += xv * dyr[o];
        acc += wr[o] * dyr[o];
      }
      if (dx != nullptr) dx[t * in + i] += acc;
    }
  }
}

void layernorm_forward(const double* x, const double* g, const double* b,
                       double* y, double* mean, double* rstd, std::size_t rows,
                       std::size_t dim) {
  for (std::size_t t = 0; t < rows; ++t) {
    const double* xr = x + t * dim;
    double m = 0.0;
    for (std::size_t i = 0; i < dim; ++i) m += xr[i];
    m /= static_cast<double>(dim);
    double var = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = xr[i] - m;
      var += d * d;
    }
    var /= static_cast<double>(dim);
    const double r = 1.0 / std::sqrt(var + kLnEps);
    mean[t] = m;
    rstd[t] = r;
    double* yr = y + t * dim;
    for (std::size_t i = 0; i < dim; ++i) yr[i] = g[i] * (xr[i] - m) * r + b[i];
  }
}

// dx += backward(dy); accumulates dg, db.
void layernorm_backward(const double* x, const double* g, const double* mean,
                        const double* rstd, const double* dy, double* dx,
                        double* dg, double* db, std::size_t rows,
                        std::size_t dim) {
  for (std::size_t t = 0; t < rows; ++t) {
    const double* xr = x + t * dim;
    const double* dyr = dy + t * dim;
    const double m = mean[t];
    const double r = rstd[t];
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double xhat = (xr[i] - m) * r;
      const double dxhat = dyr[i] * g[i];
      dg[i] += dyr[i] * xhat;
      db[i] += dyr[i];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
    }
    const double inv_dim = 1.0 / static_cast<double>(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      const double xhat = (xr[i] - m) * r;
      const double dxhat = dyr[i] * g[i];
      dx[t * dim + i] +=
          r * (dxhat - inv_dim * sum_dxhat - xhat * inv_dim * sum_dxhat_xhat);
    }
  }
}

double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z * M_SQRT1_2)); }

double gelu_grad(double z) {
  const double cdf = 0.5 * (1.0 + std::erf(z * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
  return cdf + z * pdf;
}

}  // namespace

void TinyTransformerConfig::validate() const {
  if (vocab_size == 0) throw std::invalid_argument("transformer: vocab_size 0");
  if (n_layers == 0) throw std::invalid_argument("transformer: n_layers 0");
  if (d_model == 0 || d_model % n_heads != 0)
    throw std::invalid_argument("transformer: d_model must be a multiple of heads");
  if (max_seq == 0) throw std::invalid_argument("transformer: max_seq 0");
}

struct TinyTransformer::LayerCache {
  std::vector<double> h1, q, k, v, probs, att, x_mid, h2, z1, f;
  std::vector<double> mean1, rstd1, mean2, rstd2;
};

struct TinyTransformer::ForwardCache {
  std::size_t len = 0;
  std::vector<std::vector<double>> x;  // x[l] = input to layer l; x[L] = final
  std::vector<LayerCache> layers;
  std::vector<double> y, meanf, rstdf;  // final layernorm
  std::vector<double> logits;
};

TinyTransformer::TinyTransformer(const TinyTransformerConfig& config)
    : config_(config) {
  config_.validate();
  head_dim_ = config_.d_model / config_.n_heads;
  attn_scale_ = 1.0 / std::sqrt(static_cast<double>(head_dim_));

  const std::size_t V = config_.vocab_size;
  const std::size_t D = config_.d_model;
  const std::size_t F = config_.d_ff;
  const std::size_t M = config_.max_seq;

  std::size_t offset = 0;
  auto add = [&](const std::string& name, std::vector<std::size_t> shape) {
    std::size_t size = 1;
    for (std::size_t s : shape) size *= s;
    manifest_.push_back({name, std::move(shape), offset, size});
    offset += size;
  };
  add("tok_emb", {V, D});
  add("pos_emb", {M, D});
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add(p + "ln1.g", {D});
    add(p + "ln1.b", {D});
    add(p + "wq", {D, D});
    add(p + "bq", {D});
    add(p + "wk", {D, D});
    add(p + "bk", {D});
    add(p + "wv", {D, D});
    add(p + "bv", {D});
    add(p + "wo", {D, D});
    add(p + "bo", {D});
    add(p + "ln2.g", {D});
    add(p + "ln2.b", {D});
    add(p + "wf1", {D, F});
    add(p + "bf1", {F});
    add(p + "wf2", {F, D});
    add(p + "bf2", {D});
  }
  add("lnf.g", {D});
  add("lnf.b", {D});
  add("head", {D, V});
  params_.assign(offset, 0.0);

  Rng rng(config_.param_seed);
  for (const auto& info : manifest_) {
    double* data = params_.data() + info.offset;
    const auto dot = info.name.rfind('.');
    const std::string leaf =
        dot == std::string::npos ? info.name : info.name.substr(dot + 1);
    const bool is_gain = leaf == "g";
    const bool is_bias = !leaf.empty() && leaf[0] == 'b';
    if (is_gain) {
      std::fill(data, data + info.size, 1.0);
    } else if (is_bias) {
      // biases stay zero
    } else if (info.name == "head" && config_.zero_init_head) {
      // zero head gives uniform logits at initialization
    } else {
      for (std::size_t i = 0; i < info.size; ++i)
        data[i] = config_.init_std * rng.normal();
    }
  }
}

const double* TinyTransformer::tensor(const std::string& name) const {
  for (const auto& info : manifest_)
    if (info.name == name) return params_.data() + info.offset;
  throw std::logic_error("transformer: unknown tensor " + name);
}

double* TinyTransformer::tensor_mut(std::vector<double>& storage,
                                    const std::string& name) const {
  for (const auto& info : manifest_)
    if (info.name == name) return storage.data() + info.offset;
  throw std::logic_error("transformer: unknown tensor " + name);
}

void TinyTransformer::run_forward(const TokenSeq& toks,
                                  ForwardCache& cache) const {
  const std::size_t T = toks.size();
  const std::size_t D = config_.d_model;
  const std::size_t F = config_.d_ff;
  const std::size_t H = config_.n_heads;
  const std::size_t dh = head_dim_;
  const std::size_t V = config_.vocab_size;
  if (T == 0) throw std::invalid_argument("transformer: empty sequence");
  if (T > config_.max_seq)
    throw std::invalid_argument("transformer: sequence longer than max_seq");
  for (TokenId tok : toks)
    if (tok >= V) throw std::invalid_argument("transformer: token id out of range");

  cache.len = T;
  cache.x.assign(config_.n_layers + 1, std::vector<double>(T * D, 0.0));
  cache.layers.assign(config_.n_layers, LayerCache{});

  const double* tok_emb = tensor("tok_emb");
  const double* pos_emb = tensor("pos_emb");
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < D; ++d)
      cache.x[0][t * D + d] = tok_emb[toks[t] * D + d] + pos_emb[t * D + d];

  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerCache& lc = cache.layers[l];
    const std::vector<double>& x = cache.x[l];
    lc.h1.assign(T * D, 0.0);
    lc.mean1.assign(T, 0.0);
    lc.rstd1.assign(T, 0.0);
    layernorm_forward(x.data(), tensor(p + "ln1.g"), tensor(p + "ln1.b"),
                      lc.h1.data(), lc.mean1.data(), lc.rstd1.data(), T, D);

    lc.q.assign(T * D, 0.0);
    lc.k.assign(T * D, 0.0);
    lc.v.assign(T * D, 0.0);
    matmul_bias(lc.h1.data(), tensor(p + "wq"), tensor(p + "bq"), lc.q.data(), T, D, D);
    matmul_bias(lc.h1.data(), tensor(p + "wk"), tensor(p + "bk"), lc.k.data(), T, D, D);
    matmul_bias(lc.h1.data(), tensor(p + "wv"), tensor(p + "bv"), lc.v.data(), T, D, D);

    lc.probs.assign(H * T * T, 0.0);
    lc.att.assign(T * D, 0.0);
    std::vector<double> scores(T);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t t = 0; t < T; ++t) {
        const double* qr = lc.q.data() + t * D + h * dh;
        double max_score = -1e300;
        for (std::size_t u = 0; u < T; ++u) {
          const double* kr = lc.k.data() + u * D + h * dh;
          double s = 0.0;
          for (std::size_t d = 0; d < dh; ++d) s += qr[d] * kr[d];
          s *= attn_scale_;
          scores[u] = s;
          max_score = std::max(max_score, s);
        }
        double z = 0.0;
        double* pr = lc.probs.data() + (h * T + t) * T;
        for (std::size_t u = 0; u < T; ++u) {
          pr[u] = std::exp(scores[u] - max_score);
          z += pr[u];
        }
        for (std::size_t u = 0; u < T; ++u) pr[u] /= z;
        double* ar = lc.att.data() + t * D + h * dh;
        for (std::size_t u = 0; u < T; ++u) {
          const double* vr = lc.v.data() + u * D + h * dh;
          const double pw = pr[u];
          for (std::size_t d = 0; d < dh; ++d) ar[d] += pw * vr[d];
        }
      }
    }

    lc.x_mid = x;
    std::vector<double> attn_out(T * D, 0.0);
    matmul_bias(lc.att.data(), tensor(p + "wo"), tensor(p + "bo"),
                attn_out.data(), T, D, D);
    for (std::size_t i = 0; i < T * D; ++i) lc.x_mid[i] += attn_out[i];

    lc.h2.assign(T * D, 0.0);
    lc.mean2.assign(T, 0.0);
    lc.rstd2.assign(T, 0.0);
    layernorm_forward(lc.x_mid.data(), tensor(p + "ln2.g"), tensor(p + "ln2.b"),
                      lc.h2.data(), lc.mean2.data(), lc.rstd2.data(), T, D);
    lc.z1.assign(T * F, 0.0);
    matmul_bias(lc.h2.data(), tensor(p + "wf1"), tensor(p + "bf1"), lc.z1.data(),
                T, D, F);
    lc.f.resize(T * F);
    for (std::size_t i = 0; i < T * F; ++i) lc.f[i] = gelu(lc.z1[i]);

    std::vector<double>& x_next = cache.x[l + 1];
    x_next = lc.x_mid;
    std::vector<double> ff_out(T * D, 0.0);
    matmul_bias(lc.f.data(), tensor(p + "wf2"), tensor(p + "bf2"), ff_out.data(),
                T, F, D);
    for (std::size_t i = 0; i < T * D; ++i) x_next[i] += ff_out[i];
  }

  cache.y.assign(T * D, 0.0);
  cache.meanf.assign(T, 0.0);
  cache.rstdf.assign(T, 0.0);
  layernorm_forward(cache.x[config_.n_layers].data(), tensor("lnf.g"),
                    tensor("lnf.b"), cache.y.data(), cache.meanf.data(),
                    cache.rstdf.data(), T, D);
  cache.logits.assign(T * V, 0.0);
  matmul_bias(cache.y.data(), tensor("head"), nullptr, cache.logits.data(), T, D,
              V);
}

void TinyTransformer::run_backward(const TokenSeq& toks,
                                   const ForwardCache& cache,
                                   const std::vector<double>& dlogits,
                                   std::vector<double>& grad) const {
  const std::size_t T = cache.len;
  const std::size_t D = config_.d_model;
  const std::size_t F = config_.d_ff;
  const std::size_t H = config_.n_heads;
  const std::size_t dh = head_dim_;
  const std::size_t V = config_.vocab_size;

  std::vector<double> dy(T * D, 0.0);
  matmul_backward(cache.y.data(), tensor("head"), dlogits.data(), dy.data(),
                  tensor_mut(grad, "head"), nullptr, T, D, V);

  std::vector<double> dx(T * D, 0.0);
  layernorm_backward(cache.x[config_.n_layers].data(), tensor("lnf.g"),
                     cache.meanf.data(), cache.rstdf.data(), dy.data(), dx.data(),
                     tensor_mut(grad, "lnf.g"), tensor_mut(grad, "lnf.b"), T, D);

  for (std::size_t l = config_.n_layers; l-- > 0;) {
    const std::string p = "layer" + std::to_string(l) + ".";
    const LayerCache& lc = cache.layers[l];

    // FFN block: x_next = x_mid + gelu(LN2(x_mid) W1 + b1) W2 + b2
    std::vector<double> df(T * F, 0.0);
    matmul_backward(lc.f.data(), tensor(p + "wf2"), dx.data(), df.data(),
                    tensor_mut(grad, p + "wf2"), tensor_mut(grad, p + "bf2"), T,
                    F, D);
    std::vector<double> dz1(T * F);
    for (std::size_t i = 0; i < T * F; ++i) dz1[i] = df[i] * gelu_grad(lc.z1[i]);
    std::vector<double> dh2(T * D, 0.0);
    matmul_backward(lc.h2.data(), tensor(p + "wf1"), dz1.data(), dh2.data(),
                    tensor_mut(grad, p + "wf1"), tensor_mut(grad, p + "bf1"), T,
                    D, F);
    // residual: dx_mid starts as dx (carried through the skip connection)
    std::vector<double> dx_mid = dx;
    layernorm_backward(lc.x_mid.data(), tensor(p + "ln2.g"), lc.mean2.data(),
                       lc.rstd2.data(), dh2.data(), dx_mid.data(),
                       tensor_mut(grad, p + "ln2.g"),
                       tensor_mut(grad, p + "ln2.b"), T, D);

    // Attention block: x_mid = x + Attn(LN1(x)) Wo + bo
    std::vector<double> datt(T * D, 0.0);
    matmul_backward(lc.att.data(), tensor(p + "wo"), dx_mid.data(), datt.data(),
                    tensor_mut(grad, p + "wo"), tensor_mut(grad, p + "bo"), T, D,
                    D);

    std::vector<double> dq(T * D, 0.0), dk(T * D, 0.0), dv(T * D, 0.0);
    std::vector<double> dp(T), dscores(T);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t t = 0; t < T; ++t) {
        const double* datt_r = datt.data() + t * D + h * dh;
        const double* pr = lc.probs.data() + (h * T + t) * T;
        double dot = 0.0;
        for (std::size_t u = 0; u < T; ++u) {
          const double* vr = lc.v.data() + u * D + h * dh;
          double acc = 0.0;
          for (std::size_t d = 0; d < dh; ++d) acc += datt_r[d] * vr[d];
          dp[u] = acc;
          dot += pr[u] * acc;
          double* dvr = dv.data() + u * D + h * dh;
          const double pw = pr[u];
          for (std::size_t d = 0; d < dh; ++d) dvr[d] += pw * datt_r[d];
        }
        for (std::size_t u = 0; u < T; ++u) dscores[u] = pr[u] * (dp[u] - dot);
        const double* qr = lc.q.data() + t * D + h * dh;
        double* dqr = dq.data() + t * D + h * dh;
        for (std::size_t u = 0; u < T; ++u) {
          const double ds = dscores[u] * attn_scale_;
          const double* kr = lc.k.data() + u * D + h * dh;
          double* dkr = dk.data() + u * D + h * dh;
          for (std::size_t d = 0; d < dh; ++d) {
            dqr[d] += ds * kr[d];
            dkr[d] += ds * qr[d];
          }
        }
      }
    }

    std::vector<double> dh1(T * D, 0.0);
    matmul_backward(lc.h1.data(), tensor(p + "wq"), dq.data(), dh1.data(),
                    tensor_mut(grad, p + "wq"), tensor_mut(grad, p + "bq"), T, D,
                    D);
    matmul_backward(lc.h1.data(), tensor(p + "wk"), dk.data(), dh1.data(),
                    tensor_mut(grad, p + "wk"), tensor_mut(grad, p + "bk"), T, D,
                    D);
    matmul_backward(lc.h1.data(), tensor(p + "wv"), dv.data(), dh1.data(),
                    tensor_mut(grad, p + "wv"), tensor_mut(grad, p + "bv"), T, D,
                    D);

    // residual: gradient w.r.t. the layer input
    dx = dx_mid;
    layernorm_backward(cache.x[l].data(), tensor(p + "ln1.g"), lc.mean1.data(),
                       lc.rstd1.data(), dh1.data(), dx.data(),
                       tensor_mut(grad, p + "ln1.g"),
                       tensor_mut(grad, p + "ln1.b"), T, D);
  }

  double* dtok = tensor_mut(grad, "tok_emb");
  double* dpos = tensor_mut(grad, "pos_emb");
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < D; ++d) {
      dtok[toks[t] * D + d] += dx[t * D + d];
      dpos[t * D + d] += dx[t * D + d];
    }
}

DenoiserOutput TinyTransformer::denoise(const TokenSeq& x_t) const {
  ForwardCache cache;
  run_forward(x_t, cache);
  return DenoiserOutput(std::move(cache.logits), x_t.size(), config_.vocab_size);
}

double TinyTransformer::batch_loss(const TrainBatch& batch,
                                   const Vocabulary& vocab) const {
  double total = 0.0;
  const std::size_t V = config_.vocab_size;
  if (batch.x0.size() != batch.xt.size() || batch.x0.size() != batch.t.size())
    throw std::invalid_argument("batch: ragged fields");
  for (std::size_t b = 0; b < batch.x0.size(); ++b) {
    ForwardCache cache;
    run_forward(batch.xt[b], cache);
    DenoiserOutput out(std::move(cache.logits), batch.xt[b].size(), V);
    const auto lp = out.log_probs();
    double item = 0.0;
    for (std::size_t i = 0; i < batch.xt[b].size(); ++i)
      if (batch.xt[b][i] == vocab.mask_id())
        item += -lp[i * V + batch.x0[b][i]];
    total += item / batch.t[b];
  }
  return total / static_cast<double>(batch.x0.size());
}

double TinyTransformer::loss_gradient(const TrainBatch& batch,
                                      const Vocabulary& vocab,
                                      std::vector<double>& grad) const {
  if (batch.x0.size() != batch.xt.size() || batch.x0.size() != batch.t.size())
    throw std::invalid_argument("batch: ragged fields");
  grad.assign(params_.size(), 0.0);
  const std::size_t V = config_.vocab_size;
  const double inv_batch = 1.0 / static_cast<double>(batch.x0.size());
  double total = 0.0;
  for (std::size_t b = 0; b < batch.x0.size(); ++b) {
    const TokenSeq& xt = batch.xt[b];
    const TokenSeq& x0 = batch.x0[b];
    const double t = batch.t[b];
    if (x0.size() != xt.size())
      throw std::invalid_argument("batch: x0/xt length mismatch");
    if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("batch: t outside (0,1]");

    ForwardCache cache;
    run_forward(xt, cache);
    const std::size_t T = xt.size();
    // dL/dlogits = w * (softmax - onehot) at masked positions
    std::vector<double> dlogits(T * V, 0.0);
    const double w = inv_batch / t;
    for (std::size_t i = 0; i < T; ++i) {
      if (xt[i] != vocab.mask_id()) continue;
      const double* row = cache.logits.data() + i * V;
      const double m = *std::max_element(row, row + V);
      double z = 0.0;
      for (std::size_t v = 0; v < V; ++v) z += std::exp(row[v] - m);
      const double log_z = m + std::log(z);
      total += (log_z - row[x0[i]]) / t;
      double* dr = dlogits.data() + i * V;
      for (std::size_t v = 0; v < V; ++v) dr[v] = w * std::exp(row[v] - log_z);
      dr[x0[i]] -= w;
    }
    run_backward(xt, cache, dlogits, grad);
  }
  const double loss = total * inv_batch;
  if (!std::isfinite(loss))
    throw std::runtime_error("training: non-finite loss");
  return loss;
}

namespace {

constexpr char kMagic[8] = {'M', 'D', 'L', 'M', 'C', 'K', 'P', '1'};

nlohmann::json config_to_json(const TinyTransformerConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},       {"d_model", c.d_model},
          {"d_ff", c.d_ff},             {"max_seq", c.max_seq},
          {"param_seed", c.param_seed}, {"init_std", c.init_std},
          {"zero_init_head", c.zero_init_head}};
}

TinyTransformerConfig config_from_json(const nlohmann::json& j) {
  TinyTransformerConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.max_seq = j.at("max_seq").get<std::size_t>();
  c.param_seed = j.at("param_seed").get<std::uint64_t>();
  c.init_std = j.at("init_std").get<double>();
  c.zero_init_head = j.at("zero_init_head").get<bool>();
  return c;
}

void write_container(const std::string& path, const nlohmann::json& header,
                     const std::vector<double>& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  const std::string header_text = header.dump();
  const std::uint64_t header_len = header_text.size();
  f.write(kMagic, sizeof(kMagic));
  f.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  f.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

struct Container {
  nlohmann::json header;
  std::vector<double> data;
};

Container read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint64_t header_len = 0;
  f.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header_text(header_len, '\0');
  f.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!f) throw std::runtime_error("checkpoint: truncated header in " + path);
  Container c;
  c.header = nlohmann::json::parse(header_text);
  const std::uint64_t count = c.header.at("value_count").get<std::uint64_t>();
  c.data.resize(count);
  f.read(reinterpret_cast<char*>(c.data.data()),
         static_cast<std::streamsize>(count * sizeof(double)));
  if (!f) throw std::runtime_error("checkpoint: truncated data in " + path);
  return c;
}

nlohmann::json manifest_to_json(const std::vector<TensorInfo>& manifest) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& info : manifest)
    tensors.push_back({{"name", info.name},
                       {"shape", info.shape},
                       {"offset", info.offset},
                       {"size", info.size}});
  return tensors;
}

std::vector<TensorInfo> manifest_from_json(const nlohmann::json& tensors) {
  std::vector<TensorInfo> out;
  for (const auto& t : tensors)
    out.push_back({t.at("name").get<std::string>(),
                   t.at("shape").get<std::vector<std::size_t>>(),
                   t.at("offset").get<std::size_t>(),
                   t.at("size").get<std::size_t>()});
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const TinyTransformer& model,
                     const Rng& rng) {
  nlohmann::json header;
  header["version"] = 1;
  header["kind"] = "model";
  header["config"] = config_to_json(model.config());
  header["tensors"] = manifest_to_json(model.manifest());
  header["rng_state"] = rng.state();
  header["value_count"] = model.params().size();
  write_container(path, header, model.params());
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  Container c = read_container(path);
  if (c.header.at("kind").get<std::string>() != "model")
    throw std::runtime_error("checkpoint: not a model container: " + path);
  TinyTransformer model(config_from_json(c.header.at("config")));
  if (model.params().size() != c.data.size())
    throw std::runtime_error("checkpoint: parameter count mismatch in " + path);
  model.params() = std::move(c.data);
  Rng rng;
  rng.set_state(c.header.at("rng_state").get<std::array<std::uint64_t, 4>>());
  return {std::move(model), rng};
}

void save_tensor_bundle(const std::string& path,
                        const std::vector<TensorInfo>& manifest,
                        const std::vector<double>& data,
                        const std::string& meta_json) {
  nlohmann::json header;
  header["version"] = 1;
  header["kind"] = "bundle";
  header["tensors"] = manifest_to_json(manifest);
  header["meta"] = nlohmann::json::parse(meta_json.empty() ? "{}" : meta_json);
  header["value_count"] = data.size();
  write_container(path, header, data);
}

LoadedBundle load_tensor_bundle(const std::string& path) {
  Container c = read_container(path);
  if (c.header.at("kind").get<std::string>() != "bundle")
    throw std::runtime_error("checkpoint: not a bundle container: " + path);
  return {manifest_from_json(c.header.at("tensors")), std::move(c.data),
          c.header.at("meta").dump()};
}

std::string checkpoint_header_json(const std::string& path) {
  return read_container(path).header.dump(2);
}

}  // namespace maskdiff
