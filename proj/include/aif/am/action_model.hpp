// Residual vector-quantized autoencoder over fixed-length action sequences.
//
// encode: flattened h x action_dim sequence -> 2-hidden-layer MLP -> embedding
// quantize: two residual layers; each picks the nearest code (ties -> lowest
//           index); the quantized embedding is the sum of the chosen codes
// decode: embedding -> MLP -> sequence, clamped to [-pi, pi]
//
// Training: encoder/decoder by gradient (straight-through the quantizer on
// the reconstruction path, commitment terms pulling the embedding toward the
// chosen codes), codebooks by exponential moving averages with dead-code
// reseeding. The K^2 code pairs form the enumerable abstract-action menu.
#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "aif/core/nn.hpp"
#include "aif/core/rng.hpp"
#include "aif/core/tape.hpp"
#include "aif/core/tensor.hpp"

namespace aif::am {

inline constexpr int kNumQuantizerLayers = 2;

struct ActionModelConfig {
  int h = 50;             // action-sequence length
  int action_dim = 6;
  int embed_dim = 32;
  int K = 8;              // codes per quantizer layer
  int hidden = 128;       // width of the 2 hidden MLP layers
  double lambda_mse = 1.0;
  double lambda_commit = 5.0;
  double ema_decay = 0.99;
  double reseed_floor = 0.5;  // reseed a code when its EMA count decays below
  uint64_t seed = 1;

  int flat_dim() const { return h * action_dim; }
  void validate() const {
    AIF_CHECK(h >= 1, "action sequence length must be >= 1");
    AIF_CHECK(lambda_mse > 0 && lambda_commit > 0, "loss coefficients must be positive");
    AIF_CHECK(K >= 1 && embed_dim >= 1, "codebook dims must be positive");
    AIF_CHECK(ema_decay >= 0.0 && ema_decay < 1.0, "ema decay outside [0,1)");
  }
};

template <class T>
struct AbstractAction {
  int k1 = 0, k2 = 0;     // code indices, one per quantizer layer
  Tensor<T> embedding;    // [embed_dim] == layer1[k1] + layer2[k2]
};

// Row-wise quantization of a batch of embeddings.
template <class T>
struct QuantRows {
  std::vector<int> k1, k2;   // chosen code per row and layer
  Tensor<T> ahat;            // [B, D] quantized embeddings (c1 + c2)
  Tensor<T> r1, r2;          // residuals after layer 1 / layer 2
};

template <class T>
struct AmLoss {
  double mse = 0, commit = 0, total = 0;
  typename Tape<T>::Id total_id = -1;
};

template <class T>
class ActionModel {
 public:
  using Id = typename Tape<T>::Id;

  ActionModelConfig cfg;
  ParamSet<T> params;

  explicit ActionModel(ActionModelConfig c) : cfg(std::move(c)) {
    cfg.validate();
    Rng rng(cfg.seed);
    enc_ = build_mlp<T>(params, rng, "enc", {cfg.flat_dim(), cfg.hidden, cfg.hidden, cfg.embed_dim});
    dec_ = build_mlp<T>(params, rng, "dec", {cfg.embed_dim, cfg.hidden, cfg.hidden, cfg.flat_dim()});
    // Codebooks live in the same ParamSet so checkpoints cover them, but they
    // are trained by EMA, never by gradient (no graph node ever reads them).
    for (int l = 0; l < kNumQuantizerLayers; ++l) {
      Tensor<T> init({cfg.K, cfg.embed_dim});
      for (int64_t i = 0; i < init.size(); ++i) init[i] = static_cast<T>(rng.uniform(-0.1, 0.1));
      cb_code_[l] = params.add("cb.layer" + std::to_string(l), std::move(init));
      cb_cnt_[l] = params.add("cb.count" + std::to_string(l), Tensor<T>::full({cfg.K}, T(1)));
      Tensor<T> sums({cfg.K, cfg.embed_dim});
      for (int k = 0; k < cfg.K; ++k)
        for (int d = 0; d < cfg.embed_dim; ++d)
          sums[static_cast<int64_t>(k) * cfg.embed_dim + d] =
              params.at(cb_code_[l])[static_cast<int64_t>(k) * cfg.embed_dim + d];
      cb_sum_[l] = params.add("cb.sum" + std::to_string(l), std::move(sums));
    }
  }

  const Tensor<T>& codes(int layer) const { return params.at(cb_code_[layer]); }
  const Tensor<T>& ema_counts(int layer) const { return params.at(cb_cnt_[layer]); }

  // ---- graph pieces ------------------------------------------------------

  // a_rows: [B, h*action_dim] flattened sequences -> [B, embed_dim]
  Id encode(Tape<T>& tape, const TapeParams<T>& tp, Id a_rows) const {
    AIF_CHECK(tape.val(a_rows).cols() == cfg.flat_dim(),
              "encode: expected flattened sequences of length h*action_dim (" +
                  std::to_string(cfg.flat_dim()) + "), got width " +
                  std::to_string(tape.val(a_rows).cols()));
    return mlp_forward(tape, tp, enc_, a_rows);
  }

  // embeds: [B, embed_dim] -> [B, h*action_dim], clamped to [-pi, pi]
  Id decode(Tape<T>& tape, const TapeParams<T>& tp, Id embeds) const {
    const T pi = static_cast<T>(M_PI);
    return tape.clamp(mlp_forward(tape, tp, dec_, embeds), -pi, pi);
  }

  // ---- value-level ops (pure; used by the planner and audits) ------------

  Tensor<T> encode_values(const Tensor<T>& a_rows) const {
    Tape<T> tape;
    tape.grad_enabled = false;
    const auto tp = upload(tape, params, false);
    return tape.val(encode(tape, tp, tape.input(a_rows)));
  }

  Tensor<T> decode_values(const Tensor<T>& embeds) const {
    Tape<T> tape;
    tape.grad_enabled = false;
    const auto tp = upload(tape, params, false);
    return tape.val(decode(tape, tp, tape.input(embeds)));
  }

  // Nearest code by squared Euclidean distance; ties -> lowest index.
  int nearest_code(int layer, const T* v) const {
    const Tensor<T>& C = codes(layer);
    int best = 0;
    double best_d = -1.0;
    for (int k = 0; k < cfg.K; ++k) {
      double d = 0;
      const T* c = C.ptr() + static_cast<int64_t>(k) * cfg.embed_dim;
      for (int i = 0; i < cfg.embed_dim; ++i) {
        const double x = static_cast<double>(v[i]) - static_cast<double>(c[i]);
        d += x * x;
      }
      if (best_d < 0 || d < best_d) {
        best_d = d;
        best = k;
      }
    }
    return best;
  }

  QuantRows<T> quantize_rows(const Tensor<T>& A) const {
    AIF_CHECK(A.cols() == cfg.embed_dim, "quantize: embedding width mismatch");
    const int B = A.rows(), D = cfg.embed_dim;
    QuantRows<T> q;
    q.k1.resize(static_cast<size_t>(B));
    q.k2.resize(static_cast<size_t>(B));
    q.ahat = Tensor<T>({B, D});
    q.r1 = Tensor<T>({B, D});
    q.r2 = Tensor<T>({B, D});
    for (int b = 0; b < B; ++b) {
      const T* a = A.ptr() + static_cast<int64_t>(b) * D;
      const int k1 = nearest_code(0, a);
      const T* c1 = codes(0).ptr() + static_cast<int64_t>(k1) * D;
      T* r1 = q.r1.ptr() + static_cast<int64_t>(b) * D;
      for (int i = 0; i < D; ++i) r1[i] = a[i] - c1[i];
      const int k2 = nearest_code(1, r1);
      const T* c2 = codes(1).ptr() + static_cast<int64_t>(k2) * D;
      T* r2 = q.r2.ptr() + static_cast<int64_t>(b) * D;
      T* ah = q.ahat.ptr() + static_cast<int64_t>(b) * D;
      for (int i = 0; i < D; ++i) {
        r2[i] = r1[i] - c2[i];
        ah[i] = c1[i] + c2[i];
      }
      q.k1[static_cast<size_t>(b)] = k1;
      q.k2[static_cast<size_t>(b)] = k2;
    }
    return q;
  }

  AbstractAction<T> quantize_one(const Tensor<T>& a) const {
    Tensor<T> row({1, cfg.embed_dim});
    AIF_CHECK(a.size() == cfg.embed_dim, "quantize: embedding width mismatch");
    std::copy_n(a.ptr(), cfg.embed_dim, row.ptr());
    const QuantRows<T> q = quantize_rows(row);
    AbstractAction<T> out;
    out.k1 = q.k1[0];
    out.k2 = q.k2[0];
    out.embedding = Tensor<T>({cfg.embed_dim});
    std::copy_n(q.ahat.ptr(), cfg.embed_dim, out.embedding.ptr());
    return out;
  }

  // All K^2 code pairs in lexicographic (k1, k2) order.
  std::vector<AbstractAction<T>> enumerate_abstract_actions() const {
    std::vector<AbstractAction<T>> out;
    out.reserve(static_cast<size_t>(cfg.K) * cfg.K);
    const int D = cfg.embed_dim;
    for (int i = 0; i < cfg.K; ++i)
      for (int j = 0; j < cfg.K; ++j) {
        AbstractAction<T> a;
        a.k1 = i;
        a.k2 = j;
        a.embedding = Tensor<T>({D});
        const T* c1 = codes(0).ptr() + static_cast<int64_t>(i) * D;
        const T* c2 = codes(1).ptr() + static_cast<int64_t>(j) * D;
        for (int d = 0; d < D; ++d) a.embedding[d] = c1[d] + c2[d];
        out.push_back(std::move(a));
      }
    return out;
  }

  // ---- training ----------------------------------------------------------

  // a_batch: [B, h*action_dim]. If fixed is given, its code selection is used
  // (FD gradient checks hold the discrete selection constant); otherwise the
  // selection is computed from the current encoder output.
  AmLoss<T> am_loss(Tape<T>& tape, const TapeParams<T>& tp, const Tensor<T>& a_batch,
                    const QuantRows<T>* fixed = nullptr, QuantRows<T>* q_out = nullptr) const {
    const int B = a_batch.rows(), D = cfg.embed_dim;
    const Id a_id = tape.input(a_batch);
    const Id A = encode(tape, tp, a_id);
    // copy: later pushes may reallocate the tape's node storage
    const Tensor<T> Aval = tape.val(A);

    QuantRows<T> q_local;
    const QuantRows<T>* q = fixed;
    if (!q) {
      q_local = quantize_rows(Aval);
      q = &q_local;
    } else {
      AIF_CHECK(static_cast<int>(q->k1.size()) == B, "am_loss: fixed selection batch mismatch");
    }

    // gather chosen codes per row
    Tensor<T> c1_rows({B, D}), c2_rows({B, D}), ahat_rows({B, D});
    for (int b = 0; b < B; ++b)
      for (int d = 0; d < D; ++d) {
        const T c1 = codes(0)[static_cast<int64_t>(q->k1[static_cast<size_t>(b)]) * D + d];
        const T c2 = codes(1)[static_cast<int64_t>(q->k2[static_cast<size_t>(b)]) * D + d];
        c1_rows[static_cast<int64_t>(b) * D + d] = c1;
        c2_rows[static_cast<int64_t>(b) * D + d] = c2;
        ahat_rows[static_cast<int64_t>(b) * D + d] = c1 + c2;
      }

    // straight-through: forward the quantized embedding, backward identity.
    // In the tape's relaxed mode the quantizer is bypassed entirely (the
    // decoder sees the raw embedding), which makes the whole loss exactly
    // differentiable for finite-difference checks.
    Id ahat_st;
    if (tape.st_relaxed) {
      ahat_st = A;
    } else {
      Tensor<T> delta(ahat_rows.shape);
      for (int64_t i = 0; i < delta.size(); ++i) delta[i] = ahat_rows[i] - Aval[i];
      ahat_st = tape.scale_add(A, T(1), tape.constant(std::move(delta)), T(1));
    }

    const Id recon = decode(tape, tp, ahat_st);
    const T inv_flat = static_cast<T>(1.0 / (static_cast<double>(B) * cfg.flat_dim()));
    const T inv_emb = static_cast<T>(1.0 / (static_cast<double>(B) * D));
    const Id mse = tape.scale(tape.sse(recon, a_id), inv_flat);
    // commitment: layer 1 pulls A toward c1; layer 2 pulls (A - c1) toward c2
    const Id commit1 = tape.scale(tape.sse(A, tape.constant(c1_rows)), inv_emb);
    const Id resid1 = tape.sub(A, tape.constant(c1_rows));
    const Id commit2 = tape.scale(tape.sse(resid1, tape.constant(c2_rows)), inv_emb);
    const Id commit = tape.add_scalars({commit1, commit2});

    AmLoss<T> out;
    out.total_id = tape.add_scalars({tape.scale(mse, static_cast<T>(cfg.lambda_mse)),
                                     tape.scale(commit, static_cast<T>(cfg.lambda_commit))});
    out.mse = static_cast<double>(tape.val(mse)[0]);
    out.commit = static_cast<double>(tape.val(commit)[0]);
    out.total = static_cast<double>(tape.val(out.total_id)[0]);
    AIF_CHECK(std::isfinite(out.mse), "am loss non-finite: mse");
    AIF_CHECK(std::isfinite(out.commit), "am loss non-finite: commit");
    if (q_out) *q_out = *q;
    return out;
  }

  // EMA codebook update from one quantized batch. Layer-1 targets are the
  // encoder embeddings, layer-2 targets the layer-1 residuals. Codes whose
  // EMA count decays below the floor are reseeded from a random batch target.
  void ema_update(const Tensor<T>& A_vals, const QuantRows<T>& q, Rng& rng) {
    const int B = A_vals.rows(), D = cfg.embed_dim;
    const double g = cfg.ema_decay;
    for (int layer = 0; layer < kNumQuantizerLayers; ++layer) {
      const Tensor<T>& targets = layer == 0 ? A_vals : q.r1;
      const std::vector<int>& ks = layer == 0 ? q.k1 : q.k2;
      std::vector<double> n(static_cast<size_t>(cfg.K), 0.0);
      std::vector<double> s(static_cast<size_t>(cfg.K) * D, 0.0);
      for (int b = 0; b < B; ++b) {
        const int k = ks[static_cast<size_t>(b)];
        n[static_cast<size_t>(k)] += 1.0;
        for (int d = 0; d < D; ++d)
          s[static_cast<size_t>(k) * D + d] +=
              static_cast<double>(targets[static_cast<int64_t>(b) * D + d]);
      }
      Tensor<T>& cnt = params.at(cb_cnt_[layer]);
      Tensor<T>& sum = params.at(cb_sum_[layer]);
      Tensor<T>& code = params.at(cb_code_[layer]);
      for (int k = 0; k < cfg.K; ++k) {
        const double c_new = g * static_cast<double>(cnt[k]) + (1.0 - g) * n[static_cast<size_t>(k)];
        cnt[k] = static_cast<T>(c_new);
        for (int d = 0; d < D; ++d) {
          const int64_t i = static_cast<int64_t>(k) * D + d;
          const double s_new = g * static_cast<double>(sum[i]) + (1.0 - g) * s[static_cast<size_t>(k) * D + d];
          sum[i] = static_cast<T>(s_new);
          // sum and count decay together, so an unassigned code's ratio is
          // already unchanged; skipping the recompute makes that exact (and
          // well-defined at decay 0)
          if (n[static_cast<size_t>(k)] > 0) code[i] = static_cast<T>(s_new / std::max(c_new, 1e-8));
        }
        if (static_cast<double>(cnt[k]) < cfg.reseed_floor) {
          const int b = static_cast<int>(rng.below(static_cast<uint64_t>(B)));
          for (int d = 0; d < D; ++d) {
            const T v = targets[static_cast<int64_t>(b) * D + d];
            code[static_cast<int64_t>(k) * D + d] = v;
            sum[static_cast<int64_t>(k) * D + d] = v;
          }
          cnt[k] = T(1);
        }
      }
    }
  }

  // Initialise codes from a first batch of embeddings (layer 1) and their
  // residuals (layer 2): k-means-free, seed-reproducible.
  void seed_codebook_from(const Tensor<T>& A_vals, Rng& rng) {
    const int B = A_vals.rows(), D = cfg.embed_dim;
    AIF_CHECK(B >= 1, "seed_codebook_from: empty batch");
    for (int layer = 0; layer < kNumQuantizerLayers; ++layer) {
      Tensor<T>& code = params.at(cb_code_[layer]);
      Tensor<T>& sum = params.at(cb_sum_[layer]);
      Tensor<T>& cnt = params.at(cb_cnt_[layer]);
      const Tensor<T>* targets = &A_vals;
      Tensor<T> resid;
      if (layer == 1) {
        resid = quantize_rows(A_vals).r1;  // residuals under the fresh layer-1 codes
        targets = &resid;
      }
      for (int k = 0; k < cfg.K; ++k) {
        const int b = static_cast<int>(rng.below(static_cast<uint64_t>(B)));
        for (int d = 0; d < D; ++d) {
          const T v = (*targets)[static_cast<int64_t>(b) * D + d];
          code[static_cast<int64_t>(k) * D + d] = v;
          sum[static_cast<int64_t>(k) * D + d] = v;
        }
        cnt[k] = T(1);
      }
    }
  }

  // Audit export: one line per code, "layer,index,v0,...,v{D-1}".
  void export_codebook_csv(const std::string& path) const {
    std::ofstream f(path);
    AIF_CHECK(f.good(), "cannot open " + path);
    f.precision(9);
    for (int layer = 0; layer < kNumQuantizerLayers; ++layer)
      for (int k = 0; k < cfg.K; ++k) {
        f << layer << ',' << k;
        for (int d = 0; d < cfg.embed_dim; ++d)
          f << ',' << static_cast<double>(codes(layer)[static_cast<int64_t>(k) * cfg.embed_dim + d]);
        f << '\n';
      }
    AIF_CHECK(f.good(), "write failed: " + path);
  }

  bool is_codebook_entry(size_t param_index) const {
    const std::string& n = params.entries[param_index].name;
    return n.rfind("cb.", 0) == 0;
  }

 private:
  MlpDef<T> enc_, dec_;
  int cb_code_[kNumQuantizerLayers], cb_cnt_[kNumQuantizerLayers], cb_sum_[kNumQuantizerLayers];
};

}  // namespace aif::am
