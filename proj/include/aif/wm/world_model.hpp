// Temporally hierarchical latent dynamics model.
//
// Two coupled recurrent levels with different time constants:
//   slow:  d^s_t = cell(d^s_{t-1}, s^s_{t-1}; tau_s)
//          prior p^s(s^s_t | d^s_t), posterior q^s(s^s_t | d^s_t, d^f_{t-1})
//   fast:  d^f_t = cell(d^f_{t-1}, [s^s_t, s^f_{t-1}, a_{t-1}]; tau_f)
//          prior p^f(s^f_t | d^f_t), posterior q^f(s^f_t | d^f_t, enc(o_t))
// Stochastic states are products of categoricals sampled as one-hots with
// straight-through gradients. A predictor network maps the slow latent
// z^s = (d^s, s^s) to the fast deterministic state so that observations can
// be generated from the slow level alone (one Monte Carlo sample of the
// fast stochastic state from the fast prior applied to the prediction).
//
// The per-step training objective is
//   F(t) = [ KL(q^s||p^s) + 0.5|d_hat^f - d^f|^2 ]        (slow level)
//        + [ KL(q^f||p^f) + 0.5|dec(z_t) - o_t|^2 ]       (fast level)
//        + 0.5|dec(z^s-only path) - o_t|^2                (slow-only likelihood)
// with KL balancing: the reported value is plain KL(q||p); gradients are
// split w : (1-w) between the prior and posterior sides.
#pragma once

#include <string>
#include <vector>

#include "aif/core/nn.hpp"
#include "aif/core/rng.hpp"
#include "aif/core/tape.hpp"
#include "aif/core/tensor.hpp"

namespace aif::wm {

enum class Mode { Posterior, Prior };

struct WorldModelConfig {
  int H = 64, W = 80;
  int d_slow = 32, s_slow_vars = 4, s_slow_classes = 4;
  int d_fast = 128, s_fast_vars = 8, s_fast_classes = 8;
  double tau_slow = 32.0, tau_fast = 4.0;
  double kl_balance_w = 0.8;
  std::vector<int> enc_channels = {4, 8, 12, 16};  // four stride-2 stages
  int embed_dim = 128;
  int head_hidden = 128;
  int predictor_hidden = 128;
  int action_dim = 6;
  uint64_t seed = 1;

  int s_slow_dim() const { return s_slow_vars * s_slow_classes; }
  int s_fast_dim() const { return s_fast_vars * s_fast_classes; }
  int z_slow_dim() const { return d_slow + s_slow_dim(); }
  int z_dim() const { return d_slow + s_slow_dim() + d_fast + s_fast_dim(); }

  void validate() const {
    AIF_CHECK(tau_slow > tau_fast && tau_fast >= 1.0, "need tau_slow > tau_fast >= 1");
    AIF_CHECK(kl_balance_w >= 0.0 && kl_balance_w <= 1.0, "kl balance weight outside [0,1]");
    AIF_CHECK(enc_channels.size() == 4, "encoder expects 4 conv stages");
    AIF_CHECK(H % 16 == 0 && W % 16 == 0, "image dims must be divisible by 16");
  }
};

// Leaky-integrator recurrent cell:
//   d = (1 - 1/tau) * d_prev + (1/tau) * tanh(W [input; d_prev] + b)
template <class T>
typename Tape<T>::Id mtrnn_cell(Tape<T>& tape, typename Tape<T>::Id d_prev, typename Tape<T>::Id input,
                                double tau, typename Tape<T>::Id w, typename Tape<T>::Id b) {
  const auto pre = tape.linear(tape.concat_cols({input, d_prev}), w, b);
  const T leak = static_cast<T>(1.0 - 1.0 / tau);
  const T gain = static_cast<T>(1.0 / tau);
  return tape.scale_add(d_prev, leak, tape.tanh_(pre), gain);
}

// Batched latent state; each field is [B, dim].
template <class T>
struct BatchedState {
  int B = 0;
  Tensor<T> d_slow, s_slow, d_fast, s_fast;
};

template <class T>
struct WmLoss {
  double f_slow = 0, f_fast = 0, aux_nll = 0, total = 0;
  typename Tape<T>::Id total_id = -1;
};

template <class T>
class WorldModel {
 public:
  using Id = typename Tape<T>::Id;

  WorldModelConfig cfg;
  ParamSet<T> params;

  explicit WorldModel(WorldModelConfig c) : cfg(std::move(c)) {
    cfg.validate();
    Rng rng(cfg.seed);
    // encoder: 4 stride-2 kxk=2x2 convs + fc to the embedding
    int ch = 3;
    for (int i = 0; i < 4; ++i) {
      const int oc = cfg.enc_channels[static_cast<size_t>(i)];
      const int K = 2 * 2 * ch;
      enc_w_[i] = params.add("enc.conv" + std::to_string(i) + ".w", xavier_uniform<T>(rng, {K, oc}, K, oc));
      enc_b_[i] = params.add("enc.conv" + std::to_string(i) + ".b", Tensor<T>::zeros({oc}));
      ch = oc;
    }
    const int flat = (cfg.H / 16) * (cfg.W / 16) * cfg.enc_channels[3];
    enc_fc_w_ = params.add("enc.fc.w", xavier_uniform<T>(rng, {flat, cfg.embed_dim}, flat, cfg.embed_dim));
    enc_fc_b_ = params.add("enc.fc.b", Tensor<T>::zeros({cfg.embed_dim}));

    // decoder: fc from the full latent, then 4 stride-2 transposed convs
    dec_fc_w_ = params.add("dec.fc.w", xavier_uniform<T>(rng, {cfg.z_dim(), flat}, cfg.z_dim(), flat));
    dec_fc_b_ = params.add("dec.fc.b", Tensor<T>::zeros({flat}));
    int ic = cfg.enc_channels[3];
    for (int i = 0; i < 4; ++i) {
      const int oc = i == 3 ? 3 : cfg.enc_channels[static_cast<size_t>(2 - i)];
      const int K = 2 * 2 * oc;
      dec_w_[i] = params.add("dec.deconv" + std::to_string(i) + ".w", xavier_uniform<T>(rng, {K, ic}, ic, K));
      dec_b_[i] = params.add("dec.deconv" + std::to_string(i) + ".b", Tensor<T>::zeros({oc}));
      ic = oc;
    }

    // recurrent cells
    const int sin = cfg.s_slow_dim() + cfg.d_slow;
    slow_cell_w_ = params.add("slow.cell.w", xavier_uniform<T>(rng, {sin, cfg.d_slow}, sin, cfg.d_slow));
    slow_cell_b_ = params.add("slow.cell.b", Tensor<T>::zeros({cfg.d_slow}));
    const int fin = cfg.s_slow_dim() + cfg.s_fast_dim() + cfg.action_dim + cfg.d_fast;
    fast_cell_w_ = params.add("fast.cell.w", xavier_uniform<T>(rng, {fin, cfg.d_fast}, fin, cfg.d_fast));
    fast_cell_b_ = params.add("fast.cell.b", Tensor<T>::zeros({cfg.d_fast}));

    // belief heads: the slow heads are direct affine maps, the fast heads
    // one-hidden-layer MLPs
    slow_prior_w_ = params.add("slow.prior.w",
                               xavier_uniform<T>(rng, {cfg.d_slow, cfg.s_slow_dim()}, cfg.d_slow, cfg.s_slow_dim()));
    slow_prior_b_ = params.add("slow.prior.b", Tensor<T>::zeros({cfg.s_slow_dim()}));
    const int spin = cfg.d_slow + cfg.d_fast;
    slow_post_w_ = params.add("slow.post.w",
                              xavier_uniform<T>(rng, {spin, cfg.s_slow_dim()}, spin, cfg.s_slow_dim()));
    slow_post_b_ = params.add("slow.post.b", Tensor<T>::zeros({cfg.s_slow_dim()}));
    fast_prior_ = build_mlp<T>(params, rng, "fast.prior", {cfg.d_fast, cfg.head_hidden, cfg.s_fast_dim()});
    fast_post_ = build_mlp<T>(params, rng, "fast.post",
                              {cfg.d_fast + cfg.embed_dim, cfg.head_hidden, cfg.s_fast_dim()});

    // slow-to-fast deterministic-state predictor (tanh keeps it in (-1,1))
    predictor_ = build_mlp<T>(params, rng, "pred",
                              {cfg.z_slow_dim(), cfg.predictor_hidden, cfg.d_fast}, Act::Tanh);
  }

  // ---- graph pieces ------------------------------------------------------

  // obs: [B, H, W, 3] in [0,1] -> [B, embed_dim]
  Id encode(Tape<T>& tape, const TapeParams<T>& tp, Id obs) const {
    const Tensor<T>& x = tape.val(obs);
    AIF_CHECK(x.ndim() == 4 && x.dim(1) == cfg.H && x.dim(2) == cfg.W && x.dim(3) == 3,
              "encode_obs: bad image shape " + shape_str(x.shape));
    const int B = x.dim(0);
    Id h = obs;
    int ch = 3, ih = cfg.H, iw = cfg.W;
    for (int i = 0; i < 4; ++i) {
      ConvSpec cs;
      cs.N = B;
      cs.H = ih;
      cs.W = iw;
      cs.C = ch;
      cs.OC = cfg.enc_channels[static_cast<size_t>(i)];
      h = tape.elu(tape.conv2d(h, tp[enc_w_[i]], tp[enc_b_[i]], cs));
      ch = cs.OC;
      ih /= 2;
      iw /= 2;
    }
    h = tape.reshape(h, {B, ih * iw * ch});
    return tape.linear(h, tp[enc_fc_w_], tp[enc_fc_b_]);
  }

  // z: [B, z_dim] -> pixel logits [B, H, W, 3] (sigmoid gives the mean image)
  Id decode(Tape<T>& tape, const TapeParams<T>& tp, Id z) const {
    const int B = tape.val(z).rows();
    AIF_CHECK(tape.val(z).cols() == cfg.z_dim(), "decode_obs: bad latent width");
    Id h = tape.elu(tape.linear(z, tp[dec_fc_w_], tp[dec_fc_b_]));
    int ih = cfg.H / 16, iw = cfg.W / 16, ch = cfg.enc_channels[3];
    h = tape.reshape(h, {B, ih, iw, ch});
    for (int i = 0; i < 4; ++i) {
      ConvTSpec ts;
      ts.N = B;
      ts.h = ih;
      ts.w = iw;
      ts.IC = ch;
      ts.OC = i == 3 ? 3 : cfg.enc_channels[static_cast<size_t>(2 - i)];
      h = tape.conv2d_transpose(h, tp[dec_w_[i]], tp[dec_b_[i]], ts);
      if (i < 3) h = tape.elu(h);
      ch = ts.OC;
      ih *= 2;
      iw *= 2;
    }
    return h;
  }

  struct StepOut {
    Id d = -1;       // new deterministic state
    Id logits = -1;  // belief head output (V*C per row)
  };

  // d_fast_prev is only read in posterior mode (it conditions q^s).
  StepOut slow_step(Tape<T>& tape, const TapeParams<T>& tp, Id d_slow_prev, Id s_slow_prev,
                    Id d_fast_prev, Mode mode) const {
    StepOut out;
    out.d = mtrnn_cell(tape, d_slow_prev, s_slow_prev, cfg.tau_slow, tp[slow_cell_w_], tp[slow_cell_b_]);
    if (mode == Mode::Posterior) {
      AIF_CHECK(d_fast_prev >= 0, "slow_step posterior needs d_fast_prev");
      out.logits = tape.linear(tape.concat_cols({out.d, d_fast_prev}), tp[slow_post_w_], tp[slow_post_b_]);
    } else {
      out.logits = slow_prior_logits(tape, tp, out.d);
    }
    return out;
  }

  StepOut fast_step(Tape<T>& tape, const TapeParams<T>& tp, Id d_fast_prev, Id s_fast_prev,
                    Id s_slow_t, Id a_prev, Id obs_embed, Mode mode) const {
    StepOut out;
    const Id input = tape.concat_cols({s_slow_t, s_fast_prev, a_prev});
    out.d = mtrnn_cell(tape, d_fast_prev, input, cfg.tau_fast, tp[fast_cell_w_], tp[fast_cell_b_]);
    if (mode == Mode::Posterior) {
      AIF_CHECK(obs_embed >= 0, "fast_step posterior needs an observation embedding");
      out.logits = fast_post_logits(tape, tp, out.d, obs_embed);
    } else {
      out.logits = fast_prior_logits(tape, tp, out.d);
    }
    return out;
  }

  Id slow_prior_logits(Tape<T>& tape, const TapeParams<T>& tp, Id d_slow) const {
    return tape.linear(d_slow, tp[slow_prior_w_], tp[slow_prior_b_]);
  }
  Id fast_prior_logits(Tape<T>& tape, const TapeParams<T>& tp, Id d_fast) const {
    return mlp_forward(tape, tp, fast_prior_, d_fast);
  }
  Id fast_post_logits(Tape<T>& tape, const TapeParams<T>& tp, Id d_fast, Id embed) const {
    return mlp_forward(tape, tp, fast_post_, tape.concat_cols({d_fast, embed}));
  }
  Id predict_fast(Tape<T>& tape, const TapeParams<T>& tp, Id d_slow, Id s_slow) const {
    return mlp_forward(tape, tp, predictor_, tape.concat_cols({d_slow, s_slow}));
  }

  struct PredictOut {
    Id d_fast_hat = -1;  // predicted fast deterministic state
    Id s_fast_hat = -1;  // one sample of s^f from the fast prior at d_fast_hat
  };

  // Generates the fast-level parts of the latent from the slow level alone:
  // d_hat^f = pred(z^s), s_hat^f ~ p^f(.|d_hat^f) (exactly one sample). The
  // decoder applied to (z^s, d_hat^f, s_hat^f) defines p(o | z^s).
  PredictOut predict_fast_from_slow(Tape<T>& tape, const TapeParams<T>& tp, Id d_slow, Id s_slow,
                                    std::vector<Rng>& row_rngs) const {
    PredictOut out;
    out.d_fast_hat = predict_fast(tape, tp, d_slow, s_slow);
    const Id p = fast_prior_logits(tape, tp, out.d_fast_hat);
    out.s_fast_hat = tape.st_cat_sample_rows(p, cfg.s_fast_vars, cfg.s_fast_classes, row_rngs);
    return out;
  }

  // ---- training loss -----------------------------------------------------

  // obs: [TT*B, H, W, 3] and act: [TT*B, action_dim], both time-major
  // (frame index = t*B + b). Initial state is zero; a_{-1} is zero.
  WmLoss<T> loss(Tape<T>& tape, const TapeParams<T>& tp, const Tensor<T>& obs, const Tensor<T>& act,
                 int B, int TT, Rng& rng) const {
    AIF_CHECK(TT >= 1 && TT <= 75, "segment length must be in [1, 75]");
    AIF_CHECK(obs.dim(0) == TT * B && act.dim(0) == TT * B, "loss: batch layout mismatch");
    const int Vs = cfg.s_slow_vars, Cs = cfg.s_slow_classes;
    const int Vf = cfg.s_fast_vars, Cf = cfg.s_fast_classes;
    const T w = static_cast<T>(cfg.kl_balance_w);

    const Id obs_id = tape.input(obs);
    const Id act_id = tape.input(act);
    const Id embed_all = encode(tape, tp, obs_id);

    Id d_s = tape.constant(Tensor<T>::zeros({B, cfg.d_slow}));
    Id s_s = tape.constant(Tensor<T>::zeros({B, cfg.s_slow_dim()}));
    Id d_f = tape.constant(Tensor<T>::zeros({B, cfg.d_fast}));
    Id s_f = tape.constant(Tensor<T>::zeros({B, cfg.s_fast_dim()}));
    Id a_prev = tape.constant(Tensor<T>::zeros({B, cfg.action_dim}));

    std::vector<Id> kl_s_terms, kl_f_terms, pred_terms, z_rows, zhat_rows;
    for (int t = 0; t < TT; ++t) {
      const auto slow = slow_step(tape, tp, d_s, s_s, d_f, Mode::Posterior);
      const Id p_s = slow_prior_logits(tape, tp, slow.d);
      kl_s_terms.push_back(tape.kl_cat_balanced(slow.logits, p_s, Vs, Cs, w));
      const Id s_s_new = tape.st_cat_sample(slow.logits, Vs, Cs, rng);

      // slow-level likelihood of the fast deterministic state
      const Id d_f_hat = predict_fast(tape, tp, slow.d, s_s_new);
      // slow-only observation path (one Monte Carlo sample of s^f from the
      // fast prior applied to the predicted fast state)
      const Id p_f_hat = fast_prior_logits(tape, tp, d_f_hat);
      const Id s_f_hat = tape.st_cat_sample(p_f_hat, Vf, Cf, rng);

      const Id embed_t = tape.slice_rows(embed_all, t * B, (t + 1) * B);
      const auto fast = fast_step(tape, tp, d_f, s_f, s_s_new, a_prev, embed_t, Mode::Posterior);
      const Id p_f = fast_prior_logits(tape, tp, fast.d);
      kl_f_terms.push_back(tape.kl_cat_balanced(fast.logits, p_f, Vf, Cf, w));
      const Id s_f_new = tape.st_cat_sample(fast.logits, Vf, Cf, rng);

      pred_terms.push_back(tape.scale(tape.sse(d_f_hat, fast.d), T(0.5)));

      z_rows.push_back(tape.concat_cols({slow.d, s_s_new, fast.d, s_f_new}));
      zhat_rows.push_back(tape.concat_cols({slow.d, s_s_new, d_f_hat, s_f_hat}));

      d_s = slow.d;
      s_s = s_s_new;
      d_f = fast.d;
      s_f = s_f_new;
      a_prev = tape.slice_rows(act_id, t * B, (t + 1) * B);
    }

    const T inv = static_cast<T>(1.0 / (static_cast<double>(B) * TT));
    const Id recon = tape.sigmoid_gauss_nll(decode(tape, tp, tape.concat_rows(z_rows)), obs);
    const Id aux = tape.sigmoid_gauss_nll(decode(tape, tp, tape.concat_rows(zhat_rows)), obs);

    const Id f_slow =
        tape.scale(tape.add_scalars({tape.add_scalars(kl_s_terms), tape.add_scalars(pred_terms)}), inv);
    const Id f_fast = tape.scale(tape.add_scalars({tape.add_scalars(kl_f_terms), recon}), inv);
    const Id aux_s = tape.scale(aux, inv);

    WmLoss<T> out;
    out.total_id = tape.add_scalars({f_slow, f_fast, aux_s});
    out.f_slow = static_cast<double>(tape.val(f_slow)[0]);
    out.f_fast = static_cast<double>(tape.val(f_fast)[0]);
    out.aux_nll = static_cast<double>(tape.val(aux_s)[0]);
    out.total = static_cast<double>(tape.val(out.total_id)[0]);
    AIF_CHECK(std::isfinite(out.f_slow), "wm loss non-finite: F_slow");
    AIF_CHECK(std::isfinite(out.f_fast), "wm loss non-finite: F_fast");
    AIF_CHECK(std::isfinite(out.aux_nll), "wm loss non-finite: aux_nll");
    return out;
  }

  // ---- inference-side helpers (fresh no-grad tape per call) --------------

  BatchedState<T> zero_state(int B) const {
    BatchedState<T> s;
    s.B = B;
    s.d_slow = Tensor<T>::zeros({B, cfg.d_slow});
    s.s_slow = Tensor<T>::zeros({B, cfg.s_slow_dim()});
    s.d_fast = Tensor<T>::zeros({B, cfg.d_fast});
    s.s_fast = Tensor<T>::zeros({B, cfg.s_fast_dim()});
    return s;
  }

  // Posterior filtering over a prefix. obs: [P*B, H, W, 3], act: [P*B, A],
  // time-major; act rows for step t hold a_{t-1} semantics via shifting
  // inside (a_{-1} = 0): the caller passes the actions EXECUTED at each
  // prefix step; the filter consumes act row t-1 at step t.
  BatchedState<T> filter(const Tensor<T>& obs, const Tensor<T>& act, int B, int P,
                         std::vector<Rng>& row_rngs) const {
    AIF_CHECK(P >= 1, "filter needs a non-empty prefix");
    AIF_CHECK(static_cast<int>(row_rngs.size()) == B, "filter: one rng stream per batch row");
    Tape<T> tape;
    tape.grad_enabled = false;
    const TapeParams<T> tp = upload(tape, params, false);
    const Id obs_id = tape.input(obs);
    const Id act_id = tape.input(act);
    const Id embed_all = encode(tape, tp, obs_id);

    Id d_s = tape.constant(Tensor<T>::zeros({B, cfg.d_slow}));
    Id s_s = tape.constant(Tensor<T>::zeros({B, cfg.s_slow_dim()}));
    Id d_f = tape.constant(Tensor<T>::zeros({B, cfg.d_fast}));
    Id s_f = tape.constant(Tensor<T>::zeros({B, cfg.s_fast_dim()}));
    Id a_prev = tape.constant(Tensor<T>::zeros({B, cfg.action_dim}));
    for (int t = 0; t < P; ++t) {
      const auto slow = slow_step(tape, tp, d_s, s_s, d_f, Mode::Posterior);
      const Id s_s_new = tape.st_cat_sample_rows(slow.logits, cfg.s_slow_vars, cfg.s_slow_classes, row_rngs);
      const Id embed_t = tape.slice_rows(embed_all, t * B, (t + 1) * B);
      const auto fast = fast_step(tape, tp, d_f, s_f, s_s_new, a_prev, embed_t, Mode::Posterior);
      const Id s_f_new = tape.st_cat_sample_rows(fast.logits, cfg.s_fast_vars, cfg.s_fast_classes, row_rngs);
      d_s = slow.d;
      s_s = s_s_new;
      d_f = fast.d;
      s_f = s_f_new;
      if (t + 1 < P) a_prev = tape.slice_rows(act_id, t * B, (t + 1) * B);
    }
    BatchedState<T> out;
    out.B = B;
    out.d_slow = tape.val(d_s);
    out.s_slow = tape.val(s_s);
    out.d_fast = tape.val(d_f);
    out.s_fast = tape.val(s_f);
    return out;
  }

  // Open-loop imagination: prior-mode rollout of h steps driven by the given
  // action sequence. act: [h*B, A] time-major; row t provides a_{t-1} for
  // imagined step t+1 (i.e. actions are consumed in order, one per step).
  BatchedState<T> imagine(const BatchedState<T>& z0, const Tensor<T>& act, int h,
                          std::vector<Rng>& row_rngs) const {
    const int B = z0.B;
    AIF_CHECK(act.dim(0) == h * B, "imagine: action layout mismatch");
    AIF_CHECK(static_cast<int>(row_rngs.size()) == B, "imagine: one rng stream per batch row");
    Tape<T> tape;
    tape.grad_enabled = false;
    const TapeParams<T> tp = upload(tape, params, false);
    const Id act_id = tape.input(act);
    Id d_s = tape.input(z0.d_slow);
    Id s_s = tape.input(z0.s_slow);
    Id d_f = tape.input(z0.d_fast);
    Id s_f = tape.input(z0.s_fast);
    for (int t = 0; t < h; ++t) {
      const auto slow = slow_step(tape, tp, d_s, s_s, -1, Mode::Prior);
      const Id s_s_new = tape.st_cat_sample_rows(slow.logits, cfg.s_slow_vars, cfg.s_slow_classes, row_rngs);
      const Id a_prev = tape.slice_rows(act_id, t * B, (t + 1) * B);
      const auto fast = fast_step(tape, tp, d_f, s_f, s_s_new, a_prev, -1, Mode::Prior);
      const Id s_f_new = tape.st_cat_sample_rows(fast.logits, cfg.s_fast_vars, cfg.s_fast_classes, row_rngs);
      d_s = slow.d;
      s_s = s_s_new;
      d_f = fast.d;
      s_f = s_f_new;
    }
    BatchedState<T> out;
    out.B = B;
    out.d_slow = tape.val(d_s);
    out.s_slow = tape.val(s_s);
    out.d_fast = tape.val(d_f);
    out.s_fast = tape.val(s_f);
    return out;
  }

  // Mean image for a batch of full latent states: [B, H, W, 3] in [0,1].
  Tensor<T> decode_image(const BatchedState<T>& z) const {
    Tensor<T> zc({z.B, cfg.z_dim()});
    for (int b = 0; b < z.B; ++b) {
      T* row = zc.ptr() + static_cast<int64_t>(b) * cfg.z_dim();
      int off = 0;
      auto put = [&](const Tensor<T>& part, int dim) {
        std::copy_n(part.ptr() + static_cast<int64_t>(b) * dim, dim, row + off);
        off += dim;
      };
      put(z.d_slow, cfg.d_slow);
      put(z.s_slow, cfg.s_slow_dim());
      put(z.d_fast, cfg.d_fast);
      put(z.s_fast, cfg.s_fast_dim());
    }
    Tape<T> tape;
    tape.grad_enabled = false;
    const TapeParams<T> tp = upload(tape, params, false);
    return tape.val(tape.sigmoid_(decode(tape, tp, tape.input(zc))));
  }

  const MlpDef<T>& predictor_def() const { return predictor_; }

 private:
  int enc_w_[4], enc_b_[4], dec_w_[4], dec_b_[4];
  int enc_fc_w_ = -1, enc_fc_b_ = -1, dec_fc_w_ = -1, dec_fc_b_ = -1;
  int slow_cell_w_ = -1, slow_cell_b_ = -1, fast_cell_w_ = -1, fast_cell_b_ = -1;
  int slow_prior_w_ = -1, slow_prior_b_ = -1, slow_post_w_ = -1, slow_post_b_ = -1;
  MlpDef<T> fast_prior_, fast_post_, predictor_;

 public:
  // Weight-index accessors used by tests (weight tying, targeted zeroing).
  int idx_slow_prior_w() const { return slow_prior_w_; }
  int idx_slow_prior_b() const { return slow_prior_b_; }
  int idx_slow_post_w() const { return slow_post_w_; }
  int idx_slow_post_b() const { return slow_post_b_; }
  const MlpDef<T>& fast_post_def() const { return fast_post_; }
  const MlpDef<T>& fast_prior_def() const { return fast_prior_; }
};

}  // namespace aif::wm
