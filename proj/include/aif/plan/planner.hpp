// Expected-free-energy planner over the enumerated abstract actions.
//
// A plan has two phases:
//   1. predict — produce the slow deterministic state h steps ahead for every
//      candidate, either with the one-shot abstract model (Backend::Abstract)
//      or by decoding each candidate and rolling the world model forward in
//      prior mode, one candidate at a time (Backend::Sequential). This phase
//      is the latency-relevant part and is timed separately.
//   2. score — shared Monte Carlo evaluation of each candidate's expected free
//      energy: epistemic value (information gained about the fast state by a
//      future observation) and extrinsic value (-gamma * squared pixel error
//      to the preferred observation), both from the same observation samples.
//
// EFE is linear in gamma: efe = -epistemic + gamma * err_sq. Reports keep
// err_sq so a gamma sweep can be replayed without re-sampling.
#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "aif/am/action_model.hpp"
#include "aif/awm/abstract_wm.hpp"
#include "aif/core/rng.hpp"
#include "aif/core/tape.hpp"
#include "aif/core/tensor.hpp"
#include "aif/wm/world_model.hpp"

namespace aif::plan {

enum class Backend { Abstract, Sequential };

inline const char* backend_name(Backend b) { return b == Backend::Abstract ? "abstract" : "sequential"; }

template <class T>
struct PreferenceSpec {
  Tensor<T> o_pref;    // goal image [H, W, 3] in [0,1]
  double gamma = 1.0;  // preference precision, 1/(2 sigma^2)

  void validate(int H, int W) const {
    AIF_CHECK(gamma > 0.0, "preference precision must be positive");
    AIF_CHECK(o_pref.ndim() == 3 && o_pref.dim(0) == H && o_pref.dim(1) == W && o_pref.dim(2) == 3,
              "goal image dims must match the model config");
  }
};

struct CandidateEval {
  int k1 = 0, k2 = 0;
  double epistemic = 0;  // MC estimate of log q(s^f | z^s, o) - log q(s^f | z^s)
  double err_sq = 0;     // MC mean of sum-over-pixels squared error to o_pref
  double extrinsic = 0;  // -gamma * err_sq
  double efe = 0;        // -epistemic - extrinsic
};

struct EFEReport {
  std::vector<CandidateEval> cands;
  int chosen = -1;
  std::string backend;
  double gamma = 0, sigma_obs = 0;
  int n_mc = 0;
  uint64_t plan_seed = 0, target_seed = 0;
  double predict_ms = 0;  // phase 1 (backend-specific) wall time
  double score_ms = 0;    // phase 2 (shared MC scoring) wall time
  double total_ms = 0;

  // include_timing=false gives the reproducible view: everything except wall
  // times is a pure function of (models, state, preference, seeds), so that
  // variant is what determinism checks and run artifacts compare bitwise.
  nlohmann::json to_json(bool include_timing = true) const {
    nlohmann::json j;
    j["backend"] = backend;
    j["chosen"] = chosen;
    j["gamma"] = gamma;
    j["sigma_obs"] = sigma_obs;
    j["n_mc"] = n_mc;
    j["plan_seed"] = plan_seed;
    j["target_seed"] = target_seed;
    if (include_timing) {
      j["predict_ms"] = predict_ms;
      j["score_ms"] = score_ms;
      j["total_ms"] = total_ms;
    }
    j["candidates"] = nlohmann::json::array();
    for (const auto& c : cands)
      j["candidates"].push_back({{"k1", c.k1},
                                 {"k2", c.k2},
                                 {"epistemic", c.epistemic},
                                 {"err_sq", c.err_sq},
                                 {"extrinsic", c.extrinsic},
                                 {"efe", c.efe}});
    return j;
  }
};

struct PlannerConfig {
  int n_mc = 10;           // Monte Carlo samples per candidate
  double sigma_obs = 1.0;  // observation-noise scale for sampled o
  uint64_t target_seed = 1;  // base seed of sequential-backend rollouts
                             // (same convention as imagination-target generation)
  void validate() const {
    AIF_CHECK(n_mc >= 1, "planner needs n_mc >= 1");
    AIF_CHECK(sigma_obs >= 0.0, "sigma_obs must be >= 0");
  }
};

template <class T>
class Planner {
 public:
  Planner(const wm::WorldModel<T>& w, const am::ActionModel<T>& a, const awm::AbstractWorldModel<T>& f,
          PlannerConfig cfg)
      : wm_(w), am_(a), awm_(f), cfg_(cfg) {
    cfg_.validate();
    AIF_CHECK(awm_.cfg.z_dim == wm_.cfg.z_dim() && awm_.cfg.d_slow == wm_.cfg.d_slow &&
                  awm_.cfg.embed_dim == am_.cfg.embed_dim,
              "planner: model dimensions disagree");
  }

  const PlannerConfig& config() const { return cfg_; }

  // Phase 1: d^s at tau = t+h for every candidate; [N, d_slow].
  Tensor<T> predict_dslow(const wm::BatchedState<T>& z, int row,
                          const std::vector<am::AbstractAction<T>>& cands, Backend backend) const {
    if (backend == Backend::Abstract)
      return awm_.predict_values(awm::make_input_rows(z, row, cands));
    // Sequential reference: one prior-mode rollout per candidate, seeded
    // exactly like imagination-target generation.
    const int D = wm_.cfg.d_slow;
    Tensor<T> out({static_cast<int>(cands.size()), D});
    for (size_t n = 0; n < cands.size(); ++n) {
      const std::vector<am::AbstractAction<T>> one = {cands[n]};
      const Tensor<T> d = awm::make_targets(wm_, am_, z, row, one, am_.cfg.h, cfg_.target_seed);
      std::copy_n(d.ptr(), D, out.ptr() + static_cast<int64_t>(n) * D);
    }
    return out;
  }

  // Slow-state belief from the prior head: per-block softmax probabilities,
  // [N, s_slow_dim].
  Tensor<T> slow_belief(const Tensor<T>& d_rows) const {
    Tape<T> tape;
    tape.grad_enabled = false;
    const auto tp = upload(tape, wm_.params, false);
    const Tensor<T> logits =
        tape.val(wm_.slow_prior_logits(tape, tp, tape.input(d_rows)));
    const int N = logits.dim(0), Vs = wm_.cfg.s_slow_vars, Cs = wm_.cfg.s_slow_classes;
    Tensor<T> probs({N, Vs * Cs});
    std::vector<double> p(static_cast<size_t>(Cs));
    for (int n = 0; n < N; ++n)
      for (int v = 0; v < Vs; ++v) {
        const T* lr = logits.ptr() + static_cast<int64_t>(n) * Vs * Cs + v * Cs;
        softmax_row(lr, p.data(), Cs);
        for (int c = 0; c < Cs; ++c)
          probs[static_cast<int64_t>(n) * Vs * Cs + v * Cs + c] = static_cast<T>(p[static_cast<size_t>(c)]);
      }
    return probs;
  }

  // Phase 2: Monte Carlo EFE scoring of all candidates at once. All sampling
  // for (candidate c, sample i) comes from an Rng seeded by
  // mix_seed(plan_seed, {c, i}), so any evaluation schedule produces
  // identical numbers.
  std::vector<CandidateEval> score(const Tensor<T>& d_rows,
                                   const std::vector<am::AbstractAction<T>>& cands,
                                   const PreferenceSpec<T>& pref, uint64_t plan_seed) const {
    const auto& wc = wm_.cfg;
    pref.validate(wc.H, wc.W);
    const int N = static_cast<int>(cands.size()), M = cfg_.n_mc;
    AIF_CHECK(d_rows.dim(0) == N && d_rows.cols() == wc.d_slow, "score: d_rows shape mismatch");
    const int R = N * M;
    const int Vs = wc.s_slow_vars, Cs = wc.s_slow_classes;
    const int Vf = wc.s_fast_vars, Cf = wc.s_fast_classes;
    const int64_t P = static_cast<int64_t>(wc.H) * wc.W * 3;

    const Tensor<T> belief = slow_belief(d_rows);

    std::vector<Rng> rngs;
    rngs.reserve(static_cast<size_t>(R));
    for (int c = 0; c < N; ++c)
      for (int i = 0; i < M; ++i)
        rngs.emplace_back(mix_seed(plan_seed, {static_cast<uint64_t>(c), static_cast<uint64_t>(i)}));

    // replicate d^s rows and draw s^s one-hots from the belief
    Tensor<T> d_rep({R, wc.d_slow});
    Tensor<T> s_rows = Tensor<T>::zeros({R, Vs * Cs});
    std::vector<double> p(static_cast<size_t>(std::max(Cs, Cf)));
    for (int r = 0; r < R; ++r) {
      const int c = r / M;
      std::copy_n(d_rows.ptr() + static_cast<int64_t>(c) * wc.d_slow, wc.d_slow,
                  d_rep.ptr() + static_cast<int64_t>(r) * wc.d_slow);
      for (int v = 0; v < Vs; ++v) {
        const T* br = belief.ptr() + static_cast<int64_t>(c) * Vs * Cs + v * Cs;
        for (int k = 0; k < Cs; ++k) p[static_cast<size_t>(k)] = static_cast<double>(br[k]);
        const int pick = rngs[static_cast<size_t>(r)].categorical(p.data(), Cs);
        s_rows[static_cast<int64_t>(r) * Vs * Cs + v * Cs + pick] = T(1);
      }
    }

    // fast-level completion and observation sampling on a value-only tape
    Tape<T> tape;
    tape.grad_enabled = false;
    const auto tp = upload(tape, wm_.params, false);
    const auto d_id = tape.input(d_rep);
    const auto s_id = tape.input(s_rows);
    const auto pf = wm_.predict_fast_from_slow(tape, tp, d_id, s_id, rngs);
    const auto z_id = tape.concat_cols({d_id, s_id, pf.d_fast_hat, pf.s_fast_hat});
    // [R, H, W, 3]; reference valid only until the next node push, so it must
    // be fully consumed before the observation batch goes back onto the tape
    const Tensor<T>& pix_logits = tape.val(wm_.decode(tape, tp, z_id));

    Tensor<T> obs({R, wc.H, wc.W, 3});
    std::vector<double> err(static_cast<size_t>(R), 0.0);
    for (int r = 0; r < R; ++r) {
      const T* lg = pix_logits.ptr() + static_cast<int64_t>(r) * P;
      T* ob = obs.ptr() + static_cast<int64_t>(r) * P;
      Rng& rng = rngs[static_cast<size_t>(r)];
      double e = 0.0;
      for (int64_t i = 0; i < P; ++i) {
        const double mean = 1.0 / (1.0 + std::exp(-static_cast<double>(lg[i])));
        const double o = mean + cfg_.sigma_obs * rng.normal();
        ob[i] = static_cast<T>(o);
        const double d = o - static_cast<double>(pref.o_pref[i]);
        e += d * d;
      }
      err[static_cast<size_t>(r)] = e;
    }

    const auto emb = wm_.encode(tape, tp, tape.input(std::move(obs)));
    const auto post_id = wm_.fast_post_logits(tape, tp, pf.d_fast_hat, emb);
    const auto prior_id = wm_.fast_prior_logits(tape, tp, pf.d_fast_hat);
    // all graph building is done; value references are stable from here on
    const Tensor<T>& post = tape.val(post_id);
    const Tensor<T>& prior = tape.val(prior_id);
    const Tensor<T>& s_hat = tape.val(pf.s_fast_hat);

    std::vector<CandidateEval> out(static_cast<size_t>(N));
    for (int c = 0; c < N; ++c) {
      CandidateEval& ev = out[static_cast<size_t>(c)];
      ev.k1 = cands[static_cast<size_t>(c)].k1;
      ev.k2 = cands[static_cast<size_t>(c)].k2;
      double epi = 0.0, er = 0.0;
      for (int i = 0; i < M; ++i) {
        const int r = c * M + i;
        epi += log_prob_rows(post, s_hat, r, Vf, Cf, p.data()) -
               log_prob_rows(prior, s_hat, r, Vf, Cf, p.data());
        er += err[static_cast<size_t>(r)];
      }
      ev.epistemic = epi / M;
      ev.err_sq = er / M;
      ev.extrinsic = -pref.gamma * ev.err_sq;
      ev.efe = -ev.epistemic - ev.extrinsic;
      AIF_CHECK(std::isfinite(ev.efe), "efe non-finite");
    }
    return out;
  }

  static int argmin_efe(const std::vector<CandidateEval>& cands) {
    AIF_CHECK(!cands.empty(), "argmin over empty candidate list");
    int best = 0;
    for (int c = 1; c < static_cast<int>(cands.size()); ++c)
      if (cands[static_cast<size_t>(c)].efe < cands[static_cast<size_t>(best)].efe) best = c;
    return best;
  }

  struct PlanOut {
    am::AbstractAction<T> chosen;
    Tensor<T> actions;  // [h, action_dim], decoded sequence of the chosen candidate
    EFEReport report;
  };

  PlanOut plan(const wm::BatchedState<T>& z, int row, const PreferenceSpec<T>& pref, Backend backend,
               uint64_t plan_seed) const {
    using clock = std::chrono::steady_clock;
    const auto ms = [](clock::time_point a, clock::time_point b) {
      return std::chrono::duration<double, std::milli>(b - a).count();
    };
    const auto cands = am_.enumerate_abstract_actions();

    const auto t0 = clock::now();
    const Tensor<T> d_rows = predict_dslow(z, row, cands, backend);
    const auto t1 = clock::now();
    PlanOut out;
    out.report.cands = score(d_rows, cands, pref, plan_seed);
    const auto t2 = clock::now();

    out.report.chosen = argmin_efe(out.report.cands);
    out.report.backend = backend_name(backend);
    out.report.gamma = pref.gamma;
    out.report.sigma_obs = cfg_.sigma_obs;
    out.report.n_mc = cfg_.n_mc;
    out.report.plan_seed = plan_seed;
    out.report.target_seed = cfg_.target_seed;
    out.report.predict_ms = ms(t0, t1);
    out.report.score_ms = ms(t1, t2);
    out.report.total_ms = ms(t0, t2);

    out.chosen = cands[static_cast<size_t>(out.report.chosen)];
    Tensor<T> emb({1, am_.cfg.embed_dim});
    std::copy_n(out.chosen.embedding.ptr(), am_.cfg.embed_dim, emb.ptr());
    Tensor<T> seq = am_.decode_values(emb);
    seq.shape = {am_.cfg.h, am_.cfg.action_dim};
    out.actions = std::move(seq);
    return out;
  }

 private:
  // Sum over categorical blocks of the log-probability of the one-hot row
  // `r` of `onehot` under the block-softmax of `logits` row r.
  static double log_prob_rows(const Tensor<T>& logits, const Tensor<T>& onehot, int r, int V, int C,
                              double* scratch) {
    double lp = 0.0;
    for (int v = 0; v < V; ++v) {
      const T* lr = logits.ptr() + (static_cast<int64_t>(r) * V + v) * C;
      const T* oh = onehot.ptr() + (static_cast<int64_t>(r) * V + v) * C;
      softmax_row(lr, scratch, C);
      int pick = 0;
      for (int c = 1; c < C; ++c)
        if (oh[c] > oh[pick]) pick = c;
      lp += std::log(std::max(scratch[pick], 1e-300));
    }
    return lp;
  }

  const wm::WorldModel<T>& wm_;
  const am::ActionModel<T>& am_;
  const awm::AbstractWorldModel<T>& awm_;
  PlannerConfig cfg_;
};

}  // namespace aif::plan
