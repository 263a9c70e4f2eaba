// One-shot dynamics abstraction: an MLP mapping (full latent state, abstract
// action embedding) directly to the slow deterministic state h steps ahead.
// It distills h-step prior-mode imagination of the world model driven by the
// decoded action sequence of each abstract action — the expensive rollout is
// the training oracle (make_targets); the MLP replaces it at planning time.
#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "aif/am/action_model.hpp"
#include "aif/core/io.hpp"
#include "aif/core/nn.hpp"
#include "aif/core/rng.hpp"
#include "aif/core/tape.hpp"
#include "aif/core/tensor.hpp"
#include "aif/wm/world_model.hpp"

namespace aif::awm {

struct AwmConfig {
  int z_dim = 272;     // d_slow + s_slow + d_fast + s_fast of the world model
  int embed_dim = 32;  // abstract-action embedding width
  int d_slow = 32;     // predicted output width
  int hidden = 512;    // two hidden layers
  int horizon = 50;    // imagination depth used for targets
  uint64_t seed = 1;

  int input_dim() const { return z_dim + embed_dim; }
  void validate() const {
    AIF_CHECK(z_dim > 0 && embed_dim > 0 && d_slow > 0 && hidden > 0, "awm widths must be positive");
    AIF_CHECK(horizon >= 0, "awm horizon must be >= 0");
  }
};

template <class T>
class AbstractWorldModel {
 public:
  using Id = typename Tape<T>::Id;

  AwmConfig cfg;
  ParamSet<T> params;

  explicit AbstractWorldModel(AwmConfig c) : cfg(std::move(c)) {
    cfg.validate();
    Rng rng(cfg.seed);
    // tanh output: the slow deterministic state lives in (-1,1)
    net_ = build_mlp<T>(params, rng, "awm", {cfg.input_dim(), cfg.hidden, cfg.hidden, cfg.d_slow},
                        Act::Tanh);
  }

  // x: [N, z_dim + embed_dim] -> [N, d_slow]
  Id predict(Tape<T>& tape, const TapeParams<T>& tp, Id x) const {
    AIF_CHECK(tape.val(x).cols() == cfg.input_dim(), "awm_predict: input width mismatch");
    return mlp_forward(tape, tp, net_, x);
  }

  Tensor<T> predict_values(const Tensor<T>& x) const {
    Tape<T> tape;
    tape.grad_enabled = false;
    const auto tp = upload(tape, params, false);
    return tape.val(predict(tape, tp, tape.input(x)));
  }

  struct LossOut {
    double value = 0;
    Id id = -1;
  };

  // Mean over batch rows and candidates of the squared L2 distance between
  // prediction and imagination target. inputs/targets: [B*N, *], where N is
  // the candidate count (row layout: state b major, candidate n minor).
  LossOut loss(Tape<T>& tape, const TapeParams<T>& tp, const Tensor<T>& inputs,
               const Tensor<T>& targets, int B, int N) const {
    AIF_CHECK(inputs.dim(0) == B * N && targets.dim(0) == B * N, "awm_loss: row-count mismatch");
    AIF_CHECK(targets.cols() == cfg.d_slow, "awm_loss: target width mismatch");
    const Id pred = predict(tape, tp, tape.input(inputs));
    LossOut out;
    out.id = tape.scale(tape.sse(pred, tape.constant(targets)),
                        static_cast<T>(1.0 / (static_cast<double>(B) * N)));
    out.value = static_cast<double>(tape.val(out.id)[0]);
    AIF_CHECK(std::isfinite(out.value), "awm loss non-finite");
    return out;
  }

 private:
  MlpDef<T> net_;
};

// One latent state as a single flat row [z_dim], in the fixed order
// (d_slow, s_slow, d_fast, s_fast).
template <class T>
Tensor<T> flatten_state_row(const wm::BatchedState<T>& z, int row) {
  const int D = z.d_slow.cols() + z.s_slow.cols() + z.d_fast.cols() + z.s_fast.cols();
  Tensor<T> out({1, D});
  T* p = out.ptr();
  int off = 0;
  for (const Tensor<T>* part : {&z.d_slow, &z.s_slow, &z.d_fast, &z.s_fast}) {
    const int w = part->cols();
    std::copy_n(part->ptr() + static_cast<int64_t>(row) * w, w, p + off);
    off += w;
  }
  return out;
}

// Content hash of one latent state (used to key target caches and to derive
// per-(state, candidate) imagination seeds).
template <class T>
uint64_t state_hash(const wm::BatchedState<T>& z, int row) {
  const Tensor<T> flat = flatten_state_row(z, row);
  return fnv1a64(flat.ptr(), static_cast<size_t>(flat.size()) * sizeof(T));
}

// AWM input rows for one state and a candidate list: [N, z_dim + embed_dim].
template <class T>
Tensor<T> make_input_rows(const wm::BatchedState<T>& z, int row,
                          const std::vector<am::AbstractAction<T>>& cands) {
  const Tensor<T> flat = flatten_state_row(z, row);
  const int Z = flat.cols();
  const int N = static_cast<int>(cands.size());
  AIF_CHECK(N >= 1, "awm input rows: empty candidate list");
  const int E = static_cast<int>(cands[0].embedding.size());
  Tensor<T> out({N, Z + E});
  for (int n = 0; n < N; ++n) {
    T* p = out.ptr() + static_cast<int64_t>(n) * (Z + E);
    std::copy_n(flat.ptr(), Z, p);
    AIF_CHECK(cands[static_cast<size_t>(n)].embedding.size() == E, "awm input rows: embedding width");
    std::copy_n(cands[static_cast<size_t>(n)].embedding.ptr(), E, p + Z);
  }
  return out;
}

// Imagination oracle: for each candidate, decode its embedding to an h-step
// action sequence and roll the world model forward in prior mode from z
// (a single state, broadcast across candidates). Returns d^s_{t+h} rows
// [N, d_slow]. The per-candidate RNG stream is seeded by
// (base_seed, state hash, k1, k2), so targets are reproducible and identical
// whether candidates are rolled out together or one at a time.
template <class T>
Tensor<T> make_targets(const wm::WorldModel<T>& wmod, const am::ActionModel<T>& amod,
                       const wm::BatchedState<T>& z, int row,
                       const std::vector<am::AbstractAction<T>>& cands, int h, uint64_t base_seed) {
  const int N = static_cast<int>(cands.size());
  AIF_CHECK(N >= 1, "make_targets: empty candidate list");
  const int E = amod.cfg.embed_dim, A = wmod.cfg.action_dim;

  // broadcast the state across candidate rows
  wm::BatchedState<T> zb;
  zb.B = N;
  auto bcast = [&](const Tensor<T>& part) {
    const int w = part.cols();
    Tensor<T> out({N, w});
    for (int n = 0; n < N; ++n)
      std::copy_n(part.ptr() + static_cast<int64_t>(row) * w, w, out.ptr() + static_cast<int64_t>(n) * w);
    return out;
  };
  zb.d_slow = bcast(z.d_slow);
  if (h == 0) return zb.d_slow;  // degenerate horizon: the target is the state itself
  AIF_CHECK(amod.cfg.h == h, "make_targets: horizon differs from the action model's sequence length");
  AIF_CHECK(amod.cfg.action_dim == wmod.cfg.action_dim, "make_targets: action dim mismatch");
  zb.s_slow = bcast(z.s_slow);
  zb.d_fast = bcast(z.d_fast);
  zb.s_fast = bcast(z.s_fast);

  // decode all candidate embeddings, then lay the sequences out time-major
  Tensor<T> embeds({N, E});
  for (int n = 0; n < N; ++n)
    std::copy_n(cands[static_cast<size_t>(n)].embedding.ptr(), E,
                embeds.ptr() + static_cast<int64_t>(n) * E);
  const Tensor<T> seqs = amod.decode_values(embeds);  // [N, h*A]
  Tensor<T> act({h * N, A});
  for (int t = 0; t < h; ++t)
    for (int n = 0; n < N; ++n)
      for (int j = 0; j < A; ++j)
        act[(static_cast<int64_t>(t) * N + n) * A + j] = seqs[static_cast<int64_t>(n) * h * A + t * A + j];

  const uint64_t zh = state_hash(z, row);
  std::vector<Rng> rngs;
  rngs.reserve(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n)
    rngs.emplace_back(mix_seed(base_seed, {zh, static_cast<uint64_t>(cands[static_cast<size_t>(n)].k1),
                                           static_cast<uint64_t>(cands[static_cast<size_t>(n)].k2)}));

  const wm::BatchedState<T> out = wmod.imagine(zb, act, h, rngs);
  return out.d_slow;
}

// Disk cache of imagination targets keyed by (state hash, candidate codes).
template <class T>
class TargetCache {
 public:
  explicit TargetCache(int d_slow) : d_slow_(d_slow) {}

  static uint64_t key(uint64_t zh, int k1, int k2) {
    return mix_seed(zh, {static_cast<uint64_t>(k1), static_cast<uint64_t>(k2)});
  }

  const std::vector<T>* find(uint64_t zh, int k1, int k2) const {
    const auto it = map_.find(key(zh, k1, k2));
    return it == map_.end() ? nullptr : &it->second;
  }
  void put(uint64_t zh, int k1, int k2, const T* d, int n) {
    AIF_CHECK(n == d_slow_, "target cache width mismatch");
    map_[key(zh, k1, k2)] = std::vector<T>(d, d + n);
  }
  size_t size() const { return map_.size(); }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    AIF_CHECK(f.good(), "cannot open " + path);
    f.write("AIFTGT01", 8);
    write_pod<uint32_t>(f, static_cast<uint32_t>(d_slow_));
    write_pod<uint64_t>(f, static_cast<uint64_t>(map_.size()));
    for (const auto& [k, v] : map_) {
      write_pod<uint64_t>(f, k);
      for (const T x : v) write_pod<float>(f, static_cast<float>(x));
    }
    AIF_CHECK(f.good(), "write failed: " + path);
  }

  void load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    AIF_CHECK(f.good(), "cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    AIF_CHECK(f.good() && std::string(magic, 8) == "AIFTGT01", "bad target-cache header");
    const auto d = read_pod<uint32_t>(f);
    AIF_CHECK(static_cast<int>(d) == d_slow_, "target cache width mismatch");
    const auto n = read_pod<uint64_t>(f);
    map_.clear();
    for (uint64_t i = 0; i < n; ++i) {
      const uint64_t k = read_pod<uint64_t>(f);
      std::vector<T> v(static_cast<size_t>(d_slow_));
      for (int j = 0; j < d_slow_; ++j) v[static_cast<size_t>(j)] = static_cast<T>(read_pod<float>(f));
      map_[k] = std::move(v);
    }
    AIF_CHECK(f.good(), "truncated target cache: " + path);
  }

 private:
  int d_slow_;
  std::unordered_map<uint64_t, std::vector<T>> map_;
};

}  // namespace aif::awm
