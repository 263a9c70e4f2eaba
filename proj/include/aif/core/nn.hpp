// Parameter containers, initialisation, MLP building blocks and the Adam
// optimiser (with global-norm gradient clipping).
#pragma once

#include <string>
#include <vector>

#include "aif/core/rng.hpp"
#include "aif/core/tape.hpp"
#include "aif/core/tensor.hpp"

namespace aif {

template <class T>
struct ParamSet {
  struct Entry {
    std::string name;
    Tensor<T> value;
  };
  std::vector<Entry> entries;

  int add(std::string name, Tensor<T> init) {
    for (const auto& e : entries) AIF_CHECK(e.name != name, "duplicate parameter name " + name);
    entries.push_back({std::move(name), std::move(init)});
    return static_cast<int>(entries.size() - 1);
  }
  Tensor<T>& at(int i) { return entries[static_cast<size_t>(i)].value; }
  const Tensor<T>& at(int i) const { return entries[static_cast<size_t>(i)].value; }
  int find(const std::string& name) const {
    for (size_t i = 0; i < entries.size(); ++i)
      if (entries[i].name == name) return static_cast<int>(i);
    return -1;
  }
  int64_t total_size() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.value.size();
    return n;
  }
};

// Uploaded view of a ParamSet on a tape for one forward/backward pass.
template <class T>
struct TapeParams {
  std::vector<typename Tape<T>::Id> ids;
  typename Tape<T>::Id operator[](int i) const { return ids[static_cast<size_t>(i)]; }
};

template <class T>
TapeParams<T> upload(Tape<T>& tape, const ParamSet<T>& ps, bool requires_grad = true) {
  TapeParams<T> tp;
  tp.ids.reserve(ps.entries.size());
  for (const auto& e : ps.entries) tp.ids.push_back(tape.input(e.value, requires_grad));
  return tp;
}

template <class T>
Tensor<T> xavier_uniform(Rng& rng, Shape shape, int fan_in, int fan_out) {
  Tensor<T> t(std::move(shape));
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(-a, a));
  return t;
}

enum class Act { None, Elu, Tanh };

// Fully connected stack: widths = {in, h1, ..., out}. Hidden layers use ELU;
// the output activation is configurable.
template <class T>
struct MlpDef {
  std::vector<int> widths;
  std::vector<int> w_idx, b_idx;
  Act out_act = Act::None;
};

template <class T>
MlpDef<T> build_mlp(ParamSet<T>& ps, Rng& rng, const std::string& name, std::vector<int> widths,
                    Act out_act = Act::None) {
  AIF_CHECK(widths.size() >= 2, "mlp needs at least in/out widths");
  MlpDef<T> def;
  def.widths = widths;
  def.out_act = out_act;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fi = widths[l], fo = widths[l + 1];
    def.w_idx.push_back(ps.add(name + ".w" + std::to_string(l), xavier_uniform<T>(rng, {fi, fo}, fi, fo)));
    def.b_idx.push_back(ps.add(name + ".b" + std::to_string(l), Tensor<T>::zeros({fo})));
  }
  return def;
}

template <class T>
typename Tape<T>::Id mlp_forward(Tape<T>& tape, const TapeParams<T>& tp, const MlpDef<T>& def,
                                 typename Tape<T>::Id x) {
  using Id = typename Tape<T>::Id;
  Id h = x;
  const size_t L = def.w_idx.size();
  for (size_t l = 0; l < L; ++l) {
    h = tape.linear(h, tp[def.w_idx[l]], tp[def.b_idx[l]]);
    if (l + 1 < L)
      h = tape.elu(h);
    else if (def.out_act == Act::Elu)
      h = tape.elu(h);
    else if (def.out_act == Act::Tanh)
      h = tape.tanh_(h);
  }
  return h;
}

// Adam with bias correction; gradients are first clipped by global norm.
template <class T>
class Adam {
 public:
  explicit Adam(double lr = 3e-4, double clip = 100.0, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8)
      : lr_(lr), clip_(clip), b1_(b1), b2_(b2), eps_(eps) {}

  // grads[i] aligns with ps.entries[i]; empty tensors are treated as zero.
  void step(ParamSet<T>& ps, std::vector<Tensor<T>>& grads) {
    AIF_CHECK(grads.size() == ps.entries.size(), "adam grad/param count mismatch");
    if (m_.empty()) {
      m_.resize(ps.entries.size());
      v_.resize(ps.entries.size());
      for (size_t i = 0; i < ps.entries.size(); ++i) {
        m_[i] = Tensor<T>::zeros(ps.entries[i].value.shape);
        v_[i] = Tensor<T>::zeros(ps.entries[i].value.shape);
      }
    }
    double sq = 0.0;
    for (auto& g : grads)
      for (int64_t i = 0; i < g.size(); ++i) sq += static_cast<double>(g[i]) * static_cast<double>(g[i]);
    last_grad_norm_ = std::sqrt(sq);
    const double scale = last_grad_norm_ > clip_ ? clip_ / last_grad_norm_ : 1.0;
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (size_t p = 0; p < ps.entries.size(); ++p) {
      Tensor<T>& w = ps.entries[p].value;
      Tensor<T>& g = grads[p];
      if (g.size() == 0) continue;
      AIF_CHECK(g.same_shape(w), "adam grad shape mismatch for " + ps.entries[p].name);
      for (int64_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]) * scale;
        const double m = b1_ * static_cast<double>(m_[p][i]) + (1.0 - b1_) * gi;
        const double v = b2_ * static_cast<double>(v_[p][i]) + (1.0 - b2_) * gi * gi;
        m_[p][i] = static_cast<T>(m);
        v_[p][i] = static_cast<T>(v);
        w[i] -= static_cast<T>(lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_));
      }
    }
  }

  double last_grad_norm() const { return last_grad_norm_; }
  int64_t steps() const { return t_; }

 private:
  double lr_, clip_, b1_, b2_, eps_;
  int64_t t_ = 0;
  double last_grad_norm_ = 0.0;
  std::vector<Tensor<T>> m_, v_;
};

// Collect parameter gradients back off the tape after backward().
template <class T>
std::vector<Tensor<T>> collect_grads(Tape<T>& tape, const TapeParams<T>& tp, const ParamSet<T>& ps) {
  std::vector<Tensor<T>> out(ps.entries.size());
  for (size_t i = 0; i < ps.entries.size(); ++i) {
    Tensor<T>& g = tape.grad(tp.ids[i]);
    out[i] = g.size() > 0 ? g : Tensor<T>::zeros(ps.entries[i].value.shape);
  }
  return out;
}

}  // namespace aif
