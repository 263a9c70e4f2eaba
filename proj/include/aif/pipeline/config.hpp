// Run configuration: an INI-style file (sections of key = value lines, '#' or
// ';' comments) mapped onto the module configs plus training/eval settings.
// Parsing is strict — an unknown section or key is an error, so typos cannot
// silently fall back to defaults. Every value has a default, so an empty file
// is a valid full-scale configuration.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aif/am/action_model.hpp"
#include "aif/awm/abstract_wm.hpp"
#include "aif/core/rng.hpp"
#include "aif/core/tensor.hpp"
#include "aif/sim/trajectory_io.hpp"
#include "aif/wm/world_model.hpp"

namespace aif::pipeline {

// Parsed INI content: section -> key -> raw string value.
class IniFile {
 public:
  static IniFile parse_text(const std::string& text) {
    IniFile ini;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const size_t cut = line.find_first_of("#;");
      if (cut != std::string::npos) line.erase(cut);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        AIF_CHECK(line.back() == ']', "config line " + std::to_string(lineno) + ": unterminated section");
        section = trim(line.substr(1, line.size() - 2));
        AIF_CHECK(!section.empty(), "config line " + std::to_string(lineno) + ": empty section name");
        continue;
      }
      const size_t eq = line.find('=');
      AIF_CHECK(eq != std::string::npos, "config line " + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string val = trim(line.substr(eq + 1));
      AIF_CHECK(!key.empty(), "config line " + std::to_string(lineno) + ": empty key");
      AIF_CHECK(!section.empty(), "config line " + std::to_string(lineno) + ": key outside any [section]");
      ini.values_[section + "." + key] = val;
    }
    return ini;
  }

  static IniFile parse_file(const std::string& path) {
    std::ifstream f(path);
    AIF_CHECK(f.good(), "cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_text(ss.str());
  }

  bool has(const std::string& dotted) const { return values_.count(dotted) > 0; }

  // Typed getters; consume marks the key as recognized.
  std::string get_str(const std::string& k, const std::string& dflt) { return take(k, dflt); }
  int get_int(const std::string& k, int dflt) {
    const std::string s = take(k, std::to_string(dflt));
    return static_cast<int>(parse_ll(k, s));
  }
  uint64_t get_u64(const std::string& k, uint64_t dflt) {
    const std::string s = take(k, std::to_string(dflt));
    const long long v = parse_ll(k, s);
    AIF_CHECK(v >= 0, "config " + k + ": expected a nonnegative integer");
    return static_cast<uint64_t>(v);
  }
  double get_double(const std::string& k, double dflt) {
    std::ostringstream o;
    o.precision(17);
    o << dflt;
    const std::string s = take(k, o.str());
    try {
      size_t pos = 0;
      const double v = std::stod(s, &pos);
      AIF_CHECK(pos == s.size(), "config " + k + ": trailing characters in '" + s + "'");
      return v;
    } catch (const std::logic_error&) {
      throw std::runtime_error("config " + k + ": cannot parse '" + s + "' as a number");
    }
  }
  bool get_bool(const std::string& k, bool dflt) {
    const std::string s = take(k, dflt ? "true" : "false");
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw std::runtime_error("config " + k + ": expected a boolean, got '" + s + "'");
  }
  std::vector<std::string> get_list(const std::string& k, const std::string& dflt) {
    const std::string s = take(k, dflt);
    std::vector<std::string> out;
    std::string cur;
    for (const char c : s) {
      if (c == ',') {
        if (!trim(cur).empty()) out.push_back(trim(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
  }

  // After all gets: any key never consumed is unknown.
  void check_all_consumed() const {
    for (const auto& [k, v] : values_)
      AIF_CHECK(consumed_.count(k) > 0, "config: unknown key '" + k + "'");
  }

 private:
  static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }
  static long long parse_ll(const std::string& k, const std::string& s) {
    try {
      size_t pos = 0;
      const long long v = std::stoll(s, &pos);
      AIF_CHECK(pos == s.size(), "config " + k + ": trailing characters in '" + s + "'");
      return v;
    } catch (const std::logic_error&) {
      throw std::runtime_error("config " + k + ": cannot parse '" + s + "' as an integer");
    }
  }
  std::string take(const std::string& k, const std::string& dflt) {
    consumed_.insert(k);
    const auto it = values_.find(k);
    return it == values_.end() ? dflt : it->second;
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
};

struct TrainConfig {
  int wm_steps = 20000, am_steps = 10000, awm_steps = 5000;
  int batch = 16;
  int seg_len = 25;  // world-model training window length
  double lr_wm = 3e-4, lr_am = 3e-4, lr_awm = 3e-4;
  int log_every = 50;
  int ckpt_every = 1000;
  int heldout_every = 10;  // every n-th trajectory's states are held out of awm training
};

struct PlanConfig {
  int n_mc = 10;
  double sigma_obs = 1.0;
  double gamma = 100.0;  // preference precision used for goal-directed planning
};

struct EvalConfig {
  int seeds = 5;  // trials per task
};

struct ExploreConfig {
  std::vector<double> gammas = {1e-4, 1e2};
  double gamma_lo = 1e-4, gamma_hi = 1e2;  // bisection bracket for the switch point
};

struct RunConfig {
  sim::DatasetConfig data;
  wm::WorldModelConfig wm;
  am::ActionModelConfig am;
  awm::AwmConfig awm;
  TrainConfig train;
  PlanConfig plan;
  EvalConfig eval;
  ExploreConfig explore;
  uint64_t seed = 1;        // master seed; stage seeds derive from it
  uint64_t config_hash = 0; // hash of the resolved key/value state

  static RunConfig from_ini(IniFile ini, uint64_t cli_seed_override, bool has_override);
  static RunConfig from_file(const std::string& path, uint64_t cli_seed_override, bool has_override) {
    return from_ini(path.empty() ? IniFile{} : IniFile::parse_file(path), cli_seed_override, has_override);
  }
};

inline sim::Family family_from_name(const std::string& s) {
  if (s == "blue") return sim::Family::Blue;
  if (s == "red") return sim::Family::Red;
  if (s == "both") return sim::Family::Both;
  throw std::runtime_error("config: unknown scenario family '" + s + "'");
}

inline RunConfig RunConfig::from_ini(IniFile ini, uint64_t cli_seed_override, bool has_override) {
  RunConfig c;

  c.seed = ini.get_u64("run.seed", c.seed);
  if (has_override) c.seed = cli_seed_override;

  // dataset
  c.data.demos_per_combo = ini.get_int("data.demos_per_combo", c.data.demos_per_combo);
  c.data.T = ini.get_int("data.T", c.data.T);
  c.data.H = ini.get_int("data.H", c.data.H);
  c.data.W = ini.get_int("data.W", c.data.W);
  {
    std::vector<sim::Family> fams;
    for (const auto& f : ini.get_list("data.families", "blue,red,both"))
      fams.push_back(family_from_name(f));
    AIF_CHECK(!fams.empty(), "config: data.families must not be empty");
    c.data.families = fams;
  }
  c.data.seed = mix_seed(c.seed, {0x617461d5u});

  // world model
  c.wm.H = c.data.H;
  c.wm.W = c.data.W;
  c.wm.d_slow = ini.get_int("wm.d_slow", c.wm.d_slow);
  c.wm.s_slow_vars = ini.get_int("wm.s_slow_vars", c.wm.s_slow_vars);
  c.wm.s_slow_classes = ini.get_int("wm.s_slow_classes", c.wm.s_slow_classes);
  c.wm.d_fast = ini.get_int("wm.d_fast", c.wm.d_fast);
  c.wm.s_fast_vars = ini.get_int("wm.s_fast_vars", c.wm.s_fast_vars);
  c.wm.s_fast_classes = ini.get_int("wm.s_fast_classes", c.wm.s_fast_classes);
  c.wm.tau_slow = ini.get_double("wm.tau_slow", c.wm.tau_slow);
  c.wm.tau_fast = ini.get_double("wm.tau_fast", c.wm.tau_fast);
  c.wm.kl_balance_w = ini.get_double("wm.kl_balance_w", c.wm.kl_balance_w);
  {
    const auto ch = ini.get_list("wm.enc_channels", "4,8,12,16");
    AIF_CHECK(ch.size() == 4, "config wm.enc_channels: expected 4 comma-separated values");
    for (size_t i = 0; i < 4; ++i) c.wm.enc_channels[i] = std::stoi(ch[i]);
  }
  c.wm.embed_dim = ini.get_int("wm.embed_dim", c.wm.embed_dim);
  c.wm.head_hidden = ini.get_int("wm.head_hidden", c.wm.head_hidden);
  c.wm.predictor_hidden = ini.get_int("wm.predictor_hidden", c.wm.predictor_hidden);
  c.wm.seed = mix_seed(c.seed, {0x776d0001u});
  c.wm.validate();

  // action model
  c.am.action_dim = c.wm.action_dim;
  c.am.h = ini.get_int("am.h", c.am.h);
  c.am.embed_dim = ini.get_int("am.embed_dim", c.am.embed_dim);
  c.am.K = ini.get_int("am.K", c.am.K);
  c.am.hidden = ini.get_int("am.hidden", c.am.hidden);
  c.am.lambda_mse = ini.get_double("am.lambda_mse", c.am.lambda_mse);
  c.am.lambda_commit = ini.get_double("am.lambda_commit", c.am.lambda_commit);
  c.am.ema_decay = ini.get_double("am.ema_decay", c.am.ema_decay);
  c.am.reseed_floor = ini.get_double("am.reseed_floor", c.am.reseed_floor);
  c.am.seed = mix_seed(c.seed, {0x616d0001u});
  c.am.validate();

  // abstract world model (input dims follow the other two models)
  c.awm.z_dim = c.wm.z_dim();
  c.awm.embed_dim = c.am.embed_dim;
  c.awm.d_slow = c.wm.d_slow;
  c.awm.hidden = ini.get_int("awm.hidden", c.awm.hidden);
  c.awm.horizon = c.am.h;
  c.awm.seed = mix_seed(c.seed, {0x61776d01u});
  c.awm.validate();

  // training
  c.train.wm_steps = ini.get_int("train.wm_steps", c.train.wm_steps);
  c.train.am_steps = ini.get_int("train.am_steps", c.train.am_steps);
  c.train.awm_steps = ini.get_int("train.awm_steps", c.train.awm_steps);
  c.train.batch = ini.get_int("train.batch", c.train.batch);
  c.train.seg_len = ini.get_int("train.seg_len", c.train.seg_len);
  c.train.lr_wm = ini.get_double("train.lr_wm", c.train.lr_wm);
  c.train.lr_am = ini.get_double("train.lr_am", c.train.lr_am);
  c.train.lr_awm = ini.get_double("train.lr_awm", c.train.lr_awm);
  c.train.log_every = ini.get_int("train.log_every", c.train.log_every);
  c.train.ckpt_every = ini.get_int("train.ckpt_every", c.train.ckpt_every);
  c.train.heldout_every = ini.get_int("train.heldout_every", c.train.heldout_every);
  AIF_CHECK(c.train.batch >= 1 && c.train.seg_len >= 1 && c.train.seg_len <= c.data.T,
            "config: train.batch and train.seg_len must be positive and seg_len <= data.T");
  AIF_CHECK(c.train.heldout_every >= 2, "config: train.heldout_every must be >= 2");

  // planning / evaluation / exploration
  c.plan.n_mc = ini.get_int("plan.n_mc", c.plan.n_mc);
  c.plan.sigma_obs = ini.get_double("plan.sigma_obs", c.plan.sigma_obs);
  c.plan.gamma = ini.get_double("plan.gamma", c.plan.gamma);
  c.eval.seeds = ini.get_int("eval.seeds", c.eval.seeds);
  {
    std::vector<double> gs;
    for (const auto& g : ini.get_list("explore.gammas", "1e-4,1e2")) gs.push_back(std::stod(g));
    AIF_CHECK(!gs.empty(), "config: explore.gammas must not be empty");
    c.explore.gammas = gs;
  }
  c.explore.gamma_lo = ini.get_double("explore.gamma_lo", c.explore.gamma_lo);
  c.explore.gamma_hi = ini.get_double("explore.gamma_hi", c.explore.gamma_hi);
  AIF_CHECK(c.explore.gamma_lo > 0 && c.explore.gamma_hi > c.explore.gamma_lo,
            "config: explore gamma bracket must satisfy 0 < lo < hi");

  ini.check_all_consumed();

  // hash of the fully resolved configuration (defaults included)
  std::ostringstream state;
  state.precision(17);
  state << c.seed << '|' << c.data.demos_per_combo << '|' << c.data.T << '|' << c.data.H << '|'
        << c.data.W << '|';
  for (const auto f : c.data.families) state << family_name(f) << ',';
  state << '|' << c.wm.d_slow << '|' << c.wm.s_slow_vars << '|' << c.wm.s_slow_classes << '|'
        << c.wm.d_fast << '|' << c.wm.s_fast_vars << '|' << c.wm.s_fast_classes << '|'
        << c.wm.tau_slow << '|' << c.wm.tau_fast << '|' << c.wm.kl_balance_w << '|';
  for (const int ch : c.wm.enc_channels) state << ch << ',';
  state << '|' << c.wm.embed_dim << '|' << c.wm.head_hidden << '|' << c.wm.predictor_hidden << '|'
        << c.am.h << '|' << c.am.embed_dim << '|' << c.am.K << '|' << c.am.hidden << '|'
        << c.am.lambda_mse << '|' << c.am.lambda_commit << '|' << c.am.ema_decay << '|'
        << c.am.reseed_floor << '|' << c.awm.hidden << '|' << c.train.wm_steps << '|'
        << c.train.am_steps << '|' << c.train.awm_steps << '|' << c.train.batch << '|'
        << c.train.seg_len << '|' << c.train.lr_wm << '|' << c.train.lr_am << '|' << c.train.lr_awm
        << '|' << c.train.heldout_every << '|' << c.plan.n_mc << '|' << c.plan.sigma_obs << '|'
        << c.plan.gamma << '|' << c.eval.seeds << '|';
  for (const double g : c.explore.gammas) state << g << ',';
  state << '|' << c.explore.gamma_lo << '|' << c.explore.gamma_hi;
  const std::string s = state.str();
  c.config_hash = fnv1a64(s.data(), s.size());
  return c;
}

}  // namespace aif::pipeline
