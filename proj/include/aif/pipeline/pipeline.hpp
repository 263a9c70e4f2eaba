// Pipeline orchestration: dataset residency and batch assembly, the three
// training stages (world model -> action model -> abstract world model, each
// freezing everything upstream), and the evaluation-side entry points
// (closed-loop task evaluation, planner latency benchmark, exploration sweep).
#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aif/am/action_model.hpp"
#include "aif/awm/abstract_wm.hpp"
#include "aif/pipeline/config.hpp"
#include "aif/plan/planner.hpp"
#include "aif/sim/kitchen.hpp"
#include "aif/sim/trajectory_io.hpp"
#include "aif/wm/world_model.hpp"

namespace aif::pipeline {

// ---- dataset in RAM -------------------------------------------------------

// Full dataset resident as u8 pixels; batches are converted to float on
// assembly. All trajectories must share T/H/W.
struct Dataset {
  int T = 0, H = 0, W = 0, A = 6;
  std::vector<sim::TrajectoryMeta> meta;
  std::vector<sim::Trajectory> trajs;

  static Dataset load(const std::string& dir);
  int size() const { return static_cast<int>(trajs.size()); }

  // World-model batch: picks = (trajectory, start offset) per row; output is
  // time-major ([t*B + b]) observation and action tensors of length seg_len.
  void wm_batch(const std::vector<std::pair<int, int>>& picks, int seg_len, Tensor<float>& obs,
                Tensor<float>& act) const;
  // Action-model batch: flattened action windows [B, h*A].
  Tensor<float> am_batch(const std::vector<std::pair<int, int>>& picks, int h) const;
};

// ---- artifact layout ------------------------------------------------------

struct RunPaths {
  std::string dir;
  explicit RunPaths(std::string d) : dir(std::move(d)) {}
  std::string wm_ckpt() const { return dir + "/wm.ckpt"; }
  std::string am_ckpt() const { return dir + "/am.ckpt"; }
  std::string awm_ckpt() const { return dir + "/awm.ckpt"; }
  std::string wm_csv() const { return dir + "/wm_loss.csv"; }
  std::string am_csv() const { return dir + "/am_loss.csv"; }
  std::string awm_csv() const { return dir + "/awm_loss.csv"; }
  std::string codebook_csv() const { return dir + "/codebook.csv"; }
  std::string targets_bin() const { return dir + "/awm_targets.bin"; }
  std::string awm_audit() const { return dir + "/awm_audit.json"; }
};

// ---- training stages ------------------------------------------------------

void train_wm(const RunConfig& cfg, const Dataset& ds, const RunPaths& paths);
void train_am(const RunConfig& cfg, const Dataset& ds, const RunPaths& paths);
void train_awm(const RunConfig& cfg, const Dataset& ds, const RunPaths& paths);

// Loads a model's checkpoint; error names the stage whose training is missing.
wm::WorldModel<float> load_wm(const RunConfig& cfg, const RunPaths& paths);
am::ActionModel<float> load_am(const RunConfig& cfg, const RunPaths& paths);
awm::AbstractWorldModel<float> load_awm(const RunConfig& cfg, const RunPaths& paths);

// ---- latent states at pattern boundaries ----------------------------------

// Posterior-filtered states from every trajectory at the pattern boundaries
// (prefix lengths 1 and kPatternSteps+1); row order: all boundary-0 states,
// then all boundary-1 states, trajectory-major within each.
struct HarvestedStates {
  wm::BatchedState<float> z;
  std::vector<int> traj;  // source trajectory per row
  std::vector<int> t;     // boundary time per row (0 or kPatternSteps)
};
HarvestedStates harvest_states(const wm::WorldModel<float>& model, const Dataset& ds, uint64_t seed);

inline bool is_heldout_traj(int traj_idx, int heldout_every) { return traj_idx % heldout_every == 0; }

// Base seed of imagination-target generation (shared by training, the
// sequential planner backend, and audits).
inline uint64_t target_base_seed(const RunConfig& cfg) { return mix_seed(cfg.seed, {0x74677431u}); }

// ---- evaluation side ------------------------------------------------------

struct EvalTask {
  sim::Family family;
  sim::ScenarioSpec scenario;
  sim::Pattern goal;
};

// One representative task per (family, pattern) with a satisfiable
// precondition: six ball moves x three families plus lid open/close.
std::vector<EvalTask> default_task_suite(const sim::Sim& sim);

// Posterior state from the single initial observation of a scenario.
wm::BatchedState<float> filter_initial(const wm::WorldModel<float>& model, const sim::Sim& sim,
                                       const sim::SimState& s0, uint64_t seed);

// Goal image: final state of the scripted demonstration of `goal` from s0.
Tensor<float> goal_image(const sim::Sim& sim, const sim::SimState& s0, sim::Pattern goal);

nlohmann::json run_eval(const RunConfig& cfg, const RunPaths& paths);
nlohmann::json run_bench(const RunConfig& cfg, const RunPaths& paths, int reps);
nlohmann::json run_explore(const RunConfig& cfg, const RunPaths& paths);

void write_json(const std::string& path, const nlohmann::json& j);

}  // namespace aif::pipeline
