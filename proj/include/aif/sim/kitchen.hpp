// Deterministic simulated kitchen: a dish, a pot with a removable lid, a pan,
// and up to two colored balls on a counter, manipulated by a kinematic
// effector. Rendering is a flat-colored 2D raster with painter's-algorithm
// occlusion: with the lid on the pot, the pot interior is invisible, which is
// the source of epistemic uncertainty downstream.
//
// The effector is driven by absolute joint-position commands (6 joints).
// Joints 0/1 map linearly to image x/y, joint 5 is the gripper; grasp and
// release events fire on gripper threshold crossings near object positions.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace aif::sim {

enum class Loc : uint8_t { Dish, Pot, Pan, Absent };
enum class LidState : uint8_t { Open, Closed };  // Open = parked off the pot
enum class Held : uint8_t { None, Red, Blue, Lid };

using ActionVec = std::array<double, 6>;

struct SimState {
  Loc red = Loc::Absent;
  Loc blue = Loc::Absent;
  LidState lid = LidState::Open;
  ActionVec pose{};  // current joint positions, each in [-pi, pi]
  Held held = Held::None;
};

struct ScenarioSpec {
  Loc blue = Loc::Absent;
  Loc red = Loc::Absent;
  LidState lid = LidState::Open;
};

struct Image {
  int H = 0, W = 0;
  std::vector<uint8_t> rgb;  // H*W*3, row-major
};

enum class Pattern : uint8_t {
  MoveDishPot,
  MovePotDish,
  MoveDishPan,
  MovePanDish,
  MovePotPan,
  MovePanPot,
  OpenLid,
  CloseLid,
};
constexpr int kNumPatterns = 8;

std::string pattern_name(Pattern p);
Pattern pattern_from_name(const std::string& s);
std::string loc_name(Loc l);
Loc loc_from_name(const std::string& s);

class Sim {
 public:
  // Geometry is authored at 64x80 and scales with the requested size
  // (small sizes keep tests fast, motion timing is unchanged).
  explicit Sim(int H = 64, int W = 80);

  int H() const { return H_; }
  int W() const { return W_; }

  SimState reset(const ScenarioSpec& scenario, uint64_t seed) const;
  SimState step(const SimState& s, const ActionVec& a) const;
  Image render(const SimState& s) const;

  // Pattern preconditions (also the validity rule for dataset enumeration).
  bool pattern_valid(const SimState& s, Pattern p) const;
  std::string pattern_diagnosis(const SimState& s, Pattern p) const;
  // Postcondition check used by tests and task evaluation.
  bool pattern_satisfied(const SimState& before, const SimState& after, Pattern p) const;

  struct PolicyRun {
    std::vector<ActionVec> actions;       // length = kPatternSteps
    std::vector<Image> observations;      // observations[i] precedes actions[i]
    SimState final_state;
  };
  // Scripted waypoint controller with seeded waypoint jitter; throws if the
  // pattern's precondition does not hold.
  PolicyRun run_policy(const SimState& s, Pattern p, uint64_t noise_seed) const;

  static constexpr int kPatternSteps = 50;
  static constexpr double kMaxJointStep = 0.4;  // per-step displacement clamp

  // Geometry access for tests and goal predicates.
  std::pair<double, double> effector_xy(const SimState& s) const;
  std::pair<double, double> center_of(Loc l) const;        // receptacle centers
  std::pair<double, double> lid_park_center() const;
  double pot_interior_radius() const { return pot_inner_r_; }
  // Pixel indices (into H*W) of the pot interior, the occludable region.
  std::vector<int> pot_interior_pixels() const;
  ActionVec joints_for_xy(double x, double y, double lift, double grip) const;
  ActionVec home_pose() const;

 private:
  int H_, W_;
  double sx_, sy_;  // scale from the 64x80 reference geometry
  double dish_x_, pot_x_, pan_x_, row_y_, park_x_, park_y_, home_x_, home_y_;
  double recept_r_, pot_inner_r_, ball_r_, lid_r_, grasp_r_, release_r_;

  std::pair<double, double> object_xy(const SimState& s, Held obj) const;
  void apply_grasp(SimState& s) const;
  void apply_release(SimState& s) const;
};

// ---- dataset enumeration --------------------------------------------------

enum class Family : uint8_t { Blue, Red, Both };
std::string family_name(Family f);

struct ComboSpec {
  Family family;
  ScenarioSpec scenario;
  Pattern p1, p2;
};

// All valid initial states of a scenario family (ball placements x lid).
std::vector<ScenarioSpec> enumerate_initial_states(Family f);
// All valid ordered pattern pairs over all initial states of the family;
// validity of the second pattern is evaluated on the post-state of the first.
std::vector<ComboSpec> enumerate_combos(Family f, const Sim& sim);

}  // namespace aif::sim
