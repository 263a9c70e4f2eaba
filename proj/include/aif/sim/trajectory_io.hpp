// Trajectory container and its bit-exact on-disk codec, plus full dataset
// generation (all valid pattern pairs per scenario family, N demos each).
//
// File layout: magic "AIFTRJ01"; little-endian u32 T, A(=6), H, W, C(=3);
// T*A float32 actions; T*H*W*C u8 pixels (round(intensity*255)).
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aif/sim/kitchen.hpp"

namespace aif::sim {

struct Trajectory {
  int T = 0, A = 6, H = 0, W = 0, C = 3;
  std::vector<float> actions;   // T*A
  std::vector<uint8_t> pixels;  // T*H*W*C
};

void write_trajectory(const std::string& path, const Trajectory& t);
Trajectory read_trajectory(const std::string& path);

struct TrajectoryMeta {
  std::string file;  // basename within the dataset directory
  ComboSpec combo;
  uint64_t seed = 0;
};

struct DatasetConfig {
  std::vector<Family> families = {Family::Blue, Family::Red, Family::Both};
  int demos_per_combo = 5;
  int T = 100;
  int H = 64, W = 80;
  uint64_t seed = 0;
};

// Generates every trajectory of the configured families into out_dir and
// writes index.jsonl (one JSON object per line: file/scenario/pattern_pair/seed).
std::vector<TrajectoryMeta> build_dataset(const DatasetConfig& cfg, const std::string& out_dir);

// Reads index.jsonl back (paths stay relative to the dataset directory).
std::vector<TrajectoryMeta> read_dataset_index(const std::string& dir);

}  // namespace aif::sim
