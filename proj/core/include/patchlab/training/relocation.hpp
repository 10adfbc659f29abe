#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "patchlab/training/training.hpp"

namespace patchlab {

struct RelocationGridConfig {
  std::vector<std::string> slots = {"ctrl", "a", "b", "eq"};
  std::vector<int> supports = {4, 8, 16, 32};  // per route
  std::vector<int> steps = {200, 800};
  double lr = 3e-3;
  bool frozen_random_base = false;
};

struct RelocationCell {
  std::string slot;
  int support = 0;
  int steps = 0;
  long cost = 0;
  double acc = 0.0;          // query route_acc
  double support_acc = 0.0;  // mean over routes
};

// True cost-0 reference carried with the grid.
struct RelocationGrid {
  std::vector<RelocationCell> cells;
  double compiled_acc = 0.0;
  std::string compiled_label = "compiled";
};

// One tuned vector per (slot, support, route); shorter step budgets are read
// off as prefixes of the longest run. Support receivers are taken in pool
// order per route, so smaller supports are prefixes of larger ones.
RelocationGrid relocation_grid(const Weights& w, std::span<const TaskInstance> support_pool,
                               std::span<const TaskInstance> query_receivers, const RelocationGridConfig& cfg,
                               double compiled_acc, Rng& rng);

// Minimal cost per slot over cells with acc >= threshold; slots that never
// reach it are absent.
std::map<std::string, long> cost_to_match(std::span<const RelocationCell> cells, double threshold);

struct RelocationFinding {
  double threshold = 0.0;
  std::map<std::string, long> costs;
  std::optional<long> ctrl_cost;
  // Non-ctrl slots matching only at >= 4x the ctrl cost, or never within the grid.
  std::vector<std::string> barrier_slots;
  bool barrier = false;
  std::string statement;
};

RelocationFinding relocation_finding(const RelocationGrid& grid, double threshold, double ratio = 4.0);

// slot,support,steps,cost,acc with the compiled row first at cost 0.
std::string relocation_csv(const RelocationGrid& grid, const std::string& meta_line);
std::string cost_to_match_csv(const RelocationFinding& finding, const std::string& meta_line);

}  // namespace patchlab
