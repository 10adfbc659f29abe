#include "patchlab/training/relocation.hpp"

#include <algorithm>

#include "patchlab/error.hpp"
#include "patchlab/metrics/metrics.hpp"

namespace patchlab {

RelocationGrid relocation_grid(const Weights& w, std::span<const TaskInstance> support_pool,
                               std::span<const TaskInstance> query_receivers, const RelocationGridConfig& cfg,
                               double compiled_acc, Rng& rng) {
  require(!cfg.slots.empty() && !cfg.supports.empty() && !cfg.steps.empty(), ErrorCode::kInvalidArgument,
          "relocation grid is empty");
  require(!query_receivers.empty(), ErrorCode::kInvalidArgument, "relocation grid needs query receivers");
  const auto routes = family_routes(query_receivers.front().family);
  const int max_steps = *std::max_element(cfg.steps.begin(), cfg.steps.end());

  RelocationGrid grid;
  grid.compiled_acc = compiled_acc;
  std::uint64_t cell_index = 0;
  for (const auto& slot : cfg.slots) {
    for (int n : cfg.supports) {
      Rng cell_rng = rng.child(cell_index++);
      // snapshots[steps] holds one tuned slot per route.
      std::map<int, std::vector<TunableSlot>> snapshots;
      std::vector<TaskInstance> support;
      for (Route route : routes) {
        int picked = 0;
        for (const auto& inst : support_pool) {
          if (inst.route == route && picked < n) {
            support.push_back(inst);
            ++picked;
          }
        }
        const TrainBudget budget{n, max_steps, cfg.lr};
        const auto record = [&](int step, const TunableSlot& ts) {
          if (std::find(cfg.steps.begin(), cfg.steps.end(), step) != cfg.steps.end()) snapshots[step].push_back(ts);
        };
        const auto final_slot = tune_slot(w, slot, support_pool, route, budget, cell_rng, cfg.frozen_random_base,
                                          record);
        if (std::find(cfg.steps.begin(), cfg.steps.end(), 0) != cfg.steps.end()) {
          TunableSlot init = final_slot;
          init.vector.fill(0.0);
          snapshots[0].push_back(init);
        }
      }
      for (int steps : cfg.steps) {
        const auto& tuned = snapshots.at(steps);
        RelocationCell cell;
        cell.slot = slot;
        cell.support = n;
        cell.steps = steps;
        cell.cost = TrainBudget{n, steps, cfg.lr}.cost();
        cell.acc = tuned_route_acc(w, query_receivers, tuned);
        cell.support_acc = tuned_route_acc(w, support, tuned);
        grid.cells.push_back(cell);
      }
    }
  }
  return grid;
}

std::map<std::string, long> cost_to_match(std::span<const RelocationCell> cells, double threshold) {
  std::map<std::string, long> out;
  for (const auto& c : cells) {
    if (c.acc < threshold) continue;
    const auto it = out.find(c.slot);
    if (it == out.end() || c.cost < it->second) out[c.slot] = c.cost;
  }
  return out;
}

RelocationFinding relocation_finding(const RelocationGrid& grid, double threshold, double ratio) {
  RelocationFinding f;
  f.threshold = threshold;
  f.costs = cost_to_match(grid.cells, threshold);
  if (const auto it = f.costs.find("ctrl"); it != f.costs.end()) f.ctrl_cost = it->second;

  std::vector<std::string> slots;
  for (const auto& c : grid.cells) {
    if (c.slot != "ctrl" && std::find(slots.begin(), slots.end(), c.slot) == slots.end()) slots.push_back(c.slot);
  }
  if (f.ctrl_cost) {
    for (const auto& s : slots) {
      const auto it = f.costs.find(s);
      if (it == f.costs.end() || static_cast<double>(it->second) >= ratio * static_cast<double>(*f.ctrl_cost)) {
        f.barrier_slots.push_back(s);
      }
    }
  }
  f.barrier = !f.barrier_slots.empty();

  std::string text;
  if (!f.ctrl_cost) {
    text = "contrary: the ctrl slot never reaches the threshold within the grid";
  } else if (f.barrier) {
    text = "barrier: ";
    for (std::size_t i = 0; i < f.barrier_slots.size(); ++i) {
      const auto& s = f.barrier_slots[i];
      const auto it = f.costs.find(s);
      text += (i ? "; " : "") + s +
              (it == f.costs.end() ? " never matches" : " matches at " + std::to_string(it->second));
    }
    text += " vs ctrl at " + std::to_string(*f.ctrl_cost);
  } else {
    text = "contrary: every non-ctrl slot matches below " + format_value(ratio, 1) + "x the ctrl cost " +
           std::to_string(*f.ctrl_cost);
  }
  f.statement = text;
  return f;
}

std::string relocation_csv(const RelocationGrid& grid, const std::string& meta_line) {
  std::string out = meta_line + "\n";
  out += "slot,support,steps,cost,acc\n";
  out += grid.compiled_label + ",0,0,0," + format_value(grid.compiled_acc) + "\n";
  for (const auto& c : grid.cells) {
    out += c.slot + "," + std::to_string(c.support) + "," + std::to_string(c.steps) + "," + std::to_string(c.cost) +
           "," + format_value(c.acc) + "\n";
  }
  return out;
}

std::string cost_to_match_csv(const RelocationFinding& finding, const std::string& meta_line) {
  std::string out = meta_line + "\n";
  out += "slot,min_cost,threshold\n";
  for (const auto& [slot, cost] : finding.costs) {
    out += slot + "," + std::to_string(cost) + "," + format_value(finding.threshold) + "\n";
  }
  out += "# finding: " + finding.statement + "\n";
  return out;
}

}  // namespace patchlab
