#pragma once

#include <span>
#include <string>
#include <vector>

#include "patchlab/tasks/tasks.hpp"

namespace patchlab {

// One JSON object per line with a fixed field order:
// id, pair_id, group_id, family, role, tokens, slot_map, label, target,
// route_answers, corrupted.
std::string instance_to_line(const TaskInstance& inst);
TaskInstance instance_from_line(const std::string& line);

std::string dump_instances(std::span<const TaskInstance> instances);
std::vector<TaskInstance> parse_instances(const std::string& text);

}  // namespace patchlab
