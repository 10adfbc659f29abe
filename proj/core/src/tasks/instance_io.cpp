#include "patchlab/tasks/instance_io.hpp"

#include <sstream>

#include "json.hpp"
#include "patchlab/error.hpp"

namespace patchlab {

using nlohmann::ordered_json;

std::string instance_to_line(const TaskInstance& inst) {
  ordered_json j;
  j["id"] = inst.id;
  j["pair_id"] = inst.pair_id;
  j["group_id"] = inst.group_id;
  j["family"] = to_string(inst.family);
  j["role"] = to_string(inst.role);
  j["tokens"] = inst.tokens;
  ordered_json slots = ordered_json::object();
  for (const auto& [name, pos] : inst.slots) slots[name] = pos;
  j["slot_map"] = slots;
  j["label"] = to_string(inst.route);
  j["target"] = inst.target;
  j["route_answers"] = inst.route_answers;
  j["corrupted"] = inst.corrupted;
  return j.dump();
}

TaskInstance instance_from_line(const std::string& line) {
  TaskInstance inst;
  try {
    const auto j = ordered_json::parse(line);
    inst.id = j.at("id").get<int>();
    inst.pair_id = j.at("pair_id").get<int>();
    inst.group_id = j.at("group_id").get<int>();
    inst.family = parse_family(j.at("family").get<std::string>());
    inst.role = parse_role(j.at("role").get<std::string>());
    inst.tokens = j.at("tokens").get<std::vector<int>>();
    for (const auto& [name, pos] : j.at("slot_map").items()) inst.slots[name] = pos.get<int>();
    inst.route = parse_route(j.at("label").get<std::string>());
    inst.target = j.at("target").get<std::vector<int>>();
    inst.route_answers = j.at("route_answers").get<std::vector<int>>();
    inst.corrupted = j.at("corrupted").get<std::vector<std::string>>();
  } catch (const ordered_json::exception& e) {
    fail(ErrorCode::kIo, std::string("bad instance record: ") + e.what());
  }
  return inst;
}

std::string dump_instances(std::span<const TaskInstance> instances) {
  std::string out;
  for (const auto& inst : instances) out += instance_to_line(inst) + "\n";
  return out;
}

std::vector<TaskInstance> parse_instances(const std::string& text) {
  std::vector<TaskInstance> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(instance_from_line(line));
  }
  return out;
}

}  // namespace patchlab
