#include "patchlab/model/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "patchlab/error.hpp"

namespace patchlab {

using nlohmann::json;

std::string checkpoint_to_json(const Weights& w) {
  const auto& c = w.config;
  json doc;
  doc["format"] = kCheckpointFormat;
  doc["config"] = {{"n_layers", c.n_layers}, {"n_heads", c.n_heads},     {"d_model", c.d_model},
                   {"d_head", c.d_head},     {"d_mlp", c.d_mlp},         {"vocab_size", c.vocab_size},
                   {"max_positions", c.max_positions}};
  json params = json::object();
  for_each_parameter(w, [&](const std::string& name, const Tensor& t) {
    params[name] = {{"shape", t.shape()}, {"data", t.values()}};
  });
  doc["params"] = std::move(params);
  return doc.dump();
}

Weights checkpoint_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo, std::string("checkpoint is not valid JSON: ") + e.what());
  }
  require(doc.value("format", 0) == kCheckpointFormat, ErrorCode::kIo, "unsupported checkpoint format");
  ModelConfig c;
  try {
    const auto& jc = doc.at("config");
    c.n_layers = jc.at("n_layers").get<int>();
    c.n_heads = jc.at("n_heads").get<int>();
    c.d_model = jc.at("d_model").get<int>();
    c.d_head = jc.at("d_head").get<int>();
    c.d_mlp = jc.at("d_mlp").get<int>();
    c.vocab_size = jc.at("vocab_size").get<int>();
    c.max_positions = jc.at("max_positions").get<int>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo, std::string("checkpoint config: ") + e.what());
  }
  Weights w = zero_weights(c);
  const auto& params = doc.at("params");
  for_each_parameter(w, [&](const std::string& name, Tensor& t) {
    require(params.contains(name), ErrorCode::kIo, "checkpoint lacks parameter " + name);
    const auto& p = params.at(name);
    auto shape = p.at("shape").get<Tensor::Shape>();
    require(shape == t.shape(), ErrorCode::kIo, "checkpoint shape mismatch for " + name);
    t = Tensor(std::move(shape), p.at("data").get<std::vector<double>>());
  });
  require(all_finite(w), ErrorCode::kNumericDomain, "checkpoint holds non-finite weights");
  return w;
}

void save_checkpoint(const Weights& w, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path);
  out << checkpoint_to_json(w);
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + path);
}

Weights load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace patchlab
