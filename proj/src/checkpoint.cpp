#include "sctlab/checkpoint.hpp"

#include <fstream>
#include <map>

#include "sctlab/errors.hpp"

namespace sctlab::num {

using nlohmann::json;
using nlohmann::ordered_json;

void write_checkpoint(const std::filesystem::path& path, const json& meta,
                      const ParameterList& params, const OptimizerState* optimizer) {
  ordered_json doc;
  doc["version"] = kCheckpointVersion;
  doc["format"] = "sctlab-checkpoint";
  doc["meta"] = meta;
  ordered_json tensors = ordered_json::array();
  for (const auto& p : params) {
    tensors.push_back({{"name", p.name},
                       {"shape", p.tensor.shape()},
                       {"values", std::vector<double>(p.tensor.values().begin(),
                                                      p.tensor.values().end())}});
  }
  doc["params"] = std::move(tensors);
  if (optimizer) {
    doc["optimizer"] = {{"step_count", optimizer->step_count},
                        {"base_lr", optimizer->base_lr},
                        {"weight_decay", optimizer->weight_decay},
                        {"warmup_steps", optimizer->warmup_steps},
                        {"first_moment", optimizer->first_moment},
                        {"second_moment", optimizer->second_moment}};
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out << doc.dump() << '\n';
    if (!out) throw std::runtime_error("write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  Checkpoint ckpt;
  try {
    const json doc = json::parse(in);
    ckpt.version = doc.at("version").get<int>();
    if (ckpt.version != kCheckpointVersion) {
      throw ParseError("checkpoint version " + std::to_string(ckpt.version) + " unsupported");
    }
    if (doc.value("format", "") != "sctlab-checkpoint") throw ParseError("not an sctlab checkpoint");
    ckpt.meta = doc.at("meta");
    for (const auto& t : doc.at("params")) {
      StoredTensor s{t.at("name").get<std::string>(), t.at("shape").get<Shape>(),
                     t.at("values").get<std::vector<double>>()};
      if (shape_size(s.shape) != s.values.size()) {
        throw ParseError("tensor '" + s.name + "' has " + std::to_string(s.values.size()) +
                         " values for shape " + shape_string(s.shape));
      }
      ckpt.params.push_back(std::move(s));
    }
    if (doc.contains("optimizer")) {
      const auto& o = doc["optimizer"];
      OptimizerState st;
      st.step_count = o.at("step_count").get<std::size_t>();
      st.base_lr = o.at("base_lr").get<double>();
      st.weight_decay = o.at("weight_decay").get<double>();
      st.warmup_steps = o.at("warmup_steps").get<std::size_t>();
      st.first_moment = o.at("first_moment").get<std::vector<std::vector<double>>>();
      st.second_moment = o.at("second_moment").get<std::vector<std::vector<double>>>();
      ckpt.optimizer = std::move(st);
    }
  } catch (const json::exception& e) {
    throw ParseError("checkpoint '" + path.string() + "': " + e.what());
  }
  return ckpt;
}

void assign_parameters(const ParameterList& params, const Checkpoint& ckpt) {
  std::map<std::string, const StoredTensor*> by_name;
  for (const auto& s : ckpt.params) by_name[s.name] = &s;
  if (by_name.size() != params.size()) {
    throw DimensionError("checkpoint holds " + std::to_string(by_name.size()) +
                         " tensors, model has " + std::to_string(params.size()));
  }
  for (const auto& p : params) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) throw DimensionError("checkpoint lacks tensor '" + p.name + "'");
    if (it->second->shape != p.tensor.shape()) {
      throw DimensionError("tensor '" + p.name + "' stored as " +
                           shape_string(it->second->shape) + ", model expects " +
                           shape_string(p.tensor.shape()));
    }
  }
  for (const auto& p : params) {
    Tensor handle = p.tensor;
    auto dst = handle.mutable_values();
    const auto& src = by_name.at(p.name)->values;
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace sctlab::num
