#include "admix/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace admix {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'M', 'I', 'X', 'C', 'K', '1'};
constexpr uint32_t kVersion = 1;

nlohmann::json config_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},   {"d_model", c.d_model},
          {"d_ff", c.d_ff},               {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},         {"dropout", c.dropout},
          {"max_len", c.max_len},         {"shared_embeddings", c.shared_embeddings},
          {"tie_output", c.tie_output}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int64_t>();
  c.d_model = j.at("d_model").get<int64_t>();
  c.d_ff = j.at("d_ff").get<int64_t>();
  c.n_layers = j.at("n_layers").get<int64_t>();
  c.n_heads = j.at("n_heads").get<int64_t>();
  c.dropout = j.at("dropout").get<double>();
  c.max_len = j.at("max_len").get<int64_t>();
  c.shared_embeddings = j.at("shared_embeddings").get<bool>();
  c.tie_output = j.at("tie_output").get<bool>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Transformer& model, uint64_t vocab_hash) {
  nlohmann::json header;
  header["model"] = config_json(model.config());
  header["vocab_hash"] = vocab_hash;
  header["dtype"] = "f32";
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& p : model.params())
    manifest.push_back({{"name", p.name()}, {"shape", p.shape()}});
  header["params"] = manifest;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  const uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& p : model.params())
    out.write(reinterpret_cast<const char*>(p.data().data()),
              static_cast<std::streamsize>(p.data().size() * sizeof(float)));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: " + path + " is not a checkpoint file");
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kVersion)
    throw std::runtime_error("checkpoint: " + path + " has unsupported version " +
                             std::to_string(version));
  uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("checkpoint: truncated header in " + path);
  const auto header = nlohmann::json::parse(header_str);
  if (header.at("dtype").get<std::string>() != "f32")
    throw std::runtime_error("checkpoint: unsupported dtype in " + path);

  LoadedCheckpoint ck;
  ck.vocab_hash = header.at("vocab_hash").get<uint64_t>();
  Rng init(0);  // values are overwritten below
  ck.model = std::make_unique<Transformer>(config_from_json(header.at("model")), init);

  std::unordered_map<std::string, TensorT<float>*> by_name;
  for (auto& p : ck.model->params()) by_name[p.name()] = &p;

  size_t loaded = 0;
  for (const auto& entry : header.at("params")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    const auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: unexpected parameter '" + name + "' in " + path);
    if (it->second->shape() != shape)
      throw std::runtime_error("checkpoint: parameter '" + name + "' has shape " +
                               shape_str(shape) + ", model expects " +
                               shape_str(it->second->shape()));
    in.read(reinterpret_cast<char*>(it->second->data().data()),
            static_cast<std::streamsize>(it->second->data().size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated data in " + path);
    ++loaded;
  }
  if (loaded != ck.model->params().size())
    throw std::runtime_error("checkpoint: " + path + " lists " + std::to_string(loaded) +
                             " parameters, model has " +
                             std::to_string(ck.model->params().size()));
  return ck;
}

}  // namespace admix
