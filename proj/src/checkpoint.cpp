#include "transmod/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "transmod/error.hpp"

namespace transmod {

namespace {

using json = nlohmann::ordered_json;

constexpr const char* kFormat = "transmod-checkpoint";
constexpr int kVersion = 1;
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string encode_f64le(std::span<const double> values) {
  std::string bytes(values.size() * 8, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    std::uint32_t chunk = static_cast<unsigned char>(bytes[i]) << 16;
    if (i + 1 < bytes.size()) chunk |= static_cast<unsigned char>(bytes[i + 1]) << 8;
    if (i + 2 < bytes.size()) chunk |= static_cast<unsigned char>(bytes[i + 2]);
    out += kAlphabet[(chunk >> 18) & 63];
    out += kAlphabet[(chunk >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(chunk >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kAlphabet[chunk & 63] : '=';
  }
  return out;
}

std::vector<double> decode_f64le(const std::string& text, const std::string& name) {
  auto value_of = [&](char c) -> std::uint32_t {
    const char* p = std::strchr(kAlphabet, c);
    if (!p || c == '\0') throw SchemaError("checkpoint: bad base64 in tensor " + name);
    return static_cast<std::uint32_t>(p - kAlphabet);
  };
  if (text.size() % 4 != 0) throw SchemaError("checkpoint: truncated payload for tensor " + name);
  std::string bytes;
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t chunk = (value_of(text[i]) << 18) | (value_of(text[i + 1]) << 12);
    bytes += static_cast<char>((chunk >> 16) & 0xFF);
    if (text[i + 2] != '=') {
      chunk |= value_of(text[i + 2]) << 6;
      bytes += static_cast<char>((chunk >> 8) & 0xFF);
    }
    if (text[i + 3] != '=') {
      chunk |= value_of(text[i + 3]);
      bytes += static_cast<char>(chunk & 0xFF);
    }
  }
  if (bytes.size() % 8 != 0) throw SchemaError("checkpoint: payload of " + name + " is not float64");
  std::vector<double> values(bytes.size() / 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    }
    values[i] = std::bit_cast<double>(bits);
  }
  return values;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const FusionModel& model,
                     const ExperimentConfig& config, std::uint64_t seed) {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["seed"] = seed;
  json cfg = json::object();
  for (const auto& key : config_keys()) cfg[key] = get_setting(config, key);
  j["config"] = cfg;

  const ModelConfig& mc = model.config();
  json arch;
  arch["modalities"] = format_modality_list(mc.modalities);
  json dims = json::object();
  for (const auto& [m, d] : mc.feature_dims) dims[modality_name(m)] = d;
  arch["feature_dims"] = dims;
  arch["num_classes"] = mc.num_classes;
  arch["d_model"] = mc.d_model;
  arch["heads"] = mc.heads;
  arch["layers"] = mc.layers;
  arch["d_ff"] = mc.d_ff;
  arch["gru_hidden"] = mc.gru_hidden;
  arch["positional_encoding"] = mc.positional_encoding;
  arch["backward_translation"] = mc.backward_translation;
  arch["dropout"] = mc.dropout;
  j["model"] = arch;

  json params = json::array();
  for (const auto& p : model.parameters()) {
    params.push_back({{"name", p.name},
                      {"shape", p.tensor.shape()},
                      {"dtype", "float64-le"},
                      {"data", encode_f64le(p.tensor.data())}});
  }
  j["parameters"] = params;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write checkpoint " + path.string());
  out << j.dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError("checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kFormat) throw SchemaError(path.string() + " is not a checkpoint");
  if (j.value("version", 0) != kVersion) {
    throw SchemaError("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  }

  Checkpoint ck;
  try {
    ck.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [key, value] : j.at("config").items()) {
      apply_setting(ck.config, key, value.get<std::string>());
    }
    const auto& arch = j.at("model");
    ModelConfig& mc = ck.model_config;
    mc.modalities = parse_modality_list(arch.at("modalities").get<std::string>());
    for (const auto& [m, d] : arch.at("feature_dims").items()) {
      mc.feature_dims[parse_modality(m)] = d.get<std::size_t>();
    }
    mc.num_classes = arch.at("num_classes").get<std::size_t>();
    mc.d_model = arch.at("d_model").get<std::size_t>();
    mc.heads = arch.at("heads").get<std::size_t>();
    mc.layers = arch.at("layers").get<std::size_t>();
    mc.d_ff = arch.at("d_ff").get<std::size_t>();
    mc.gru_hidden = arch.at("gru_hidden").get<std::size_t>();
    mc.positional_encoding = arch.at("positional_encoding").get<bool>();
    mc.backward_translation = arch.at("backward_translation").get<bool>();
    mc.dropout = arch.at("dropout").get<double>();

    ck.model = std::make_unique<FusionModel>(mc, ck.seed);
    std::map<std::string, const json*> stored;
    for (const auto& p : j.at("parameters")) stored[p.at("name").get<std::string>()] = &p;
    const ParamList params = ck.model->parameters();
    if (stored.size() != params.size()) {
      throw SchemaError("checkpoint holds " + std::to_string(stored.size()) +
                        " tensors, model expects " + std::to_string(params.size()));
    }
    for (const auto& p : params) {
      auto it = stored.find(p.name);
      if (it == stored.end()) throw SchemaError("checkpoint lacks tensor " + p.name);
      const auto shape = it->second->at("shape").get<Shape>();
      if (shape != p.tensor.shape()) {
        throw SchemaError("tensor " + p.name + " has shape " + shape_str(shape) + ", expected " +
                          shape_str(p.tensor.shape()));
      }
      const auto values = decode_f64le(it->second->at("data").get<std::string>(), p.name);
      if (values.size() != p.tensor.size()) throw SchemaError("tensor " + p.name + " payload size mismatch");
      Tensor t = p.tensor;
      std::copy(values.begin(), values.end(), t.mutable_data().begin());
    }
  } catch (const json::exception& e) {
    throw SchemaError("checkpoint " + path.string() + ": " + e.what());
  }
  return ck;
}

}  // namespace transmod
