#include "transmod/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "transmod/error.hpp"

namespace transmod {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const auto out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a nonnegative integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("key '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

struct Entry {
  std::function<void(ExperimentConfig&, const std::string& key, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename Field>
Entry double_entry(Field field) {
  return {[field](ExperimentConfig& c, const std::string& k, const std::string& v) {
            field(c) = to_double(k, v);
          },
          [field](const ExperimentConfig& c) { return fmt17(field(c)); }};
}

template <typename Field>
Entry size_entry(Field field) {
  return {[field](ExperimentConfig& c, const std::string& k, const std::string& v) {
            field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(to_u64(k, v));
          },
          [field](const ExperimentConfig& c) {
            return std::to_string(field(c));
          }};
}

template <typename Field>
Entry bool_entry(Field field) {
  return {[field](ExperimentConfig& c, const std::string& k, const std::string& v) {
            field(c) = to_bool(k, v);
          },
          [field](const ExperimentConfig& c) {
            return std::string(field(c) ? "true" : "false");
          }};
}

Entry weight_entry(Modality from, Modality to) {
  const Direction d{from, to};
  return {[d](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.train.weights.translation[d] = to_double(k, v);
          },
          [d](const ExperimentConfig& c) { return fmt17(c.train.weights.weight(d)); }};
}

const std::map<std::string, Entry>& registry() {
  static const std::map<std::string, Entry> entries = [] {
    std::map<std::string, Entry> e;
    e["learning_rate"] = double_entry([](auto& c) -> auto& { return c.train.adam.learning_rate; });
    e["beta1"] = double_entry([](auto& c) -> auto& { return c.train.adam.beta1; });
    e["beta2"] = double_entry([](auto& c) -> auto& { return c.train.adam.beta2; });
    e["adam_eps"] = double_entry([](auto& c) -> auto& { return c.train.adam.epsilon; });
    e["max_epochs"] = size_entry([](auto& c) -> auto& { return c.train.max_epochs; });
    e["patience"] = size_entry([](auto& c) -> auto& { return c.train.patience; });
    e["batch_size"] = size_entry([](auto& c) -> auto& { return c.train.batch_size; });
    e["seed"] = size_entry([](auto& c) -> auto& { return c.train.seed; });
    e["w_cls"] = double_entry([](auto& c) -> auto& { return c.train.weights.classification; });
    const Modality all[] = {Modality::kText, Modality::kVisual, Modality::kAcoustic};
    for (auto from : all)
      for (auto to : all)
        if (from != to) e["w_" + modality_name(from) + "_" + modality_name(to)] = weight_entry(from, to);
    e["dropout"] = double_entry([](auto& c) -> auto& { return c.train.model.dropout; });
    e["d_model"] = size_entry([](auto& c) -> auto& { return c.train.model.d_model; });
    e["heads"] = size_entry([](auto& c) -> auto& { return c.train.model.heads; });
    e["layers"] = size_entry([](auto& c) -> auto& { return c.train.model.layers; });
    e["d_ff"] = size_entry([](auto& c) -> auto& { return c.train.model.d_ff; });
    e["gru_hidden"] = size_entry([](auto& c) -> auto& { return c.train.model.gru_hidden; });
    e["positional_encoding"] =
        bool_entry([](auto& c) -> auto& { return c.train.model.positional_encoding; });
    e["backward_translation"] =
        bool_entry([](auto& c) -> auto& { return c.train.model.backward_translation; });
    e["modalities"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) {
                         c.modalities = v.empty() ? std::vector<Modality>{} : parse_modality_list(v);
                       },
                       [](const ExperimentConfig& c) { return format_modality_list(c.modalities); }};
    e["ablation_seeds"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                             c.ablation_seeds.clear();
                             for (const auto& s : split_list(v)) c.ablation_seeds.push_back(to_u64(k, s));
                           },
                           [](const ExperimentConfig& c) {
                             std::string out;
                             for (std::size_t i = 0; i < c.ablation_seeds.size(); ++i) {
                               if (i) out += ',';
                               out += std::to_string(c.ablation_seeds[i]);
                             }
                             return out;
                           }};
    e["split"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                    const auto parts = split_list(v);
                    if (parts.size() != 3) throw ConfigError("key 'split' expects three ratios");
                    for (std::size_t i = 0; i < 3; ++i) c.split[i] = to_double(k, parts[i]);
                  },
                  [](const ExperimentConfig& c) {
                    return fmt17(c.split[0]) + "," + fmt17(c.split[1]) + "," + fmt17(c.split[2]);
                  }};
    e["synth_videos"] = size_entry([](auto& c) -> auto& { return c.synth.num_videos; });
    e["synth_utterances"] =
        size_entry([](auto& c) -> auto& { return c.synth.utterances_per_video; });
    e["synth_d_t"] = size_entry([](auto& c) -> auto& { return c.synth.d_t; });
    e["synth_d_a"] = size_entry([](auto& c) -> auto& { return c.synth.d_a; });
    e["synth_separation"] = double_entry([](auto& c) -> auto& { return c.synth.separation; });
    e["synth_noise"] = double_entry([](auto& c) -> auto& { return c.synth.noise; });
    e["synth_seed"] = size_entry([](auto& c) -> auto& { return c.synth.seed; });
    e["gradcheck_d_model"] = size_entry([](auto& c) -> auto& { return c.gradcheck.d_model; });
    e["gradcheck_utterances"] =
        size_entry([](auto& c) -> auto& { return c.gradcheck.utterances; });
    e["gradcheck_gru_hidden"] =
        size_entry([](auto& c) -> auto& { return c.gradcheck.gru_hidden; });
    e["gradcheck_d_ff"] = size_entry([](auto& c) -> auto& { return c.gradcheck.d_ff; });
    e["gradcheck_eps"] = double_entry([](auto& c) -> auto& { return c.gradcheck.eps; });
    e["gradcheck_tolerance"] =
        double_entry([](auto& c) -> auto& { return c.gradcheck.tolerance; });
    e["gradcheck_seed"] = size_entry([](auto& c) -> auto& { return c.gradcheck.seed; });
    return e;
  }();
  return entries;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : registry()) keys.push_back(k);
  return keys;
}

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const auto& entries = registry();
  auto it = entries.find(key);
  if (it == entries.end()) {
    std::string valid;
    for (const auto& k : config_keys()) valid += (valid.empty() ? "" : ", ") + k;
    throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid);
  }
  it->second.set(config, key, value);
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  apply_setting(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void apply_config_file(ExperimentConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_override(config, line);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string get_setting(const ExperimentConfig& config, const std::string& key) {
  auto it = registry().find(key);
  if (it == registry().end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.get(config);
}

std::string dump_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [k, entry] : registry()) out += k + " = " + entry.get(config) + "\n";
  return out;
}

}  // namespace transmod
