#include "transmod/modality.hpp"

#include <algorithm>
#include <sstream>

#include "transmod/error.hpp"

namespace transmod {

char modality_key(Modality m) {
  switch (m) {
    case Modality::kText:
      return 't';
    case Modality::kVisual:
      return 'v';
    case Modality::kAcoustic:
      return 'a';
  }
  return '?';
}

std::string modality_name(Modality m) { return std::string(1, modality_key(m)); }

Modality parse_modality(const std::string& key) {
  if (key == "t") return Modality::kText;
  if (key == "v") return Modality::kVisual;
  if (key == "a") return Modality::kAcoustic;
  throw SchemaError("unknown modality key '" + key + "' (expected t, v or a)");
}

std::vector<Modality> parse_modality_list(const std::string& list) {
  std::vector<Modality> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto m = parse_modality(item);
    if (std::find(out.begin(), out.end(), m) != out.end()) {
      throw ConfigError("modality '" + item + "' listed twice in '" + list + "'");
    }
    out.push_back(m);
  }
  return out;
}

std::string format_modality_list(const std::vector<Modality>& modalities) {
  std::string out;
  for (std::size_t i = 0; i < modalities.size(); ++i) {
    if (i) out += ',';
    out += modality_key(modalities[i]);
  }
  return out;
}

std::string Direction::name() const {
  return modality_name(from) + "->" + modality_name(to);
}

}  // namespace transmod
