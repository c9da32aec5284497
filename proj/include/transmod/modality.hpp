#pragma once

#include <compare>
#include <string>
#include <vector>

namespace transmod {

enum class Modality { kText, kVisual, kAcoustic };

char modality_key(Modality m);
std::string modality_name(Modality m);
/// Accepts "t", "v", "a"; throws SchemaError otherwise.
Modality parse_modality(const std::string& key);
/// Parses a comma-separated list such as "t,v,a". Rejects duplicates.
std::vector<Modality> parse_modality_list(const std::string& list);
std::string format_modality_list(const std::vector<Modality>& modalities);

/// One translation direction, source -> target.
struct Direction {
  Modality from;
  Modality to;

  std::string name() const;  // "t->v"
  auto operator<=>(const Direction&) const = default;
};

}  // namespace transmod
