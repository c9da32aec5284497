#include "transmod/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "transmod/error.hpp"

namespace transmod {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string read_text_file(const fs::path& path) {
  if (path.extension() == ".gz") {
    gzFile file = gzopen(path.c_str(), "rb");
    if (!file) throw SchemaError("cannot open " + path.string());
    std::string out;
    char buffer[1 << 14];
    int n = 0;
    while ((n = gzread(file, buffer, sizeof(buffer))) > 0) out.append(buffer, n);
    const bool failed = n < 0;
    gzclose(file);
    if (failed) throw SchemaError("corrupt gzip stream in " + path.string());
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

UtteranceRecord parse_utterance(const std::string& line, const fs::path& file, std::size_t lineno) {
  const std::string where = file.string() + ":" + std::to_string(lineno);
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw SchemaError(where + ": " + e.what());
  }
  if (!j.is_object()) throw SchemaError(where + ": utterance must be a JSON object");
  UtteranceRecord u;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "id") {
      if (!it->is_string()) throw SchemaError(where + ": id must be a string");
      u.id = it->get<std::string>();
    } else if (it.key() == "label") {
      if (!it->is_number_integer()) throw SchemaError(where + ": label must be an integer");
      u.label = it->get<int>();
    } else {
      Modality m;
      try {
        m = parse_modality(it.key());
      } catch (const SchemaError& e) {
        throw SchemaError(where + ": " + e.what());
      }
      if (!it->is_array()) throw SchemaError(where + ": modality '" + it.key() + "' must be an array");
      std::vector<double> values;
      values.reserve(it->size());
      for (const auto& v : *it) {
        if (!v.is_number()) throw SchemaError(where + ": non-numeric feature value");
        values.push_back(v.get<double>());
      }
      u.features.emplace(m, std::move(values));
    }
  }
  if (u.id.empty()) throw SchemaError(where + ": missing utterance id");
  if (!j.contains("label")) throw SchemaError(where + ": utterance '" + u.id + "' has no label");
  return u;
}

VideoSample read_video(const std::string& id, const fs::path& path) {
  VideoSample video{id, {}};
  std::istringstream lines(read_text_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    video.utterances.push_back(parse_utterance(line, path, lineno));
  }
  if (video.utterances.empty()) throw SchemaError("video '" + id + "' has no utterances");
  return video;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Tensor constant_rows(const std::vector<const std::vector<double>*>& rows, std::size_t width,
                     std::size_t padded_len) {
  std::vector<double> data(padded_len * width, 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r]->begin(), rows[r]->end(), data.begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  return Tensor({padded_len, width}, std::move(data));
}

}  // namespace

DatasetSchema infer_schema(const std::vector<const std::vector<VideoSample>*>& groups,
                           std::optional<std::size_t> declared_classes) {
  DatasetSchema schema;
  bool first = true;
  int max_label = -1;
  std::string first_id;
  for (const auto* group : groups) {
    for (const auto& video : *group) {
      if (video.utterances.empty()) throw SchemaError("video '" + video.id + "' has no utterances");
      for (const auto& u : video.utterances) {
        const std::string where = "utterance '" + u.id + "' of video '" + video.id + "'";
        if (first) {
          for (const auto& [m, values] : u.features) {
            schema.modalities.push_back(m);
            schema.dims[m] = values.size();
          }
          if (schema.modalities.empty()) throw SchemaError(where + " has no modality features");
          first_id = u.id;
          first = false;
        } else {
          if (u.features.size() != schema.dims.size()) {
            throw SchemaError(where + " has a different modality set than '" + first_id +
                              "' (mixed modality presence is not allowed)");
          }
          for (const auto& [m, values] : u.features) {
            auto it = schema.dims.find(m);
            if (it == schema.dims.end()) {
              throw SchemaError(where + " carries modality '" + modality_name(m) +
                                "' absent from '" + first_id + "'");
            }
            if (values.size() != it->second) {
              throw SchemaError(where + " has " + modality_name(m) + " width " +
                                std::to_string(values.size()) + ", expected " +
                                std::to_string(it->second));
            }
          }
        }
        if (u.label < 0) throw SchemaError(where + " has negative label");
        if (declared_classes && static_cast<std::size_t>(u.label) >= *declared_classes) {
          throw SchemaError(where + " has label " + std::to_string(u.label) + " outside [0, " +
                            std::to_string(*declared_classes) + ")");
        }
        max_label = std::max(max_label, u.label);
      }
    }
  }
  if (first) throw SchemaError("dataset contains no utterances");
  schema.num_classes = declared_classes.value_or(static_cast<std::size_t>(max_label + 1));
  return schema;
}

Dataset load_dataset(const fs::path& manifest_path) {
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path));
  } catch (const json::exception& e) {
    throw SchemaError("manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("splits") || !manifest["splits"].is_object()) {
    throw SchemaError("manifest " + manifest_path.string() + " lacks a 'splits' object");
  }
  const fs::path base = manifest_path.parent_path();
  Dataset dataset;
  std::set<std::string> seen_ids;
  const std::pair<const char*, std::vector<VideoSample>*> splits[] = {
      {"train", &dataset.splits.train},
      {"valid", &dataset.splits.valid},
      {"test", &dataset.splits.test}};
  for (auto it = manifest["splits"].begin(); it != manifest["splits"].end(); ++it) {
    if (it.key() != "train" && it.key() != "valid" && it.key() != "test") {
      throw SchemaError("manifest: unknown split '" + it.key() + "'");
    }
  }
  try {
    for (const auto& [name, target] : splits) {
      if (!manifest["splits"].contains(name)) continue;
      for (const auto& entry : manifest["splits"][name]) {
        const auto id = entry.at("id").get<std::string>();
        const auto rel = entry.at("path").get<std::string>();
        if (!seen_ids.insert(id).second) {
          throw SchemaError("manifest: video id '" + id + "' appears more than once");
        }
        target->push_back(read_video(id, base / rel));
      }
    }
  } catch (const json::exception& e) {
    throw SchemaError("manifest " + manifest_path.string() + ": " + e.what());
  }

  std::optional<std::size_t> declared_classes;
  if (manifest.contains("num_classes")) declared_classes = manifest["num_classes"].get<std::size_t>();
  dataset.schema = infer_schema(
      {&dataset.splits.train, &dataset.splits.valid, &dataset.splits.test}, declared_classes);

  if (manifest.contains("modalities")) {
    std::vector<Modality> declared;
    for (const auto& m : manifest["modalities"]) declared.push_back(parse_modality(m.get<std::string>()));
    std::vector<Modality> a = declared, b = dataset.schema.modalities;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) {
      throw SchemaError("manifest declares modalities " + format_modality_list(declared) +
                        " but files carry " + format_modality_list(dataset.schema.modalities));
    }
    dataset.schema.modalities = declared;
  }

  if (manifest.contains("declared")) {
    const auto& d = manifest["declared"];
    std::size_t videos = 0, utterances = 0;
    for (const auto* part : {&dataset.splits.train, &dataset.splits.valid, &dataset.splits.test}) {
      videos += part->size();
      for (const auto& v : *part) utterances += v.size();
    }
    if (d.contains("videos") && d["videos"].get<std::size_t>() != videos) {
      throw SchemaError("manifest declares " + std::to_string(d["videos"].get<std::size_t>()) +
                        " videos but lists " + std::to_string(videos));
    }
    if (d.contains("utterances") && d["utterances"].get<std::size_t>() != utterances) {
      throw SchemaError("manifest declares " + std::to_string(d["utterances"].get<std::size_t>()) +
                        " utterances but files hold " + std::to_string(utterances));
    }
  }
  return dataset;
}

fs::path write_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "videos");
  json manifest;
  manifest["format"] = "transmod-dataset";
  manifest["version"] = 1;
  json mods = json::array();
  for (auto m : dataset.schema.modalities) mods.push_back(modality_name(m));
  manifest["modalities"] = mods;
  manifest["num_classes"] = dataset.schema.num_classes;
  std::size_t videos = 0, utterances = 0;
  json splits = json::object();
  const std::pair<const char*, const std::vector<VideoSample>*> parts[] = {
      {"train", &dataset.splits.train},
      {"valid", &dataset.splits.valid},
      {"test", &dataset.splits.test}};
  for (const auto& [name, part] : parts) {
    json entries = json::array();
    for (const auto& video : *part) {
      const std::string rel = "videos/" + video.id + ".jsonl";
      std::ofstream out(dir / rel, std::ios::binary);
      if (!out) throw SchemaError("cannot write " + (dir / rel).string());
      for (const auto& u : video.utterances) {
        out << "{\"id\": " << json(u.id).dump() << ", \"label\": " << u.label;
        for (auto m : dataset.schema.modalities) {
          out << ", \"" << modality_key(m) << "\": [";
          const auto& values = u.features.at(m);
          for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) out << ", ";
            out << format_double(values[i]);
          }
          out << ']';
        }
        out << "}\n";
      }
      entries.push_back({{"id", video.id}, {"path", rel}});
      ++videos;
      utterances += video.size();
    }
    splits[name] = entries;
  }
  manifest["splits"] = splits;
  manifest["declared"] = {{"videos", videos}, {"utterances", utterances}};
  const fs::path path = dir / "manifest.json";
  std::ofstream out(path, std::ios::binary);
  out << manifest.dump(2) << '\n';
  return path;
}

std::size_t VideoTensors::valid_count() const {
  std::size_t n = 0;
  for (double m : mask.data()) n += m != 0.0;
  return n;
}

VideoTensors video_tensors(const VideoSample& video, const std::vector<Modality>& modalities) {
  VideoTensors out;
  const std::size_t n = video.size();
  for (auto m : modalities) {
    std::vector<const std::vector<double>*> rows;
    for (const auto& u : video.utterances) {
      auto it = u.features.find(m);
      if (it == u.features.end()) {
        throw ContractError("utterance '" + u.id + "' lacks modality " + modality_name(m));
      }
      rows.push_back(&it->second);
    }
    const std::size_t width = rows.front()->size();
    for (const auto* r : rows) {
      if (r->size() != width) throw SchemaError("inconsistent " + modality_name(m) + " widths in video '" + video.id + "'");
    }
    out.features[m] = constant_rows(rows, width, n);
  }
  out.mask = Tensor::full({n}, 1.0);
  for (const auto& u : video.utterances) {
    out.labels.push_back(u.label);
    out.utterance_ids.push_back(u.id);
  }
  return out;
}

Batch pad_batch(const std::vector<VideoSample>& videos, const std::vector<Modality>& modalities) {
  if (videos.empty()) throw ContractError("pad_batch: empty video list");
  Batch batch;
  for (const auto& v : videos) batch.max_len = std::max(batch.max_len, v.size());
  const std::size_t b_count = videos.size();
  const std::size_t n_max = batch.max_len;
  std::vector<double> mask(b_count * n_max, 0.0);
  batch.labels.assign(b_count * n_max, 0);
  for (std::size_t b = 0; b < b_count; ++b) {
    batch.video_ids.push_back(videos[b].id);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < videos[b].size(); ++i) {
      mask[b * n_max + i] = 1.0;
      batch.labels[b * n_max + i] = videos[b].utterances[i].label;
      ids.push_back(videos[b].utterances[i].id);
    }
    batch.utterance_ids.push_back(std::move(ids));
  }
  batch.mask = Tensor({b_count, n_max}, std::move(mask));
  for (auto m : modalities) {
    std::size_t width = 0;
    bool have_width = false;
    for (const auto& v : videos)
      for (const auto& u : v.utterances) {
        auto it = u.features.find(m);
        if (it == u.features.end()) {
          throw ContractError("utterance '" + u.id + "' lacks modality " + modality_name(m));
        }
        if (!have_width) {
          width = it->second.size();
          have_width = true;
        } else if (it->second.size() != width) {
          throw SchemaError("utterance '" + u.id + "' has " + modality_name(m) + " width " +
                            std::to_string(it->second.size()) + ", expected " + std::to_string(width));
        }
      }
    std::vector<double> data(b_count * n_max * width, 0.0);
    for (std::size_t b = 0; b < b_count; ++b)
      for (std::size_t i = 0; i < videos[b].size(); ++i) {
        const auto& values = videos[b].utterances[i].features.at(m);
        std::copy(values.begin(), values.end(),
                  data.begin() + static_cast<std::ptrdiff_t>((b * n_max + i) * width));
      }
    batch.features[m] = Tensor({b_count, n_max, width}, std::move(data));
  }
  return batch;
}

VideoTensors batch_video(const Batch& batch, std::size_t b) {
  if (b >= batch.size()) throw ContractError("batch_video: index out of range");
  const std::size_t n = batch.max_len;
  VideoTensors out;
  for (const auto& [m, t] : batch.features) {
    const std::size_t width = t.dim(2);
    auto src = t.data().subspan(b * n * width, n * width);
    out.features[m] = Tensor({n, width}, std::vector<double>(src.begin(), src.end()));
  }
  auto mask = batch.mask.data().subspan(b * n, n);
  out.mask = Tensor({n}, std::vector<double>(mask.begin(), mask.end()));
  out.labels.assign(batch.labels.begin() + static_cast<std::ptrdiff_t>(b * n),
                    batch.labels.begin() + static_cast<std::ptrdiff_t>((b + 1) * n));
  out.utterance_ids = batch.utterance_ids[b];
  out.utterance_ids.resize(n);
  return out;
}

std::vector<VideoSample> generate_xor_fusion(const XorFusionParams& params) {
  if (params.d_t < 2 || params.d_a < 2) {
    throw ConfigError("xor_fusion: feature dims must be at least 2");
  }
  if (params.utterances_per_video == 0 || params.num_videos == 0) {
    throw ConfigError("xor_fusion: need at least one video and one utterance per video");
  }
  Rng rng(params.seed);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw = [&](std::size_t dim, bool bit) {
    std::vector<double> f(dim);
    for (auto& v : f) v = params.noise * gauss(rng);
    f[0] += bit ? params.separation : -params.separation;
    return f;
  };
  std::vector<VideoSample> videos;
  videos.reserve(params.num_videos);
  for (std::size_t v = 0; v < params.num_videos; ++v) {
    char vid[32];
    std::snprintf(vid, sizeof(vid), "xor_v%05zu", v);
    VideoSample video{vid, {}};
    for (std::size_t i = 0; i < params.utterances_per_video; ++i) {
      const bool s_t = coin(rng);
      const bool s_a = coin(rng);
      UtteranceRecord u;
      char uid[48];
      std::snprintf(uid, sizeof(uid), "%s_u%03zu", vid, i);
      u.id = uid;
      u.label = (s_t != s_a) ? 1 : 0;
      u.features[Modality::kText] = draw(params.d_t, s_t);
      u.features[Modality::kAcoustic] = draw(params.d_a, s_a);
      video.utterances.push_back(std::move(u));
    }
    videos.push_back(std::move(video));
  }
  return videos;
}

Partitions split_dataset(const std::vector<VideoSample>& videos, std::array<double, 3> ratios,
                         std::uint64_t seed) {
  double total = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw ConfigError("split ratios must be nonnegative");
    total += r;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1, got " + format_double(total));
  }
  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }

  const std::size_t n = videos.size();
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> fractions{};
  std::size_t assigned = 0;
  for (std::size_t p = 0; p < 3; ++p) {
    const double exact = ratios[p] * static_cast<double>(n);
    // Guard against 0.1 * 10 = 0.99999... style rounding.
    double whole = std::floor(exact + 1e-9);
    counts[p] = static_cast<std::size_t>(whole);
    fractions[p] = exact - whole;
    assigned += counts[p];
  }
  std::array<std::size_t, 3> rank{0, 1, 2};
  std::stable_sort(rank.begin(), rank.end(),
                   [&](std::size_t a, std::size_t b) { return fractions[a] > fractions[b]; });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 3) {
    if (ratios[rank[k]] == 0.0) continue;
    ++counts[rank[k]];
    ++assigned;
  }

  Partitions out;
  std::vector<VideoSample>* targets[] = {&out.train, &out.valid, &out.test};
  std::size_t cursor = 0;
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t i = 0; i < counts[p]; ++i) targets[p]->push_back(videos[order[cursor++]]);
  }
  return out;
}

}  // namespace transmod
