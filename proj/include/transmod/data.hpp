#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "transmod/modality.hpp"
#include "transmod/tensor.hpp"

namespace transmod {

struct UtteranceRecord {
  std::string id;
  std::map<Modality, std::vector<double>> features;
  int label = 0;

  bool operator==(const UtteranceRecord&) const = default;
};

/// One video: utterances in their original order.
struct VideoSample {
  std::string id;
  std::vector<UtteranceRecord> utterances;

  std::size_t size() const { return utterances.size(); }
  bool operator==(const VideoSample&) const = default;
};

/// Modalities present, their feature widths and the class count.
struct DatasetSchema {
  std::vector<Modality> modalities;
  std::map<Modality, std::size_t> dims;
  std::size_t num_classes = 0;
};

struct Partitions {
  std::vector<VideoSample> train;
  std::vector<VideoSample> valid;
  std::vector<VideoSample> test;
};

struct Dataset {
  DatasetSchema schema;
  Partitions splits;
};

/// Validates that every utterance carries the same modalities with the same
/// widths and a nonnegative label. Throws SchemaError naming the offending
/// utterance. num_classes is max label + 1 unless declared is larger.
DatasetSchema infer_schema(const std::vector<const std::vector<VideoSample>*>& groups,
                           std::optional<std::size_t> declared_classes = std::nullopt);

/// Reads a manifest JSON and the JSON-lines video files it lists (".gz"
/// files are decompressed). Splits must be disjoint by video id. When the
/// manifest declares video/utterance totals they are checked.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes dataset as manifest.json plus one JSON-lines file per video under
/// dir/videos. Floats are printed with 17 significant digits. Returns the
/// manifest path.
std::filesystem::path write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Utterance-aligned constant tensors for a single (possibly padded) video.
struct VideoTensors {
  std::map<Modality, Tensor> features;  // [N x d_lambda]
  Tensor mask;                          // [N], 1 = real utterance
  std::vector<int> labels;              // N entries, 0 at padding
  std::vector<std::string> utterance_ids;

  std::size_t length() const { return labels.size(); }
  std::size_t valid_count() const;
};

VideoTensors video_tensors(const VideoSample& video, const std::vector<Modality>& modalities);

/// Videos padded with trailing zero rows to the longest one.
struct Batch {
  std::vector<std::string> video_ids;
  std::size_t max_len = 0;
  std::map<Modality, Tensor> features;  // [B x N_max x d_lambda]
  std::vector<int> labels;              // B * N_max, row-major
  Tensor mask;                          // [B x N_max]
  std::vector<std::vector<std::string>> utterance_ids;

  std::size_t size() const { return video_ids.size(); }
};

/// Throws ContractError on an empty list, SchemaError on inconsistent dims.
Batch pad_batch(const std::vector<VideoSample>& videos, const std::vector<Modality>& modalities);

/// Row b of a batch as an [N_max x d] view (copied).
VideoTensors batch_video(const Batch& batch, std::size_t b);

struct XorFusionParams {
  std::size_t num_videos = 500;
  std::size_t utterances_per_video = 5;
  std::size_t d_t = 4;
  std::size_t d_a = 4;
  double separation = 2.0;
  double noise = 1.0;
  std::uint64_t seed = 7;
};

/// Synthetic two-modality (t, a) task. Each utterance draws independent bits
/// s_t and s_a; label = s_t XOR s_a. The first text coordinate has mean
/// +separation if s_t else -separation, all coordinates get N(0, noise^2);
/// acoustic likewise from s_a. Either modality alone is uninformative.
std::vector<VideoSample> generate_xor_fusion(const XorFusionParams& params);

/// Seeded shuffle of videos, then floor(ratio * n) per partition with the
/// remainder handed out by largest fractional part (ties to the earlier
/// partition). Throws ConfigError unless the ratios sum to 1 within 1e-9.
Partitions split_dataset(const std::vector<VideoSample>& videos, std::array<double, 3> ratios,
                         std::uint64_t seed);

}  // namespace transmod
