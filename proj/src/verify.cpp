#include "transmod/verify.hpp"

#include <algorithm>
#include <map>

#include "transmod/model.hpp"
#include "transmod/ops.hpp"

namespace transmod {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> values(numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

// Collapses per-tensor results into one named group.
GroupCheck merge(const std::string& name, const std::vector<GroupCheck>& parts) {
  GroupCheck g{name, 0, 0.0};
  for (const auto& p : parts) {
    g.coordinates += p.coordinates;
    g.max_relative_error = std::max(g.max_relative_error, p.max_relative_error);
  }
  return g;
}

std::string group_of(const std::string& param_name) {
  const auto first = param_name.find('.');
  if (first == std::string::npos) return param_name;
  const auto second = param_name.find('.', first + 1);
  return param_name.substr(0, second);
}

// Random linear read-out so that every output coordinate matters.
Tensor readout(const Tensor& out, const Tensor& weights) { return sum(mul(out, weights)); }

void check_layer(std::vector<GroupCheck>& report, const std::string& name, ParamList params,
                 const std::vector<Tensor>& inputs, const std::function<Tensor()>& loss,
                 double eps) {
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    params.push_back({"input" + std::to_string(i), inputs[i]});
  }
  report.push_back(merge(name, check_parameter_gradients(loss, params, eps)));
}

void check_model(std::vector<GroupCheck>& report, const std::string& label,
                 const ModelConfig& config, std::uint64_t seed, std::size_t n, double eps) {
  FusionModel model(config, seed);
  Rng rng(seed + 100);
  VideoTensors video;
  for (auto m : config.modalities) {
    video.features[m] = random_tensor({n, config.feature_dims.at(m)}, rng);
  }
  video.mask = Tensor::full({n}, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    video.labels.push_back(static_cast<int>(i % config.num_classes));
    video.utterance_ids.push_back("u" + std::to_string(i));
  }
  JointLossWeights weights;
  auto loss = [&] {
    const auto out = model.forward(video);
    const Tensor cls = classification_loss(out.logits, video.labels, video.mask);
    return joint_loss(out.translation_losses, cls, weights);
  };
  const ParamList params = model.parameters();
  const auto per_tensor = check_parameter_gradients(loss, params, eps);
  std::map<std::string, std::vector<GroupCheck>> grouped;
  std::vector<std::string> order;
  for (const auto& c : per_tensor) {
    const auto g = group_of(c.name);
    if (!grouped.contains(g)) order.push_back(g);
    grouped[g].push_back(c);
  }
  for (const auto& g : order) report.push_back(merge(label + "." + g, grouped[g]));
}

}  // namespace

std::vector<GroupCheck> run_gradient_suite(const GradcheckSettings& s) {
  std::vector<GroupCheck> report;
  Rng rng(s.seed);
  const std::size_t n = s.utterances;
  const std::size_t d = s.d_model;
  const double eps = s.eps;

  {
    DenseLayer layer(3, d, rng);
    Tensor x = random_tensor({n, 3}, rng, true);
    Tensor r = random_tensor({n, d}, rng);
    ParamList p;
    layer.collect_parameters("dense", p);
    check_layer(report, "layer.dense", p, {x}, [&] { return readout(layer.forward(x), r); }, eps);
  }
  {
    BiGRULayer layer(3, s.gru_hidden, rng);
    Tensor x = random_tensor({n, 3}, rng, true);
    Tensor mask = Tensor::full({n}, 1.0);
    Tensor r = random_tensor({n, 2 * s.gru_hidden}, rng);
    ParamList p;
    layer.collect_parameters("bigru", p);
    check_layer(report, "layer.bigru", p, {x}, [&] { return readout(layer.forward(x, mask), r); }, eps);
  }
  {
    LayerNorm layer(d);
    Tensor x = random_tensor({n, d}, rng, true);
    Tensor r = random_tensor({n, d}, rng);
    ParamList p;
    layer.collect_parameters("layer_norm", p);
    // Perturb gain/offset away from 1/0 so their gradients are generic.
    for (auto& np : p) {
      Tensor t = np.tensor;
      for (auto& v : t.mutable_data()) v += 0.3 * std::uniform_real_distribution<double>(-1, 1)(rng);
    }
    check_layer(report, "layer.layer_norm", p, {x}, [&] { return readout(layer.forward(x), r); }, eps);
  }
  {
    const std::size_t heads = d % 2 == 0 ? 2 : 1;
    MultiHeadAttention layer(d, heads, rng);
    Tensor q = random_tensor({n, d}, rng, true);
    Tensor kv = random_tensor({n + 1, d}, rng, true);
    Tensor mask = Tensor::full({n + 1}, 1.0);
    Tensor r = random_tensor({n, d}, rng);
    ParamList p;
    layer.collect_parameters("attention", p);
    check_layer(report, "layer.attention", p, {q, kv},
                [&] { return readout(layer.forward(q, kv, kv, mask), r); }, eps);
  }
  {
    FeedForward layer(d, s.d_ff, rng);
    Tensor x = random_tensor({n, d}, rng, true);
    Tensor r = random_tensor({n, d}, rng);
    ParamList p;
    layer.collect_parameters("feed_forward", p);
    check_layer(report, "layer.feed_forward", p, {x}, [&] { return readout(layer.forward(x), r); }, eps);
  }

  TransformerShape shape{d, 1, s.d_ff, 1, d % 2 == 0};
  {
    TransformerStack stack(shape, rng);
    Tensor src = random_tensor({n, d}, rng, true);
    Tensor mask = Tensor::full({n}, 1.0);
    Tensor r = random_tensor({n, d}, rng);
    ParamList all, enc;
    stack.collect_parameters("stack", all);
    for (const auto& np : all)
      if (np.name.find(".encoder") != std::string::npos) enc.push_back(np);
    check_layer(report, "layer.transformer_encode", enc, {src},
                [&] { return readout(stack.encode(src, mask), r); }, eps);

    ParamList dec;
    for (const auto& np : all)
      if (np.name.find(".decoder") != std::string::npos) dec.push_back(np);
    Tensor tgt = random_tensor({n, d}, rng, true);
    Tensor memory = random_tensor({n, d}, rng, true);
    check_layer(report, "layer.transformer_decode", dec, {tgt, memory},
                [&] { return readout(stack.decode(tgt, memory, mask, mask), r); }, eps);
  }

  ModelConfig tri;
  tri.modalities = {Modality::kText, Modality::kVisual, Modality::kAcoustic};
  tri.feature_dims = {{Modality::kText, 3}, {Modality::kVisual, 2}, {Modality::kAcoustic, 3}};
  tri.num_classes = 2;
  tri.d_model = d;
  tri.heads = 1;
  tri.layers = 1;
  tri.d_ff = s.d_ff;
  tri.gru_hidden = s.gru_hidden;
  tri.positional_encoding = d % 2 == 0;
  tri.dropout = 0.0;
  check_model(report, "transmodality", tri, s.seed + 1, n, eps);

  ModelConfig bi = tri;
  bi.modalities = {Modality::kText, Modality::kAcoustic};
  bi.feature_dims.erase(Modality::kVisual);
  bi.num_classes = 3;
  check_model(report, "bitransmodality", bi, s.seed + 2, n, eps);
  return report;
}

}  // namespace transmod
