#include "iad/detector.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>

#include "iad/autoencoder.hpp"
#include "iad/deep_svdd.hpp"
#include "iad/errors.hpp"
#include "iad/maf.hpp"

namespace iad {

using nlohmann::json;

namespace {
constexpr int kCheckpointVersion = 1;
constexpr const char* kCheckpointFormat = "iad-detector";
}  // namespace

std::string_view to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::kSvddOneClass:
      return "svdd-oc";
    case DetectorKind::kSvddSoftBoundary:
      return "svdd-sb";
    case DetectorKind::kAutoencoder:
      return "ae";
    case DetectorKind::kMaf:
      return "maf";
  }
  return "unknown";
}

DetectorKind parse_detector_kind(std::string_view name) {
  if (name == "svdd-oc" || name == "svdd") return DetectorKind::kSvddOneClass;
  if (name == "svdd-sb") return DetectorKind::kSvddSoftBoundary;
  if (name == "ae") return DetectorKind::kAutoencoder;
  if (name == "maf") return DetectorKind::kMaf;
  throw ConfigError("unknown detector '" + std::string(name) +
                    "' (expected svdd-oc, svdd-sb, ae or maf)");
}

std::vector<std::size_t> default_hidden_widths(std::size_t input_dim) {
  if (input_dim >= 100) return {128, 64, 32};
  if (input_dim <= 10) return {32, 16, 4};
  return {32, 16, 8};
}

void DetectorConfig::validate() const {
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky slope must be in [0,1)");
  for (auto w : hidden) {
    if (w == 0) throw ConfigError("hidden widths must be positive");
  }
  if (kind == DetectorKind::kSvddSoftBoundary) {
    if (!(nu > 0.0 && nu <= 1.0)) throw ConfigError("nu must lie in (0, 1]");
    if (radius_refresh_every == 0) throw ConfigError("radius refresh interval must be >= 1");
  }
  if (kind == DetectorKind::kMaf) {
    if (flow_blocks == 0 || flow_hidden == 0 || flow_hidden_layers == 0) {
      throw ConfigError("flow blocks, hidden units and hidden layers must be >= 1");
    }
  }
}

json DetectorConfig::to_json() const {
  return json{{"type", std::string(iad::to_string(kind))},
              {"hidden", hidden},
              {"leaky_slope", leaky_slope},
              {"nu", nu},
              {"radius_warmup_epochs", radius_warmup_epochs},
              {"radius_refresh_every", radius_refresh_every},
              {"flow_blocks", flow_blocks},
              {"flow_hidden", flow_hidden},
              {"flow_hidden_layers", flow_hidden_layers},
              {"literal_likelihood_score", literal_likelihood_score}};
}

DetectorConfig DetectorConfig::from_json(const json& j) {
  DetectorConfig c;
  if (j.contains("type")) c.kind = parse_detector_kind(j.at("type").get<std::string>());
  c.hidden = j.value("hidden", c.hidden);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.nu = j.value("nu", c.nu);
  c.radius_warmup_epochs = j.value("radius_warmup_epochs", c.radius_warmup_epochs);
  c.radius_refresh_every = j.value("radius_refresh_every", c.radius_refresh_every);
  c.flow_blocks = j.value("flow_blocks", c.flow_blocks);
  c.flow_hidden = j.value("flow_hidden", c.flow_hidden);
  c.flow_hidden_layers = j.value("flow_hidden_layers", c.flow_hidden_layers);
  c.literal_likelihood_score = j.value("literal_likelihood_score", c.literal_likelihood_score);
  return c;
}

Detector::Detector(DetectorConfig config, std::size_t input_dim)
    : config_(std::move(config)), input_dim_(input_dim) {
  config_.validate();
  if (input_dim_ == 0) throw ConfigError("input dimension must be positive");
}

double Detector::weighted_loss(const Matrix& batch, std::span<const double> weights) const {
  const auto losses = sample_losses(batch);
  if (weights.size() != losses.size()) throw ConfigError("weight count does not match batch size");
  double total = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) total += weights[i] * losses[i];
  return total / static_cast<double>(losses.size());
}

json Detector::checkpoint_header() const {
  json cfg = config_.to_json();
  return json{{"format", kCheckpointFormat},
              {"version", kCheckpointVersion},
              {"input_dim", input_dim_},
              {"config", cfg},
              {"config_hash", config_hash(cfg)}};
}

std::unique_ptr<Detector> make_detector(const DetectorConfig& config, std::size_t input_dim) {
  switch (config.kind) {
    case DetectorKind::kSvddOneClass:
    case DetectorKind::kSvddSoftBoundary:
      return std::make_unique<DeepSvdd>(config, input_dim);
    case DetectorKind::kAutoencoder:
      return std::make_unique<Autoencoder>(config, input_dim);
    case DetectorKind::kMaf:
      return std::make_unique<Maf>(config, input_dim);
  }
  throw ConfigError("unknown detector kind");
}

std::unique_ptr<Detector> load_detector(const json& checkpoint) {
  if (checkpoint.value("format", std::string{}) != kCheckpointFormat) {
    throw LoadError("not a detector checkpoint");
  }
  if (checkpoint.value("version", 0) != kCheckpointVersion) {
    throw LoadError("unsupported checkpoint version");
  }
  const json& cfg = checkpoint.at("config");
  if (checkpoint.value("config_hash", std::string{}) != config_hash(cfg)) {
    throw LoadError("checkpoint config hash mismatch");
  }
  switch (parse_detector_kind(cfg.at("type").get<std::string>())) {
    case DetectorKind::kSvddOneClass:
    case DetectorKind::kSvddSoftBoundary:
      return DeepSvdd::from_json(checkpoint);
    case DetectorKind::kAutoencoder:
      return Autoencoder::from_json(checkpoint);
    case DetectorKind::kMaf:
      return Maf::from_json(checkpoint);
  }
  throw LoadError("unknown detector kind in checkpoint");
}

std::string config_hash(const json& config) {
  const std::string text = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kLeakyRelu:
      return "leaky_relu";
    case Activation::kTanh:
      return "tanh";
    case Activation::kIdentity:
      break;
  }
  return "identity";
}

Activation parse_activation(const std::string& s) {
  if (s == "leaky_relu") return Activation::kLeakyRelu;
  if (s == "tanh") return Activation::kTanh;
  if (s == "identity") return Activation::kIdentity;
  throw LoadError("unknown activation '" + s + "'");
}

std::vector<double> to_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

json network_to_json(const Network& net) {
  json layers = json::array();
  for (const auto& l : net.layers()) {
    json jl{{"in", l.in_dim()},
            {"out", l.out_dim()},
            {"bias", l.has_bias()},
            {"activation", activation_name(l.activation())},
            {"slope", l.slope()},
            {"weight", to_vector(l.weight().values())}};
    if (l.has_bias()) jl["bias_values"] = l.bias();
    if (l.mask()) jl["mask"] = to_vector(l.mask()->values());
    layers.push_back(std::move(jl));
  }
  return layers;
}

Network network_from_json(const json& j) {
  std::vector<DenseLayer> layers;
  for (const auto& jl : j) {
    const auto in = jl.at("in").get<std::size_t>();
    const auto out = jl.at("out").get<std::size_t>();
    DenseLayer layer(in, out, jl.at("bias").get<bool>(),
                     parse_activation(jl.at("activation").get<std::string>()),
                     jl.at("slope").get<double>());
    if (jl.contains("mask")) {
      layer.set_mask(Matrix(out, in, jl.at("mask").get<std::vector<double>>()));
    }
    layer.weight() = Matrix(out, in, jl.at("weight").get<std::vector<double>>());
    if (layer.has_bias()) {
      layer.bias() = jl.at("bias_values").get<std::vector<double>>();
      if (layer.bias().size() != out) throw LoadError("bias length mismatch");
    }
    layers.push_back(std::move(layer));
  }
  return Network(std::move(layers));
}

double train_epoch(Detector& detector, const Matrix& x, std::span<const double> weights,
                   Adam& optimizer, RngStream& rng, std::size_t batch_size) {
  if (weights.size() != x.rows()) throw ConfigError("one weight per training sample is required");
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("importance weights must lie in [0, 1]");
  }
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (x.rows() == 0) throw ConfigError("empty training set");

  const auto order = rng.permutation(x.rows());
  auto params = detector.params();
  double loss_sum = 0.0;
  std::size_t batches = 0;
  std::vector<double> batch_weights;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t stop = std::min(order.size(), start + batch_size);
    const std::span<const std::size_t> idx(order.data() + start, stop - start);
    const Matrix batch = x.gather_rows(idx);
    batch_weights.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) batch_weights[i] = weights[idx[i]];
    const double loss = detector.accumulate_gradients(batch, batch_weights);
    if (!std::isfinite(loss)) {
      throw NumericError("non-finite training loss in batch " + std::to_string(batches));
    }
    optimizer.step(params);
    loss_sum += loss;
    ++batches;
  }
  detector.end_epoch(x);
  return loss_sum / static_cast<double>(batches);
}

}  // namespace iad
