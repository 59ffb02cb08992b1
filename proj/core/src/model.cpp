// SPDX-License-Identifier: Apache-2.0
#include "advhar/model.hpp"

#include <bit>
#include <random>

#include "advhar/error.hpp"

namespace advhar {

using nn::LayerDesc;
using nn::LayerKind;
using nn::NetworkSpec;

namespace {

LayerDesc linear(std::size_t in, std::size_t out, std::string label = {}) {
  LayerDesc d;
  d.kind = LayerKind::kLinear;
  d.in = in;
  d.out = out;
  d.label = std::move(label);
  return d;
}

LayerDesc conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad) {
  LayerDesc d;
  d.kind = LayerKind::kConv1d;
  d.in = in;
  d.out = out;
  d.kernel = k;
  d.stride = stride;
  d.padding = pad;
  return d;
}

LayerDesc conv_t(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad,
                 std::size_t dilation, std::size_t out_pad) {
  LayerDesc d = conv(in, out, k, stride, pad);
  d.kind = LayerKind::kConvTranspose1d;
  d.dilation = dilation;
  d.output_padding = out_pad;
  return d;
}

LayerDesc simple(LayerKind kind, std::string label = {}) {
  LayerDesc d;
  d.kind = kind;
  d.label = std::move(label);
  return d;
}

LayerDesc batch_norm(std::size_t channels) {
  LayerDesc d = simple(LayerKind::kBatchNorm);
  d.out = channels;
  return d;
}

LayerDesc leaky(std::string label = {}) {
  LayerDesc d = simple(LayerKind::kLeakyReLU, std::move(label));
  d.slope = 0.01f;
  return d;
}

LayerDesc dropout(float rate, std::string label = "Dropout") {
  LayerDesc d = simple(LayerKind::kDropout, std::move(label));
  d.rate = rate;
  return d;
}

LayerDesc unflatten(std::size_t channels, std::size_t length) {
  LayerDesc d = simple(LayerKind::kUnflatten);
  d.out = channels;
  d.length = length;
  return d;
}

// conv -> batch norm -> ReLU, labelled on the rectifier.
void conv_block(std::vector<LayerDesc>& layers, std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                std::size_t pad, std::string label) {
  layers.push_back(conv(in, out, k, stride, pad));
  layers.push_back(batch_norm(out));
  layers.push_back(simple(LayerKind::kReLU, std::move(label)));
}

// Four valid-padding conv blocks with kernels 9/5/3/3, stride 2, dropout
// after blocks 3 and 4. Shared by both discriminators.
void discriminator_trunk(std::vector<LayerDesc>& layers, std::size_t length) {
  layers.push_back(unflatten(1, length));
  conv_block(layers, 1, 32, 9, 2, 0, "ConvBlock 1");
  conv_block(layers, 32, 64, 5, 2, 0, "ConvBlock 2");
  conv_block(layers, 64, 128, 3, 2, 0, "ConvBlock 3");
  layers.push_back(dropout(0.3f));
  conv_block(layers, 128, 256, 3, 2, 0, "ConvBlock 4");
  layers.push_back(dropout(0.3f));
  layers.push_back(simple(LayerKind::kFlatten, "Flatten"));
}

std::size_t valid_length(std::size_t length, std::size_t k) { return length < k ? 0 : (length - k) / 2 + 1; }

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

std::string to_string(Block block) {
  switch (block) {
    case Block::kFeature: return "F";
    case Block::kReconstructor: return "R";
    case Block::kClassifier: return "C";
    case Block::kDiscriminator: return "D";
  }
  return "?";
}

NetworkSpec feature_extractor_spec(std::size_t window, std::size_t channels) {
  if (window < 16 || channels == 0) throw ConfigError("feature extractor needs w >= 16 and c >= 1");
  NetworkSpec spec{"feature_extractor", {channels, window}, {}, nn::ShapeNotation::kPlain};
  auto& l = spec.layers;
  conv_block(l, channels, 32, 9, 2, 4, "ConvBlock 1");
  conv_block(l, 32, 64, 5, 2, 2, "ConvBlock 2");
  conv_block(l, 64, 128, 3, 2, 1, "ConvBlock 3");
  conv_block(l, 128, 256, 3, 2, 1, "ConvBlock 4");
  l.push_back(simple(LayerKind::kGlobalAvgPool, "GlobalAvgPool"));
  l.push_back(linear(256, kLatentDim, "Linear"));
  return spec;
}

// The linear output (128 features) is read as 128 channels of length 1.
// With that reading the tabulated kernel/padding/dilation/output-padding
// values give the listed lengths directly:
//   (1-1)*1 - 2 + 16*(3-1) + 1 + 1  = 32
//   (32-1)*1 - 2 + 16*(3-1) + 2 + 1 = 64
//   (L-1)*2 - 4 + (5-1) + 1 + 1     = 2L  per doubling stage
// so a window of 64 * 2^k needs k doubling stages (3 for w=512).
NetworkSpec reconstructor_spec(std::size_t window, std::size_t channels) {
  if (channels == 0) throw ConfigError("reconstructor needs c >= 1");
  std::size_t stages = 0;
  if (window >= 128 && std::has_single_bit(window)) stages = static_cast<std::size_t>(std::countr_zero(window)) - 6;
  if (stages == 0) {
    throw ConfigError("reconstructor cannot produce windows of length " + std::to_string(window) +
                      "; supported lengths are 64 * 2^k with k >= 1");
  }
  NetworkSpec spec{"reconstructor", {kLatentDim}, {}, nn::ShapeNotation::kChannelsHeightWidth};
  auto& l = spec.layers;
  l.push_back(linear(kLatentDim, 128, "Linear"));
  l.push_back(unflatten(128, 1));
  auto post = [&](std::size_t ch, const std::string& label) {
    l.push_back(batch_norm(ch));
    l.push_back(leaky(label));
  };
  l.push_back(conv_t(128, 128, 3, 1, 1, 16, 1));
  post(128, "ConvTranspose 1");
  l.push_back(conv(128, 128, 3, 1, 1));
  post(128, "Conv 1");
  l.push_back(conv_t(128, 64, 3, 1, 1, 16, 2));
  post(64, "ConvTranspose 2");
  l.push_back(conv(64, 64, 3, 1, 1));
  post(64, "Conv 2");
  std::size_t in = 64;
  for (std::size_t s = 0; s < stages; ++s) {
    l.push_back(conv_t(in, channels, 5, 2, 2, 1, 1));
    post(channels, "ConvTranspose " + std::to_string(3 + s));
    in = channels;
  }
  return spec;
}

NetworkSpec classifier_spec(std::size_t activities) {
  if (activities < 2) throw ConfigError("classifier needs at least two activities");
  NetworkSpec spec{"classifier", {kLatentDim}, {}, nn::ShapeNotation::kPlain};
  auto& l = spec.layers;
  l.push_back(linear(kLatentDim, 256, "Linear 1"));
  l.push_back(simple(LayerKind::kReLU));
  l.push_back(linear(256, 512, "Linear 2"));
  l.push_back(simple(LayerKind::kReLU));
  l.push_back(linear(512, activities, "Linear 3"));
  l.push_back(simple(LayerKind::kSoftmax, "Softmax"));
  return spec;
}

// The published layer list has no nonlinearity between the fully connected
// layers; ReLUs are inserted after the first two and a sigmoid after the last.
NetworkSpec discriminator_spec() {
  NetworkSpec spec{"discriminator", {2 * kLatentDim}, {}, nn::ShapeNotation::kHeightChannelsWidth};
  auto& l = spec.layers;
  discriminator_trunk(l, 2 * kLatentDim);
  l.push_back(linear(256 * 6, 256, "Linear"));
  l.push_back(simple(LayerKind::kReLU));
  l.push_back(dropout(0.2f));
  l.push_back(linear(256, 64, "Linear"));
  l.push_back(simple(LayerKind::kReLU));
  l.push_back(linear(64, 1, "Linear"));
  l.push_back(simple(LayerKind::kSigmoid));
  return spec;
}

NetworkSpec identity_discriminator_spec(std::size_t subjects) {
  if (subjects < 2) throw ConfigError("identity discriminator needs at least two subjects");
  NetworkSpec spec{"identity_discriminator", {kLatentDim}, {}, nn::ShapeNotation::kHeightChannelsWidth};
  auto& l = spec.layers;
  discriminator_trunk(l, kLatentDim);
  std::size_t length = kLatentDim;
  for (std::size_t k : {9, 5, 3, 3}) length = valid_length(length, k);
  l.push_back(linear(256 * length, 256, "Linear"));
  l.push_back(simple(LayerKind::kReLU));
  l.push_back(dropout(0.2f));
  l.push_back(linear(256, 64, "Linear"));
  l.push_back(simple(LayerKind::kReLU));
  l.push_back(linear(64, subjects, "Linear"));
  l.push_back(simple(LayerKind::kSoftmax, "Softmax"));
  return spec;
}

BlockSeeds BlockSeeds::derive(std::uint64_t seed) {
  BlockSeeds out;
  std::uint64_t state = seed;
  for (auto& v : out.values) v = splitmix64(state);
  return out;
}

ModelBundle::ModelBundle(const ModelConfig& config, std::uint64_t seed) : config_(config), seed_(seed) {
  const BlockSeeds seeds = BlockSeeds::derive(seed);
  block(Block::kFeature) = nn::Network(feature_extractor_spec(config.window, config.channels), seeds[Block::kFeature]);
  block(Block::kReconstructor) =
      nn::Network(reconstructor_spec(config.window, config.channels), seeds[Block::kReconstructor]);
  block(Block::kClassifier) = nn::Network(classifier_spec(config.activities), seeds[Block::kClassifier]);
  block(Block::kDiscriminator) =
      config.discriminator == DiscriminatorKind::kPair
          ? nn::Network(discriminator_spec(), seeds[Block::kDiscriminator])
          : nn::Network(identity_discriminator_spec(config.identity_classes), seeds[Block::kDiscriminator]);
}

void ModelBundle::freeze_only(std::initializer_list<Block> trainable) {
  frozen_.fill(true);
  for (Block b : trainable) set_frozen(b, false);
}

bool ModelBundle::apply_update(Block b, nn::Adam& optimizer) {
  if (frozen(b)) return false;
  optimizer.step(block(b));
  return true;
}

InferenceModel InferenceModel::from(const ModelBundle& bundle) {
  return {bundle.config(), bundle.block(Block::kFeature), bundle.block(Block::kClassifier)};
}

nn::Tensor InferenceModel::predict(const nn::Tensor& windows) const {
  return classifier.predict(feature.predict(windows));
}

nn::Tensor windows_tensor(std::span<const Window> windows) {
  if (windows.empty()) throw DataError("empty window batch");
  const std::size_t w = windows.front().length, c = windows.front().channels;
  nn::Tensor t({windows.size(), c, w});
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const Window& win = windows[b];
    if (win.length != w || win.channels != c) throw SchemaError("window batch mixes shapes");
    float* dst = t.data() + b * c * w;
    for (std::size_t time = 0; time < w; ++time) {
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch * w + time] = win.values[time * c + ch];
    }
  }
  return t;
}

nn::Tensor windows_tensor(const LabeledDataset& dataset, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("empty window batch");
  const std::size_t w = dataset.schema.window_size, c = dataset.schema.channels();
  nn::Tensor t({indices.size(), c, w});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Window& win = dataset.windows.at(indices[b]);
    if (win.length != w || win.channels != c) throw SchemaError("window shape does not match the schema");
    float* dst = t.data() + b * c * w;
    for (std::size_t time = 0; time < w; ++time) {
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch * w + time] = win.values[time * c + ch];
    }
  }
  return t;
}

std::vector<float> tensor_row_time_major(const nn::Tensor& t, std::size_t b) {
  const std::size_t c = t.dim(1), w = t.dim(2);
  std::vector<float> out(w * c);
  const float* src = t.data() + b * c * w;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t time = 0; time < w; ++time) out[time * c + ch] = src[ch * w + time];
  }
  return out;
}

namespace {

void check_window(const ModelBundle& bundle, const Window& window) {
  if (window.length != bundle.config().window || window.channels != bundle.config().channels) {
    throw SchemaError("window (" + std::to_string(window.length) + ", " + std::to_string(window.channels) +
                      ") does not match the model's (" + std::to_string(bundle.config().window) + ", " +
                      std::to_string(bundle.config().channels) + ")");
  }
}

nn::Tensor latent_tensor(std::span<const float> latent) {
  if (latent.size() != kLatentDim) throw SchemaError("latent must have 64 values");
  return nn::Tensor({1, kLatentDim}, std::vector<float>(latent.begin(), latent.end()));
}

}  // namespace

std::vector<float> feature_extract(const ModelBundle& bundle, const Window& window) {
  check_window(bundle, window);
  const nn::Tensor out = bundle.block(Block::kFeature).predict(windows_tensor(std::span<const Window>(&window, 1)));
  return {out.values().begin(), out.values().end()};
}

std::vector<float> reconstruct(const ModelBundle& bundle, std::span<const float> latent) {
  return tensor_row_time_major(bundle.block(Block::kReconstructor).predict(latent_tensor(latent)), 0);
}

std::vector<float> classify(const ModelBundle& bundle, std::span<const float> latent) {
  const nn::Tensor out = bundle.block(Block::kClassifier).predict(latent_tensor(latent));
  return {out.values().begin(), out.values().end()};
}

float discriminate(const ModelBundle& bundle, std::span<const float> latent_a, std::span<const float> latent_b) {
  if (bundle.config().discriminator != DiscriminatorKind::kPair) throw ConfigError("bundle has no pair discriminator");
  const nn::Tensor joined = nn::concat_features(latent_tensor(latent_a), latent_tensor(latent_b));
  return bundle.block(Block::kDiscriminator).predict(joined)[0];
}

std::vector<float> discriminate_identity(const ModelBundle& bundle, std::span<const float> latent) {
  if (bundle.config().discriminator != DiscriminatorKind::kIdentity) {
    throw ConfigError("bundle has no identity discriminator");
  }
  const nn::Tensor out = bundle.block(Block::kDiscriminator).predict(latent_tensor(latent));
  return {out.values().begin(), out.values().end()};
}

std::vector<nn::LayerShape> trace_block(const ModelBundle& bundle, Block b) {
  const nn::Network& net = bundle.block(b);
  std::vector<std::size_t> shape = {2};
  shape.insert(shape.end(), net.spec().input_shape.begin(), net.spec().input_shape.end());
  nn::Tensor x(shape);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : x.values()) v = u(rng);
  return net.trace_shapes(x);
}

}  // namespace advhar
