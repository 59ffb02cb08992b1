// SPDX-License-Identifier: Apache-2.0
#include "advhar/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <optional>

#include "advhar/error.hpp"

namespace advhar {

namespace {

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("truncated checkpoint");
  return v;
}

std::vector<float> flatten_state(const nn::Network& net) {
  std::vector<float> out;
  for (const nn::Parameter* p : net.parameters()) out.insert(out.end(), p->value.begin(), p->value.end());
  for (const auto* b : net.buffers()) out.insert(out.end(), b->begin(), b->end());
  return out;
}

void restore_state(nn::Network& net, const std::vector<float>& flat) {
  std::size_t at = 0;
  auto take = [&](auto& dst) {
    if (at + dst.size() > flat.size()) throw DataError("checkpoint blob too short for " + net.spec().name);
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(at), flat.begin() + static_cast<std::ptrdiff_t>(at + dst.size()),
              dst.begin());
    at += dst.size();
  };
  for (nn::Parameter* p : net.parameters()) take(p->value);
  for (auto* b : net.buffers()) take(*b);
  if (at != flat.size()) throw DataError("checkpoint blob too long for " + net.spec().name);
}

struct Header {
  CheckpointInfo info;
  std::uint32_t blocks = 0;
};

Header read_header(std::istream& in, const std::filesystem::path& file) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "ADVC", 4) != 0) throw DataError(file.string() + " is not a checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Header h;
  h.info.config.window = get<std::uint64_t>(in);
  h.info.config.channels = get<std::uint64_t>(in);
  h.info.config.activities = get<std::uint64_t>(in);
  h.info.config.discriminator = static_cast<DiscriminatorKind>(get<std::uint8_t>(in));
  h.info.config.identity_classes = get<std::uint64_t>(in);
  h.info.seed = get<std::uint64_t>(in);
  h.info.step_counter = get<std::uint64_t>(in);
  const auto len = get<std::uint32_t>(in);
  h.info.config_digest.resize(len);
  in.read(h.info.config_digest.data(), len);
  h.blocks = get<std::uint32_t>(in);
  if (!in) throw DataError("truncated checkpoint " + file.string());
  return h;
}

// Reads block records, restoring those accepted by `want` and skipping the
// rest by seeking past their payload.
template <class Want, class Restore>
void read_blocks(std::istream& in, std::uint32_t count, Want want, Restore restore) {
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto id = static_cast<Block>(get<std::uint8_t>(in));
    const auto spec = get<std::uint64_t>(in);
    const auto n = get<std::uint64_t>(in);
    if (!want(id)) {
      in.seekg(static_cast<std::streamoff>(n * sizeof(float)), std::ios::cur);
      continue;
    }
    std::vector<float> flat(n);
    in.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw DataError("truncated checkpoint block " + to_string(id));
    restore(id, spec, flat);
  }
}

void check_spec(const nn::Network& net, std::uint64_t spec) {
  if (nn::spec_digest(net.spec()) != spec) {
    throw DataError("checkpoint architecture for " + net.spec().name + " does not match this build");
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const ModelBundle& bundle, std::uint64_t step_counter,
                     const std::string& config_digest) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + file.string());
  const ModelConfig& c = bundle.config();
  out.write("ADVC", 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, c.window);
  put<std::uint64_t>(out, c.channels);
  put<std::uint64_t>(out, c.activities);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(c.discriminator));
  put<std::uint64_t>(out, c.identity_classes);
  put<std::uint64_t>(out, bundle.seed());
  put<std::uint64_t>(out, step_counter);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(config_digest.size()));
  out.write(config_digest.data(), static_cast<std::streamsize>(config_digest.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(kAllBlocks.size()));
  for (Block b : kAllBlocks) {
    const nn::Network& net = bundle.block(b);
    const std::vector<float> flat = flatten_state(net);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(b));
    put<std::uint64_t>(out, nn::spec_digest(net.spec()));
    put<std::uint64_t>(out, flat.size());
    out.write(reinterpret_cast<const char*>(flat.data()), static_cast<std::streamsize>(flat.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed for checkpoint " + file.string());
}

ModelBundle load_checkpoint(const std::filesystem::path& file, CheckpointInfo* info) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + file.string());
  const Header h = read_header(in, file);
  ModelBundle bundle(h.info.config, h.info.seed);
  read_blocks(
      in, h.blocks, [](Block) { return true; },
      [&](Block b, std::uint64_t spec, const std::vector<float>& flat) {
        check_spec(bundle.block(b), spec);
        restore_state(bundle.block(b), flat);
      });
  if (info) *info = h.info;
  return bundle;
}

InferenceModel load_inference_model(const std::filesystem::path& file, CheckpointInfo* info) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + file.string());
  const Header h = read_header(in, file);
  InferenceModel model;
  model.config = h.info.config;
  model.feature = nn::Network(feature_extractor_spec(h.info.config.window, h.info.config.channels), 0);
  model.classifier = nn::Network(classifier_spec(h.info.config.activities), 0);
  bool have_f = false, have_c = false;
  read_blocks(
      in, h.blocks, [](Block b) { return b == Block::kFeature || b == Block::kClassifier; },
      [&](Block b, std::uint64_t spec, const std::vector<float>& flat) {
        nn::Network& net = b == Block::kFeature ? model.feature : model.classifier;
        check_spec(net, spec);
        restore_state(net, flat);
        (b == Block::kFeature ? have_f : have_c) = true;
      });
  if (!have_f || !have_c) throw DataError("checkpoint lacks the feature extractor or classifier");
  if (info) *info = h.info;
  return model;
}

}  // namespace advhar
