// SPDX-License-Identifier: Apache-2.0
#include "advhar/windows_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "advhar/digest.hpp"
#include "advhar/error.hpp"
#include "json.hpp"

static_assert(std::endian::native == std::endian::little, "windows files are little endian");

namespace advhar {

using nlohmann::json;

namespace {

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const std::filesystem::path& file) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("truncated windows file " + file.string());
  return v;
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& windows_file) {
  return std::filesystem::path(windows_file.string() + ".json");
}

std::string norm_to_json(const NormStats& stats) {
  return json{{"min", stats.min}, {"max", stats.max}}.dump();
}

NormStats norm_from_json(const std::string& text) {
  const json j = json::parse(text);
  return {j.at("min").get<std::vector<float>>(), j.at("max").get<std::vector<float>>()};
}

std::string save_windows(const std::filesystem::path& file, const LabeledDataset& dataset,
                         const std::optional<NormStats>& norm, const std::string& config_digest) {
  const DatasetSchema& s = dataset.schema;
  {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + file.string());
    out.write("ADVW", 4);
    put<std::uint32_t>(out, kWindowsFileVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.window_size));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.channels()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.num_activities()));
    put<std::uint64_t>(out, dataset.windows.size());
    for (const Window& w : dataset.windows) {
      if (w.length != s.window_size || w.channels != s.channels()) {
        throw SchemaError("window shape does not match the dataset schema");
      }
      out.write(reinterpret_cast<const char*>(w.values.data()),
                static_cast<std::streamsize>(w.values.size() * sizeof(float)));
    }
    for (const Window& w : dataset.windows) {
      put<std::uint8_t>(out, static_cast<std::uint8_t>(w.activity));
      put<std::int32_t>(out, w.subject);
    }
    if (!out) throw IoError("write failed for " + file.string());
  }
  const std::string digest = file_digest(file.string());
  json side = {{"schema", json::parse(schema_to_json(s))},
               {"subjects", dataset.subjects},
               {"content_digest", digest},
               {"config_digest", config_digest}};
  if (norm) side["norm"] = json::parse(norm_to_json(*norm));
  std::ofstream sc(sidecar_path(file));
  if (!sc) throw IoError("cannot write " + sidecar_path(file).string());
  sc << side.dump(2) << '\n';
  if (!sc) throw IoError("write failed for " + sidecar_path(file).string());
  return digest;
}

LabeledDataset load_windows(const std::filesystem::path& file, WindowsSidecar* sidecar) {
  std::ifstream sc(sidecar_path(file));
  if (!sc) throw IoError("missing sidecar " + sidecar_path(file).string());
  json side;
  try {
    side = json::parse(sc);
  } catch (const json::exception& e) {
    throw DataError("bad sidecar " + sidecar_path(file).string() + ": " + e.what());
  }
  WindowsSidecar meta;
  meta.schema = schema_from_json(side.at("schema").dump());
  meta.content_digest = side.value("content_digest", std::string());
  meta.config_digest = side.value("config_digest", std::string());
  if (side.contains("norm")) meta.norm = norm_from_json(side.at("norm").dump());
  if (!meta.content_digest.empty() && file_digest(file.string()) != meta.content_digest) {
    throw DataError("windows file " + file.string() + " does not match its sidecar digest");
  }

  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "ADVW", 4) != 0) throw DataError(file.string() + " is not a windows file");
  const auto version = get<std::uint32_t>(in, file);
  if (version != kWindowsFileVersion) throw DataError("unsupported windows file version " + std::to_string(version));
  const auto w = get<std::uint32_t>(in, file);
  const auto c = get<std::uint32_t>(in, file);
  const auto k = get<std::uint32_t>(in, file);
  const auto m = get<std::uint64_t>(in, file);
  if (w != meta.schema.window_size || c != meta.schema.channels() || k != meta.schema.num_activities()) {
    throw SchemaError("windows file header disagrees with its sidecar schema");
  }
  LabeledDataset ds;
  ds.schema = meta.schema;
  ds.windows.resize(m);
  for (Window& win : ds.windows) {
    win.length = w;
    win.channels = c;
    win.values.resize(static_cast<std::size_t>(w) * c);
    in.read(reinterpret_cast<char*>(win.values.data()), static_cast<std::streamsize>(win.values.size() * sizeof(float)));
    if (!in) throw DataError("truncated windows file " + file.string());
  }
  for (Window& win : ds.windows) {
    win.activity = get<std::uint8_t>(in, file);
    win.subject = get<std::int32_t>(in, file);
    if (win.activity >= static_cast<int>(k)) throw DataError("activity label out of range in " + file.string());
    ds.subjects.push_back(win.subject);
  }
  std::sort(ds.subjects.begin(), ds.subjects.end());
  ds.subjects.erase(std::unique(ds.subjects.begin(), ds.subjects.end()), ds.subjects.end());
  if (sidecar) *sidecar = std::move(meta);
  return ds;
}

}  // namespace advhar
