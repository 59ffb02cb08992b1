// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "advhar/network.hpp"
#include "advhar/synthetic.hpp"

namespace advhar::testing {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "advhar-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline nn::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, float lo = -1.0f,
                                float hi = 1.0f) {
  nn::Tensor t(std::move(shape));
  std::uniform_real_distribution<float> u(lo, hi);
  for (float& v : t.values()) v = u(rng);
  return t;
}

/// Small synthetic dataset, cheap enough for unit tests.
inline LabeledDataset small_dataset(std::size_t subjects = 5, std::size_t activities = 3, std::size_t per_cell = 6,
                                    std::size_t window = 128, std::size_t channels = 3, std::uint64_t seed = 7) {
  SyntheticSpec spec;
  spec.n_subjects = subjects;
  spec.n_activities = activities;
  spec.windows_per_cell = per_cell;
  spec.window = window;
  spec.channels = channels;
  spec.seed = seed;
  return generate_synthetic(spec);
}

}  // namespace advhar::testing
