// SPDX-License-Identifier: Apache-2.0
#include "advhar/pairset.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <unordered_set>

#include "advhar/error.hpp"
#include "json.hpp"

namespace advhar {

using nlohmann::json;

namespace {

constexpr std::uint64_t kMaterializeLimit = 65536;

// One (cell, activity) combination and the windows each side draws from.
struct PairPool {
  int activity = -1;
  const std::vector<std::size_t>* left = nullptr;
  const std::vector<std::size_t>* right = nullptr;  // same as left for g=1
  bool same = false;

  PairPool(int act, const std::vector<std::size_t>* l, const std::vector<std::size_t>* r, bool s)
      : activity(act), left(l), right(r), same(s) {}

  std::uint64_t capacity = 0;
  bool materialized = false;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> order;  // positions into left/right
  std::size_t next = 0;
  std::unordered_set<std::uint64_t> used;

  void init(std::mt19937_64& rng) {
    const std::uint64_t nl = left->size(), nr = right->size();
    capacity = same ? nl * (nl - 1) / 2 : nl * nr;
    materialized = capacity <= kMaterializeLimit;
    if (!materialized) return;
    order.reserve(capacity);
    for (std::uint32_t i = 0; i < nl; ++i) {
      if (same) {
        for (std::uint32_t j = i + 1; j < nl; ++j) order.emplace_back(i, j);
      } else {
        for (std::uint32_t j = 0; j < nr; ++j) order.emplace_back(i, j);
      }
    }
    std::shuffle(order.begin(), order.end(), rng);
  }

  std::pair<std::uint32_t, std::uint32_t> random_pair(std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::uint32_t> pl(0, static_cast<std::uint32_t>(left->size() - 1));
    std::uniform_int_distribution<std::uint32_t> pr(0, static_cast<std::uint32_t>(right->size() - 1));
    if (!same) return {pl(rng), pr(rng)};
    std::uint32_t i = pl(rng), j = pl(rng);
    while (j == i) j = pl(rng);
    return {std::min(i, j), std::max(i, j)};
  }

  std::pair<std::size_t, std::size_t> draw(std::mt19937_64& rng) {
    std::pair<std::uint32_t, std::uint32_t> p;
    if (materialized) {
      p = next < order.size() ? order[next++] : random_pair(rng);
    } else if (used.size() < capacity) {
      do {
        p = random_pair(rng);
      } while (!used.insert((std::uint64_t{p.first} << 32) | p.second).second);
    } else {
      p = random_pair(rng);
    }
    return {(*left)[p.first], (*right)[p.second]};
  }
};

struct Cell {
  int subject_a = 0;
  int subject_b = 0;
  std::vector<PairPool> pools;
};

std::vector<std::size_t> split_evenly(std::size_t total, std::size_t parts) {
  std::vector<std::size_t> out(parts, total / parts);
  for (std::size_t i = 0; i < total % parts; ++i) ++out[i];
  return out;
}

// Cells in fixed order: every subject with itself, then every subject pair.
std::vector<Cell> build_cells(const PairGroupIndex& index) {
  std::map<int, std::vector<std::pair<int, const std::vector<std::size_t>*>>> by_subject;
  for (const auto& [key, windows] : index.by_activity_subject) by_subject[key.second].emplace_back(key.first, &windows);

  std::vector<Cell> cells;
  for (int s : index.subjects) {
    Cell cell{s, s, {}};
    for (const auto& [activity, windows] : by_subject[s]) {
      if (windows->size() >= 2) cell.pools.emplace_back(activity, windows, windows, true);
    }
    if (cell.pools.empty()) {
      throw DataError("subject " + std::to_string(s) + " has no activity with two or more windows; cannot form same-subject pairs");
    }
    cells.push_back(std::move(cell));
  }
  for (std::size_t i = 0; i < index.subjects.size(); ++i) {
    for (std::size_t j = i + 1; j < index.subjects.size(); ++j) {
      const int sa = index.subjects[i], sb = index.subjects[j];
      Cell cell{sa, sb, {}};
      for (const auto& [activity, windows] : by_subject[sa]) {
        if (const auto* other = index.group(activity, sb)) cell.pools.emplace_back(activity, windows, other, false);
      }
      if (cell.pools.empty()) {
        throw DataError("subjects " + std::to_string(sa) + " and " + std::to_string(sb) +
                        " share no activity; cannot form different-subject pairs");
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

PairDataset sample_from_index(const PairGroupIndex& index, std::size_t n, std::uint64_t seed, PairMode mode) {
  if (n < 2) throw ConfigError("pair set size must be at least 2");
  if (index.subjects.size() < 2) throw DataError("pair sampling needs at least two subjects");
  std::vector<Cell> cells = build_cells(index);
  const std::size_t subjects = index.subjects.size();
  const std::vector<std::size_t> same_counts = split_evenly(n - n / 2, subjects);
  const std::vector<std::size_t> diff_counts = split_evenly(n / 2, cells.size() - subjects);

  std::mt19937_64 rng(seed);
  PairDataset out;
  out.mode = mode;
  out.seed = seed;
  out.pairs.reserve(n);
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    Cell& cell = cells[ci];
    const std::size_t count = ci < subjects ? same_counts[ci] : diff_counts[ci - subjects];
    for (PairPool& pool : cell.pools) pool.init(rng);
    std::uniform_int_distribution<std::size_t> pick(0, cell.pools.size() - 1);
    std::bernoulli_distribution flip(0.5);
    for (std::size_t k = 0; k < count; ++k) {
      PairPool& pool = cell.pools[pick(rng)];
      auto [a, b] = pool.draw(rng);
      PairSample p{a, b, pool.activity, cell.subject_a, cell.subject_b, pool.same ? 1 : 0};
      if (flip(rng)) {
        std::swap(p.a, p.b);
        std::swap(p.subject_a, p.subject_b);
      }
      out.pairs.push_back(p);
    }
  }
  std::shuffle(out.pairs.begin(), out.pairs.end(), rng);
  return out;
}

}  // namespace

std::string to_string(PairMode mode) {
  return mode == PairMode::kActivityBased ? "activity" : "agnostic";
}

PairMode parse_pair_mode(std::string_view text) {
  if (text == "activity") return PairMode::kActivityBased;
  if (text == "agnostic") return PairMode::kActivityAgnostic;
  throw ConfigError("pair mode must be 'activity' or 'agnostic', got '" + std::string(text) + "'");
}

const std::vector<std::size_t>* PairGroupIndex::group(int activity, int subject) const {
  const auto it = by_activity_subject.find({activity, subject});
  return it == by_activity_subject.end() ? nullptr : &it->second;
}

PairGroupIndex enumerate_pair_groups(const LabeledDataset& dataset) {
  PairGroupIndex index;
  index.source_size = dataset.windows.size();
  for (std::size_t i = 0; i < dataset.windows.size(); ++i) {
    const Window& w = dataset.windows[i];
    index.by_activity_subject[{w.activity, w.subject}].push_back(i);
    index.subjects.push_back(w.subject);
  }
  std::sort(index.subjects.begin(), index.subjects.end());
  index.subjects.erase(std::unique(index.subjects.begin(), index.subjects.end()), index.subjects.end());
  return index;
}

PairDataset sample_pairs(const PairGroupIndex& index, std::size_t n, std::uint64_t seed) {
  return sample_from_index(index, n, seed, PairMode::kActivityBased);
}

PairDataset sample_pairs_activity_agnostic(const LabeledDataset& dataset, std::size_t n, std::uint64_t seed) {
  // One pseudo-activity (-1) holding every window of a subject.
  PairGroupIndex index;
  index.source_size = dataset.windows.size();
  for (std::size_t i = 0; i < dataset.windows.size(); ++i) {
    index.by_activity_subject[{-1, dataset.windows[i].subject}].push_back(i);
  }
  index.subjects = dataset.subjects;
  return sample_from_index(index, n, seed, PairMode::kActivityAgnostic);
}

void save_pairs(const std::filesystem::path& file, const PairDataset& pairs, const std::string& config_digest) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << json{{"seed", pairs.seed},
              {"mode", to_string(pairs.mode)},
              {"n", pairs.pairs.size()},
              {"source_digest", pairs.source_digest},
              {"config_digest", config_digest}}
             .dump()
      << '\n';
  for (const PairSample& p : pairs.pairs) {
    json rec = {{"a", p.a}, {"b", p.b}, {"s_a", p.subject_a}, {"s_b", p.subject_b}, {"g", p.g}};
    rec["activity"] = p.activity >= 0 ? json(p.activity) : json(nullptr);
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + file.string());
}

PairDataset load_pairs(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open pair file " + file.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty pair file " + file.string());
  PairDataset out;
  try {
    const json header = json::parse(line);
    out.seed = header.at("seed").get<std::uint64_t>();
    out.mode = parse_pair_mode(header.at("mode").get<std::string>());
    out.source_digest = header.value("source_digest", std::string());
    const auto n = header.at("n").get<std::size_t>();
    out.pairs.reserve(n);
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json rec = json::parse(line);
      PairSample p;
      p.a = rec.at("a").get<std::size_t>();
      p.b = rec.at("b").get<std::size_t>();
      p.activity = rec.at("activity").is_null() ? -1 : rec.at("activity").get<int>();
      p.subject_a = rec.at("s_a").get<int>();
      p.subject_b = rec.at("s_b").get<int>();
      p.g = rec.at("g").get<int>();
      out.pairs.push_back(p);
    }
    if (out.pairs.size() != n) throw ParseError("pair file header says " + std::to_string(n) + " pairs, found " +
                                                std::to_string(out.pairs.size()));
  } catch (const json::exception& e) {
    throw ParseError(file.string() + ": " + e.what(), line_no);
  }
  return out;
}

void validate_pairs(const PairDataset& pairs, const LabeledDataset& dataset) {
  for (const PairSample& p : pairs.pairs) {
    if (p.a >= dataset.size() || p.b >= dataset.size()) throw DataError("pair index outside the windows file");
    if (p.a == p.b) throw DataError("pair joins a window with itself");
    const Window& a = dataset.windows[p.a];
    const Window& b = dataset.windows[p.b];
    if (a.subject != p.subject_a || b.subject != p.subject_b) throw DataError("pair subjects disagree with the windows file");
    if (p.g != (a.subject == b.subject ? 1 : 0)) throw DataError("pair flag disagrees with its subjects");
    if (pairs.mode == PairMode::kActivityBased && (a.activity != b.activity || a.activity != p.activity)) {
      throw DataError("activity-based pair mixes activities");
    }
  }
}

}  // namespace advhar
