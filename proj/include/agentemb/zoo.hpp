// Copyright 2026 The agentemb Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "agentemb/agent.hpp"
#include "agentemb/binary_io.hpp"
#include "agentemb/errors.hpp"
#include "agentemb/parallel.hpp"
#include "agentemb/rng.hpp"
#include "agentemb/version.hpp"
#include "json.hpp"

namespace agentemb {

/// Survival-time bins: G1 [1, 50], G2 (50, 100], G3 (100, 150], G4 (150, 200].
enum class Group : std::uint8_t { kG1 = 1, kG2 = 2, kG3 = 3, kG4 = 4 };

inline constexpr std::array<Group, 4> kAllGroups{Group::kG1, Group::kG2, Group::kG3, Group::kG4};

inline Group bin(double survival_time) {
  require(survival_time >= 1.0 && survival_time <= 200.0,
          "bin: survival time must lie in [1, 200], got " + std::to_string(survival_time));
  if (survival_time <= 50.0) return Group::kG1;
  if (survival_time <= 100.0) return Group::kG2;
  if (survival_time <= 150.0) return Group::kG3;
  return Group::kG4;
}

inline std::size_t group_index(Group g) { return static_cast<std::size_t>(g) - 1; }

inline std::string to_string(Group g) { return "G" + std::to_string(static_cast<int>(g)); }

inline std::optional<Group> parse_group(std::string_view s) {
  for (Group g : kAllGroups)
    if (s == to_string(g)) return g;
  return std::nullopt;
}

/// Weights and survival time hold values exactly representable as f32, so
/// persisted records round-trip bit-exactly.
struct AgentRecord {
  std::uint64_t id = 0;
  WeightVector weights;
  double survival_time = 0.0;
  Group group = Group::kG1;
  std::uint64_t seed = 0;
  std::uint32_t train_budget = 0;

  friend bool operator==(const AgentRecord&, const AgentRecord&) = default;
};

inline WeightVector round_to_f32(std::span<const double> w) {
  WeightVector out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = static_cast<float>(w[i]);
  return out;
}

struct Zoo {
  std::vector<AgentRecord> records;
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  const AgentRecord* find(std::uint64_t id) const {
    for (const auto& r : records)
      if (r.id == id) return &r;
    return nullptr;
  }

  friend bool operator==(const Zoo&, const Zoo&) = default;
};

inline std::array<std::size_t, 4> bin_counts(const Zoo& zoo) {
  std::array<std::size_t, 4> counts{};
  for (const auto& r : zoo.records) counts[group_index(r.group)] += 1;
  return counts;
}

inline nlohmann::json bin_counts_json(const Zoo& zoo) {
  const auto counts = bin_counts(zoo);
  nlohmann::json j = nlohmann::json::object();
  for (Group g : kAllGroups) j[to_string(g)] = counts[group_index(g)];
  return j;
}

/// How build_zoo randomizes each training run.
struct BudgetDistribution {
  std::uint64_t min_steps = 1500;
  std::uint64_t max_steps = 25000;
  /// Log-uniform step budgets when true, uniform otherwise.
  bool log_uniform = true;
  double min_learning_rate = 1e-3;
  double max_learning_rate = 1e-3;
  /// Evenly spaced snapshots per run; 1 keeps only the final weights.
  std::size_t checkpoints_per_run = 1;
  int eval_episodes = 100;

  void validate() const {
    require(min_steps <= max_steps, "BudgetDistribution: min_steps > max_steps");
    require(max_steps <= UINT32_MAX, "BudgetDistribution: max_steps must fit in 32 bits");
    require(min_learning_rate > 0.0 && min_learning_rate <= max_learning_rate,
            "BudgetDistribution: invalid learning-rate range");
    require(checkpoints_per_run >= 1, "BudgetDistribution: checkpoints_per_run must be >= 1");
    require(eval_episodes >= 1, "BudgetDistribution: eval_episodes must be >= 1");
  }

  std::uint64_t draw_steps(Rng& rng) const {
    if (min_steps == max_steps) return min_steps;
    if (log_uniform && min_steps > 0) {
      const double lo = std::log(static_cast<double>(min_steps));
      const double hi = std::log(static_cast<double>(max_steps));
      return static_cast<std::uint64_t>(std::llround(std::exp(rng.uniform(lo, hi))));
    }
    return min_steps + rng.index(max_steps - min_steps + 1);
  }

  double draw_learning_rate(Rng& rng) const {
    if (min_learning_rate == max_learning_rate) return min_learning_rate;
    return std::exp(rng.uniform(std::log(min_learning_rate), std::log(max_learning_rate)));
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"train_steps", c.train_steps},
          {"discount", c.discount},
          {"epsilon_start", c.epsilon_start},
          {"epsilon_end", c.epsilon_end},
          {"epsilon_decay_fraction", c.epsilon_decay_fraction},
          {"buffer_capacity", c.buffer_capacity},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate}};
}

inline nlohmann::json to_json(const BudgetDistribution& d) {
  return {{"min_steps", d.min_steps},
          {"max_steps", d.max_steps},
          {"log_uniform", d.log_uniform},
          {"min_learning_rate", d.min_learning_rate},
          {"max_learning_rate", d.max_learning_rate},
          {"checkpoints_per_run", d.checkpoints_per_run},
          {"eval_episodes", d.eval_episodes}};
}

/// Evaluates a record's weights and fills in the derived fields.
inline AgentRecord make_record(std::uint64_t id, std::span<const double> weights, std::uint64_t seed,
                               std::uint32_t budget, int eval_episodes, Rng& eval_rng) {
  AgentRecord rec;
  rec.id = id;
  rec.weights = round_to_f32(weights);
  rec.survival_time = static_cast<float>(survival_time(rec.weights, eval_episodes, eval_rng));
  rec.group = bin(rec.survival_time);
  rec.seed = seed;
  rec.train_budget = budget;
  return rec;
}

/// Trains `n` agents, each with its own derived seed, step budget and
/// learning rate, and snapshots `checkpoints_per_run` records per agent.
/// Record ids are run * checkpoints_per_run + checkpoint; a failed run is
/// listed under metadata.failures and contributes no records.
inline Zoo build_zoo(std::size_t n, const BudgetDistribution& dist, std::uint64_t seed,
                     const TrainConfig& base = {}, std::size_t workers = 1) {
  require(n >= 1, "build_zoo: n must be >= 1");
  dist.validate();

  struct RunResult {
    std::vector<AgentRecord> records;
    std::string error;
  };

  auto run = [&](std::size_t i) -> RunResult {
    RunResult out;
    const std::uint64_t run_seed = derive_seed(seed, i);
    Rng rng(run_seed);
    TrainConfig config = base;
    config.train_steps = dist.draw_steps(rng);
    config.learning_rate = dist.draw_learning_rate(rng);
    const std::size_t c = dist.checkpoints_per_run;
    std::vector<std::uint64_t> steps;
    for (std::size_t k = 1; k <= c; ++k) steps.push_back(config.train_steps * k / c);
    std::size_t k = 0;
    try {
      train_agent(config, rng, steps, [&](std::uint64_t done, const CartPoleNet& net) {
        Rng eval_rng(derive_seed(run_seed, 1'000'000 + k));
        out.records.push_back(make_record(i * c + k, vectorize(net), run_seed,
                                          static_cast<std::uint32_t>(done), dist.eval_episodes,
                                          eval_rng));
        ++k;
      });
    } catch (const std::exception& e) {
      out.records.clear();
      out.error = e.what();
    }
    return out;
  };

  auto results = parallel_map(n, workers, run);

  Zoo zoo;
  nlohmann::json failures = nlohmann::json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!results[i].error.empty()) {
      failures.push_back({{"run", i}, {"error", results[i].error}});
      continue;
    }
    for (auto& r : results[i].records) zoo.records.push_back(std::move(r));
  }
  zoo.metadata = {{"tool", kToolName},
                  {"version", kToolVersion},
                  {"master_seed", seed},
                  {"runs", n},
                  {"record_mode", dist.checkpoints_per_run > 1 ? "checkpoints" : "independent"},
                  {"budget_distribution", to_json(dist)},
                  {"base_train_config", to_json(base)},
                  {"failures", failures}};
  zoo.metadata["bin_counts"] = bin_counts_json(zoo);
  return zoo;
}

// --- Binary container ------------------------------------------------------
//
//   magic            8 bytes  "AEMBZOO\0"
//   version          u32
//   record_count     u64
//   metadata_length  u32, followed by that many bytes of UTF-8 JSON
//   records          record_count x 873 bytes:
//                      id u64, survival_time f32, group u8, seed u64,
//                      budget u32, 212 x f32 weights
//
// All integers and floats little-endian.

inline constexpr std::string_view kZooMagic{"AEMBZOO\0", 8};
inline constexpr std::uint32_t kZooVersion = 1;
inline constexpr std::size_t kZooRecordBytes = 8 + 4 + 1 + 8 + 4 + 4 * kWeightCount;

inline std::vector<std::uint8_t> encode_zoo(const Zoo& zoo) {
  ByteWriter w;
  w.put_bytes(kZooMagic);
  w.put_u32(kZooVersion);
  w.put_u64(zoo.records.size());
  const std::string meta = zoo.metadata.dump();
  w.put_u32(static_cast<std::uint32_t>(meta.size()));
  w.put_bytes(meta);
  for (const auto& r : zoo.records) {
    require(r.weights.size() == kWeightCount, "encode_zoo: record has wrong weight count");
    w.put_u64(r.id);
    w.put_f32(static_cast<float>(r.survival_time));
    w.put_u8(static_cast<std::uint8_t>(r.group));
    w.put_u64(r.seed);
    w.put_u32(r.train_budget);
    for (double v : r.weights) w.put_f32(static_cast<float>(v));
  }
  return w.bytes();
}

inline Zoo decode_zoo(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.get_bytes(kZooMagic.size(), "magic");
  if (!std::equal(magic.begin(), magic.end(), kZooMagic.begin())) throw ParseError("bad zoo magic", 0);
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.get_u32("version");
  if (version != kZooVersion)
    throw ParseError("unsupported zoo version " + std::to_string(version), version_at);
  const std::uint64_t count = r.get_u64("record count");
  const std::uint32_t meta_len = r.get_u32("metadata length");
  const std::size_t meta_at = r.offset();
  auto meta = r.get_bytes(meta_len, "metadata");
  Zoo zoo;
  try {
    zoo.metadata = nlohmann::json::parse(meta.begin(), meta.end());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid metadata JSON: ") + e.what(), meta_at);
  }
  if (r.remaining() / kZooRecordBytes < count || r.remaining() != count * kZooRecordBytes)
    throw ParseError("record block length " + std::to_string(r.remaining()) + " does not match " +
                         std::to_string(count) + " records",
                     r.offset());
  zoo.records.reserve(count);
  std::set<std::uint64_t> ids;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    AgentRecord rec;
    rec.id = r.get_u64("id");
    rec.survival_time = r.get_f32("survival_time");
    const std::uint8_t g = r.get_u8("group");
    rec.seed = r.get_u64("seed");
    rec.train_budget = r.get_u32("budget");
    rec.weights.resize(kWeightCount);
    for (double& v : rec.weights) v = r.get_f32("weights");
    if (!(rec.survival_time >= 1.0 && rec.survival_time <= 200.0))
      throw ParseError("record " + std::to_string(i) + ": survival time out of range", at);
    if (g < 1 || g > 4 || static_cast<Group>(g) != bin(rec.survival_time))
      throw ParseError("record " + std::to_string(i) + ": group inconsistent with survival time", at);
    rec.group = static_cast<Group>(g);
    if (!std::all_of(rec.weights.begin(), rec.weights.end(), [](double v) { return std::isfinite(v); }))
      throw ParseError("record " + std::to_string(i) + ": non-finite weight", at);
    if (!ids.insert(rec.id).second)
      throw ParseError("record " + std::to_string(i) + ": duplicate id " + std::to_string(rec.id), at);
    zoo.records.push_back(std::move(rec));
  }
  return zoo;
}

inline void save_zoo(const Zoo& zoo, const std::filesystem::path& path) {
  write_file_atomic(path, encode_zoo(zoo));
}

inline Zoo load_zoo(const std::filesystem::path& path) { return decode_zoo(read_file_bytes(path)); }

/// One JSON object per record: {id, survival_time, group, seed, budget, weights}.
inline void export_jsonl(const Zoo& zoo, std::ostream& os) {
  for (const auto& r : zoo.records) {
    nlohmann::json j = {{"id", r.id},
                        {"survival_time", r.survival_time},
                        {"group", to_string(r.group)},
                        {"seed", r.seed},
                        {"budget", r.train_budget},
                        {"weights", r.weights}};
    os << j.dump() << '\n';
  }
}

/// Records of `group` (all when unset), then at most `max_n` of them drawn
/// without replacement. Original order is preserved.
inline Zoo subset(const Zoo& zoo, std::optional<Group> group, std::optional<std::size_t> max_n,
                  std::uint64_t seed) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < zoo.records.size(); ++i)
    if (!group || zoo.records[i].group == *group) keep.push_back(i);
  if (max_n && *max_n < keep.size()) {
    Rng rng(seed);
    for (std::size_t i = 0; i < *max_n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.index(keep.size() - i));
      std::swap(keep[i], keep[j]);
    }
    keep.resize(*max_n);
    std::sort(keep.begin(), keep.end());
  }
  Zoo out;
  out.metadata = zoo.metadata;
  out.metadata["subset"] = {{"group", group ? to_string(*group) : "all"},
                            {"max_n", max_n ? nlohmann::json(*max_n) : nlohmann::json(nullptr)},
                            {"seed", seed},
                            {"source_size", zoo.size()}};
  for (std::size_t i : keep) out.records.push_back(zoo.records[i]);
  out.metadata["bin_counts"] = bin_counts_json(out);
  return out;
}

}  // namespace agentemb
