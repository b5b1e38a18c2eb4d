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

// agentemb command line: builds agent zoos, trains the weight generator and
// runs the sampling, convergence, interpolation and repair experiments.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "agentemb/cartpolegen.hpp"
#include "agentemb/convergence.hpp"
#include "agentemb/latent_ops.hpp"
#include "agentemb/parallel.hpp"
#include "agentemb/repair.hpp"
#include "agentemb/stats.hpp"
#include "agentemb/version.hpp"
#include "agentemb/zoo.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace agentemb;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

// Random streams split off the master seed. Commands that must agree with
// each other (train-gen/sample vs efficiency-sweep) share a stream.
enum Stream : std::uint64_t {
  kStreamTrainGen = 1,
  kStreamSample = 2,
  kStreamSampleEval = 3,
  kStreamSubset = 4,
  kStreamEval = 5,
  kStreamReferenceStates = 6,
  kStreamAgents = 7,
  kStreamSweepEval = 8,
  kStreamRepair = 9,
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& what, json detail = json::object())
      : std::runtime_error(what), detail(std::move(detail)) {}
  json detail;
};

struct Globals {
  std::uint64_t seed = 0;
  std::size_t workers = default_workers();
};

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

/// "# key=value" lines that open every CSV report.
std::string csv_preamble(const std::string& command, const Globals& g, const json& config) {
  std::ostringstream os;
  os << "# tool=" << kToolName << ' ' << kToolVersion << '\n';
  os << "# command=" << command << '\n';
  os << "# seed=" << g.seed << '\n';
  os << "# config=" << config.dump() << '\n';
  return os.str();
}

json run_metadata(const std::string& command, const Globals& g, const json& config) {
  return {{"tool", kToolName}, {"version", kToolVersion}, {"command", command}, {"seed", g.seed}, {"config", config}};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

Zoo read_zoo(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("zoo file not found: " + path.string(), {{"path", path.string()}});
  try {
    return load_zoo(path);
  } catch (const ParseError& e) {
    throw DataError("corrupt zoo file " + path.string() + ": " + e.what(),
                    {{"path", path.string()}, {"offset", e.offset()}});
  }
}

LoadedModel read_model(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("model file not found: " + path.string(), {{"path", path.string()}});
  try {
    return load_model(path);
  } catch (const ParseError& e) {
    throw DataError("corrupt model file " + path.string() + ": " + e.what(),
                    {{"path", path.string()}, {"offset", e.offset()}});
  }
}

/// Zoo ids compressed into "a-b" runs.
std::vector<std::string> id_ranges(const Zoo& zoo) {
  std::vector<std::uint64_t> ids;
  for (const auto& r : zoo.records) ids.push_back(r.id);
  std::sort(ids.begin(), ids.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ids.size();) {
    std::size_t j = i;
    while (j + 1 < ids.size() && ids[j + 1] == ids[j] + 1) ++j;
    out.push_back(i == j ? std::to_string(ids[i]) : std::to_string(ids[i]) + "-" + std::to_string(ids[j]));
    i = j + 1;
  }
  return out;
}

const AgentRecord& find_record(const Zoo& zoo, std::uint64_t id) {
  if (const AgentRecord* r = zoo.find(id)) return *r;
  const auto ranges = id_ranges(zoo);
  std::string listing;
  for (const auto& s : ranges) listing += (listing.empty() ? "" : ",") + s;
  throw DataError("unknown record id " + std::to_string(id) + "; available ids: " + listing,
                  {{"id", id}, {"available_ids", ranges}});
}

std::optional<Group> group_option(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const auto g = parse_group(s);
  if (!g) throw UsageError("unknown group '" + s + "' (expected G1, G2, G3 or G4)");
  return g;
}

SampleMode sample_mode_option(const std::string& s) {
  const auto m = parse_sample_mode(s);
  if (!m) throw UsageError("unknown sample mode '" + s + "' (expected prior or posterior)");
  return *m;
}

std::vector<double> read_weight_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open weight file " + path.string(), {{"path", path.string()}});
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  std::vector<double> w;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    try {
      w = json::parse(text).get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw DataError("weight file " + path.string() + " is not a JSON number array: " + e.what());
    }
  } else {
    std::replace(text.begin(), text.end(), ',', ' ');
    std::istringstream is(text);
    double v;
    while (is >> v) w.push_back(v);
    if (!is.eof()) throw DataError("weight file " + path.string() + " contains a non-numeric token");
  }
  if (w.size() != kWeightCount)
    throw DataError("weight file " + path.string() + " holds " + std::to_string(w.size()) + " values, expected " +
                    std::to_string(kWeightCount));
  for (double v : w)
    if (!std::isfinite(v)) throw DataError("weight file " + path.string() + " contains a non-finite value");
  return w;
}

// --- shared pieces ---------------------------------------------------------

struct GenOptions {
  std::string mode = "combined";
  std::string group;
  int epochs = 20;
  std::size_t batch_size = 10;
  double learning_rate = 1e-3;

  GenTrainConfig resolve() const {
    GenTrainConfig c;
    const auto m = parse_gen_mode(mode);
    if (!m) throw UsageError("unknown generator mode '" + mode + "' (expected combined, conditional or per-group)");
    c.mode = *m;
    c.group = group_option(group);
    if (c.mode == GenMode::kPerGroup && !c.group) throw UsageError("--mode per-group needs --group");
    if (c.mode != GenMode::kPerGroup && c.group) throw UsageError("--group is only valid with --mode per-group");
    c.epochs = epochs;
    c.batch_size = batch_size;
    c.adam.learning_rate = learning_rate;
    return c;
  }

  void add_to(CLI::App* app) {
    app->add_option("--mode", mode, "combined | conditional | per-group")->capture_default_str();
    app->add_option("--group", group, "Group trained in per-group mode (G1..G4)");
    app->add_option("--epochs", epochs, "Training epochs")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--batch-size", batch_size, "Minibatch size")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--lr", learning_rate, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  }
};

struct SampleOptions {
  std::size_t n = 200;
  std::string mode = "posterior";
  std::string label;
  int eval_episodes = 100;

  void add_to(CLI::App* app) {
    app->add_option("--n", n, "Number of networks to sample")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--sample-mode", mode, "prior | posterior")->capture_default_str();
    app->add_option("--label", label, "Group label (conditional models; restricts posterior sources)");
    app->add_option("--eval-episodes", eval_episodes, "Episodes per survival evaluation")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
  }

  json to_json() const {
    return {{"n", n}, {"sample_mode", mode}, {"label", label.empty() ? json(nullptr) : json(label)},
            {"eval_episodes", eval_episodes}};
  }
};

/// Draws networks and scores each on its own derived evaluation seed.
std::vector<double> sample_and_evaluate(const GenModel& model, const Zoo* source, const SampleOptions& o,
                                        const Globals& g) {
  Rng rng(derive_seed(g.seed, kStreamSample));
  const auto nets = sample_networks(model, o.n, sample_mode_option(o.mode), source, group_option(o.label), rng);
  const std::uint64_t eval_stream = derive_seed(g.seed, kStreamSampleEval);
  return parallel_map(nets.size(), g.workers, [&](std::size_t i) {
    Rng eval(derive_seed(eval_stream, i));
    return survival_time(nets[i], o.eval_episodes, eval);
  });
}

std::string samples_csv(std::span<const double> st) {
  std::ostringstream os;
  os.precision(10);
  os << "sample,survival_time,std_survival_time\n";
  for (std::size_t i = 0; i < st.size(); ++i) os << i << ',' << st[i] << ",\n";
  os << "summary," << mean(st) << ',' << sample_std(st) << '\n';
  return os.str();
}

std::string histogram_csv(std::span<const double> st) {
  std::ostringstream os;
  os << "bin_lo,bin_hi,count\n";
  for (const auto& b : histogram(st, 0.0, 200.0, 20)) os << b.lo << ',' << b.hi << ',' << b.count << '\n';
  return os.str();
}

GenModel train_and_round(const Zoo& zoo, const GenTrainConfig& c, const Globals& g, std::vector<EpochLoss>* curve) {
  Rng rng(derive_seed(g.seed, kStreamTrainGen));
  auto result = train_gen(zoo, c, rng);
  if (curve) *curve = result.curve;
  // Downstream commands see the model as it reads back from disk.
  return round_trip_f32(result.model);
}

// --- commands --------------------------------------------------------------

struct TrainZooCmd {
  std::size_t n = 200;
  std::string out;
  std::string jsonl;
  BudgetDistribution dist;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("train-zoo", "Train a zoo of Cart-Pole Q-networks");
    c->add_option("--n", n, "Number of training runs")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--out", out, "Zoo file to write")->required();
    c->add_option("--jsonl", jsonl, "Also export the records as JSON lines");
    c->add_option("--min-steps", dist.min_steps, "Smallest training budget (environment steps)")
        ->capture_default_str();
    c->add_option("--max-steps", dist.max_steps, "Largest training budget (environment steps)")
        ->capture_default_str();
    c->add_option("--checkpoints", dist.checkpoints_per_run, "Records kept per run (evenly spaced)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    c->add_option("--eval-episodes", dist.eval_episodes, "Episodes per survival evaluation")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    c->add_option("--min-lr", dist.min_learning_rate, "Smallest Q-network learning rate")->capture_default_str();
    c->add_option("--max-lr", dist.max_learning_rate, "Largest Q-network learning rate")->capture_default_str();
    c->footer("Writes a binary zoo (records: id, survival_time, group, seed, budget, 212 weights).");
    cmd = c;
  }

  int run(const Globals& g) {
    try {
      dist.validate();
    } catch (const ContractViolation& e) {
      throw UsageError(e.what());
    }
    Zoo zoo = build_zoo(n, dist, g.seed, {}, g.workers);
    const json config = {{"n", n}, {"budget_distribution", to_json(dist)}};
    zoo.metadata["run"] = run_metadata("train-zoo", g, config);
    save_zoo(zoo, out);
    if (!jsonl.empty()) {
      std::ostringstream os;
      export_jsonl(zoo, os);
      write_text(jsonl, os.str());
    }
    std::cerr << "train-zoo: " << zoo.size() << " records, bins " << bin_counts_json(zoo).dump() << ", "
              << zoo.metadata["failures"].size() << " failed runs\n";
    return 0;
  }

  CLI::App* cmd = nullptr;
};

struct ExportCmd {
  std::string zoo_path, out;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("export-jsonl", "Export zoo records as JSON lines");
    c->add_option("--zoo", zoo_path, "Zoo file")->required();
    c->add_option("--out", out, "JSONL file to write")->required();
    c->footer("One object per line: id, survival_time, group, seed, budget, weights.");
    cmd = c;
  }

  int run(const Globals&) {
    const Zoo zoo = read_zoo(zoo_path);
    std::ostringstream os;
    export_jsonl(zoo, os);
    write_text(out, os.str());
    return 0;
  }

  CLI::App* cmd = nullptr;
};

struct TrainGenCmd {
  std::string zoo_path, out, curve;
  GenOptions gen;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("train-gen", "Train the weight generator on a zoo");
    c->add_option("--zoo", zoo_path, "Zoo file")->required();
    c->add_option("--out", out, "Model file to write")->required();
    c->add_option("--curve", curve, "Training curve CSV");
    gen.add_to(c);
    c->footer("Curve CSV columns: epoch, recon, kl, total (per-record means).");
    cmd = c;
  }

  int run(const Globals& g) {
    const Zoo zoo = read_zoo(zoo_path);
    const GenTrainConfig config = gen.resolve();
    std::vector<EpochLoss> losses;
    const GenModel model = train_and_round(zoo, config, g, &losses);
    json meta = run_metadata("train-gen", g, to_json(config));
    meta["training_records"] = zoo.size();
    meta["final_loss"] = {{"recon", losses.back().recon}, {"kl", losses.back().kl}, {"total", losses.back().total}};
    save_model(model, out, meta);
    if (!curve.empty()) {
      std::ostringstream os;
      os << csv_preamble("train-gen", g, to_json(config));
      write_training_curve_csv(os, losses);
      write_text(curve, os.str());
    }
    std::cerr << "train-gen: epoch 1 loss " << losses.front().total << ", epoch " << losses.back().epoch
              << " loss " << losses.back().total << '\n';
    return 0;
  }

  CLI::App* cmd = nullptr;
};

struct SampleCmd {
  std::string model_path, zoo_path, out, hist;
  SampleOptions opt;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("sample", "Sample networks from a trained generator and score them");
    c->add_option("--model", model_path, "Model file")->required();
    c->add_option("--zoo", zoo_path, "Source zoo for posterior sampling");
    c->add_option("--out", out, "Per-sample CSV")->required();
    c->add_option("--histogram", hist, "Histogram CSV");
    opt.add_to(c);
    c->footer(
        "CSV columns: sample, survival_time, std_survival_time. One row per sample, then a\n"
        "'summary' row holding the mean and sample std. Histogram: bin_lo, bin_hi, count\n"
        "(20 bins over [0, 200]).");
    cmd = c;
  }

  int run(const Globals& g) {
    const LoadedModel m = read_model(model_path);
    std::optional<Zoo> zoo;
    if (!zoo_path.empty()) zoo = read_zoo(zoo_path);
    if (sample_mode_option(opt.mode) == SampleMode::kPosterior && !zoo)
      throw UsageError("posterior sampling needs --zoo");
    const auto st = sample_and_evaluate(m.model, zoo ? &*zoo : nullptr, opt, g);
    const json config = opt.to_json();
    write_text(out, csv_preamble("sample", g, config) + samples_csv(st));
    if (!hist.empty()) write_text(hist, csv_preamble("sample", g, config) + histogram_csv(st));
    std::cout << "mean " << format_double(mean(st)) << " std " << format_double(sample_std(st)) << '\n';
    return 0;
  }

  CLI::App* cmd = nullptr;
};

struct EvalCmd {
  std::string weights, zoo_path, out, trajectory;
  std::uint64_t id = 0;
  int episodes = 100;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "Measure the survival time of one network");
    c->add_option("--weights", weights, "212 weights as a JSON array or whitespace/comma separated text");
    c->add_option("--zoo", zoo_path, "Zoo file (with --id)");
    auto* id_opt = c->add_option("--id", id, "Record id in --zoo");
    c->add_option("--episodes", episodes, "Evaluation episodes")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--out", out, "CSV report (stdout when omitted)");
    c->add_option("--trajectory", trajectory, "JSONL trace of one greedy episode");
    c->footer("CSV columns: survival_time, episodes.\nTrajectory fields: t, x, x_dot, theta, theta_dot, action, reward.");
    id_option = id_opt;
    cmd = c;
  }

  int run(const Globals& g) {
    std::vector<double> w;
    json source;
    if (!weights.empty()) {
      if (!zoo_path.empty()) throw UsageError("give either --weights or --zoo/--id, not both");
      w = read_weight_file(weights);
      source = {{"kind", "weights"}};
    } else {
      if (zoo_path.empty() || id_option->count() == 0) throw UsageError("eval needs --weights or --zoo with --id");
      const Zoo zoo = read_zoo(zoo_path);
      w = find_record(zoo, id).weights;
      source = {{"kind", "zoo"}, {"id", id}};
    }
    Rng rng(derive_seed(g.seed, kStreamEval));
    const double st = survival_time(w, episodes, rng);
    const json config = {{"source", source}, {"episodes", episodes}};
    const std::string report = csv_preamble("eval", g, config) + "survival_time,episodes\n" + format_double(st) +
                               "," + std::to_string(episodes) + "\n";
    if (out.empty()) {
      std::cout << report;
    } else {
      write_text(out, report);
    }
    if (!trajectory.empty()) {
      const CartPoleNet net = devectorize(w);
      Rng trng(derive_seed(g.seed, kStreamEval + 100));
      const auto ep = CartPole().run_episode([&](const CartState& s) { return greedy_action(net.qvalues(s)); },
                                             trng, -1, true);
      std::ostringstream os;
      write_trajectory_jsonl(os, *ep.trajectory);
      write_text(trajectory, os.str());
    }
    return 0;
  }

  CLI::Option* id_option = nullptr;
  CLI::App* cmd = nullptr;
};

struct ConvergenceCmd {
  std::string zoo_path, model_path, out, pairs_out, source = "generator";
  std::size_t good_n = 10, bad_n = 10, ref_states = 10000, max_draws = 5000;
  double good_min = 180.0, bad_min = 25.0, bad_max = 35.0;
  int eval_episodes = 100;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("convergence", "Convergence distances within good and bad agent groups");
    c->add_option("--zoo", zoo_path, "Zoo file (reference states; posterior sources)")->required();
    c->add_option("--model", model_path, "Model file (required with --source generator)");
    c->add_option("--source", source, "generator | zoo: where the agents come from")->capture_default_str();
    c->add_option("--good-n", good_n, "Agents in the good group")->capture_default_str()->check(CLI::Range(2, 1000));
    c->add_option("--bad-n", bad_n, "Agents in the bad group")->capture_default_str()->check(CLI::Range(2, 1000));
    c->add_option("--good-min", good_min, "Minimum survival of a good agent")->capture_default_str();
    c->add_option("--bad-min", bad_min, "Minimum survival of a bad agent")->capture_default_str();
    c->add_option("--bad-max", bad_max, "Maximum survival of a bad agent")->capture_default_str();
    c->add_option("--ref-states", ref_states, "Reference states for activation statistics")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    c->add_option("--max-draws", max_draws, "Generator draws allowed per group")->capture_default_str();
    c->add_option("--eval-episodes", eval_episodes, "Episodes per survival evaluation")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    c->add_option("--out", out, "Summary CSV")->required();
    c->add_option("--pairs-out", pairs_out, "Per-pair CSV");
    c->footer(
        "Summary columns: group, layer, mean_cd, std_cd, pairs (std over pairs, n - 1).\n"
        "Pair columns: group, layer, a, b, cd_forward, cd_backward, cd_mean.");
    cmd = c;
  }

  struct Agents {
    std::vector<CartPoleNet> nets;
    std::vector<double> survival;
    std::size_t draws = 0;
  };

  Agents from_generator(const GenModel& model, const Zoo& zoo, Group label, double lo, double hi, std::size_t n,
                        std::uint64_t stream, const Globals& g) const {
    Agents a;
    Rng rng(stream);
    const std::size_t batch = std::max<std::size_t>(g.workers, 16);
    while (a.nets.size() < n) {
      if (a.draws >= max_draws)
        throw DataError("convergence: only " + std::to_string(a.nets.size()) + " of " + std::to_string(n) + " " +
                            to_string(label) + " agents within [" + format_double(lo) + ", " + format_double(hi) +
                            "] after " + std::to_string(a.draws) + " draws",
                        {{"group", to_string(label)}, {"found", a.nets.size()}, {"draws", a.draws}});
      const auto ws = sample_networks(model, batch, SampleMode::kPosterior, &zoo, label, rng);
      const std::uint64_t first = a.draws;
      const auto st = parallel_map(ws.size(), g.workers, [&](std::size_t i) {
        Rng eval(derive_seed(stream, first + i));
        return survival_time(ws[i], eval_episodes, eval);
      });
      for (std::size_t i = 0; i < ws.size() && a.nets.size() < n; ++i) {
        ++a.draws;
        if (st[i] >= lo && st[i] <= hi) {
          a.nets.push_back(devectorize(ws[i]));
          a.survival.push_back(st[i]);
        }
      }
    }
    return a;
  }

  Agents from_zoo(const Zoo& zoo, double lo, double hi, std::size_t n, std::uint64_t stream,
                  const std::string& name) const {
    std::vector<const AgentRecord*> pool;
    for (const auto& r : zoo.records)
      if (r.survival_time >= lo && r.survival_time <= hi) pool.push_back(&r);
    if (pool.size() < n)
      throw DataError("convergence: zoo holds " + std::to_string(pool.size()) + " " + name + " agents, need " +
                          std::to_string(n),
                      {{"group", name}, {"found", pool.size()}});
    Rng rng(stream);
    Agents a;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.index(pool.size() - i));
      std::swap(pool[i], pool[j]);
      a.nets.push_back(devectorize(pool[i]->weights));
      a.survival.push_back(pool[i]->survival_time);
    }
    return a;
  }

  int run(const Globals& g) {
    if (source != "generator" && source != "zoo") throw UsageError("--source must be generator or zoo");
    if (bad_min > bad_max) throw UsageError("--bad-min exceeds --bad-max");
    const Zoo zoo = read_zoo(zoo_path);
    const std::uint64_t stream = derive_seed(g.seed, kStreamAgents);
    Agents good, bad;
    if (source == "generator") {
      if (model_path.empty()) throw UsageError("--source generator needs --model");
      const LoadedModel m = read_model(model_path);
      if (m.model.trained_group())
        throw UsageError("convergence needs a combined or conditional model, not a single-group model");
      const auto counts = bin_counts(zoo);
      for (Group need : {Group::kG4, Group::kG1})
        if (counts[group_index(need)] == 0)
          throw DataError("convergence: zoo has no " + to_string(need) + " records to encode",
                          {{"group", to_string(need)}, {"bin_counts", bin_counts_json(zoo)}});
      good = from_generator(m.model, zoo, Group::kG4, good_min, 200.0, good_n, derive_seed(stream, 0), g);
      bad = from_generator(m.model, zoo, Group::kG1, bad_min, bad_max, bad_n, derive_seed(stream, 1), g);
    } else {
      good = from_zoo(zoo, good_min, 200.0, good_n, derive_seed(stream, 0), "good");
      bad = from_zoo(zoo, bad_min, bad_max, bad_n, derive_seed(stream, 1), "bad");
    }
    Rng ref_rng(derive_seed(g.seed, kStreamReferenceStates));
    const ReferenceSet refs = collect_reference_states(zoo, ref_states, ref_rng);

    const json config = {{"source", source},       {"good_n", good_n},
                         {"bad_n", bad_n},         {"good_min", good_min},
                         {"bad_min", bad_min},     {"bad_max", bad_max},
                         {"ref_states", ref_states}, {"eval_episodes", eval_episodes},
                         {"max_draws", max_draws}, {"reference_provenance", refs.provenance}};
    std::ostringstream summary, pairs;
    summary.precision(10);
    pairs.precision(10);
    summary << csv_preamble("convergence", g, config);
    summary << "# good_survival_mean=" << mean(good.survival) << " bad_survival_mean=" << mean(bad.survival)
            << " good_draws=" << good.draws << " bad_draws=" << bad.draws << '\n';
    summary << "group,layer,mean_cd,std_cd,pairs\n";
    pairs << csv_preamble("convergence", g, config) << "group,layer,a,b,cd_forward,cd_backward,cd_mean\n";
    for (Layer layer : {Layer::kHidden, Layer::kOutput}) {
      for (const auto& [name, agents] : {std::pair<std::string, const Agents*>{"good", &good}, {"bad", &bad}}) {
        const auto all = all_pairs_cd(agents->nets, refs, layer);
        const GroupSummary s = summarize(all);
        summary << name << ',' << to_string(layer) << ',' << s.mean << ',' << s.std << ',' << s.pairs << '\n';
        for (const auto& p : all)
          pairs << name << ',' << to_string(layer) << ',' << p.a << ',' << p.b << ',' << p.cd.forward << ','
                << p.cd.backward << ',' << p.cd.mean << '\n';
      }
    }
    write_text(out, summary.str());
    if (!pairs_out.empty()) write_text(pairs_out, pairs.str());
    return 0;
  }

  CLI::App* cmd = nullptr;
};

struct InterpolateCmd {
  std::string model_path, zoo_path, out, label;
  std::uint64_t id_a = 0, id_b = 0;
  std::size_t points = 20;
  double alpha_max = 1.5;
  int eval_episodes = 100;
  std::size_t ref_states = 10000;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("interpolate", "Survival along latent and weight interpolation paths");
    c->add_option("--model", model_path, "Model file")->required();
    c->add_option("--zoo", zoo_path, "Zoo file holding both endpoints")->required();
    c->add_option("--id-a", id_a, "Record id of endpoint A (alpha = 0)")->required();
    c->add_option("--id-b", id_b, "Record id of endpoint B (alpha = 1)")->required();
    c->add_option("--label", label, "Group label (required for conditional models)");
    c->add_option("--points", points, "Alpha grid size")->capture_default_str()->check(CLI::Range(2, 10000));
    c->add_option("--alpha-max", alpha_max, "Largest alpha")->capture_default_str();
    c->add_option("--eval-episodes", eval_episodes, "Episodes per survival evaluation")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    c->add_option("--ref-states", ref_states, "Reference states for the endpoint CD")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    c->add_option("--out", out, "Sweep CSV")->required();
    c->footer("CSV columns: alpha, survival_latent, survival_weight, baseline_line.");
    cmd = c;
  }

  int run(const Globals& g) {
    const LoadedModel m = read_model(model_path);
    const Zoo zoo = read_zoo(zoo_path);
    const AgentRecord& a = find_record(zoo, id_a);
    const AgentRecord& b = find_record(zoo, id_b);
    SweepOptions opt;
    opt.eval_episodes = eval_episodes;
    opt.eval_seed = derive_seed(g.seed, kStreamSweepEval);
    opt.label = group_option(label);
    opt.workers = g.workers;
    if (m.model.conditional() && !opt.label) throw UsageError("conditional model: interpolate needs --label");
    if (!m.model.conditional() && opt.label) throw UsageError("--label is only valid for conditional models");
    const auto alphas = linspace(0.0, alpha_max, points);
    const SweepResult r = sweep(m.model, a.weights, b.weights, alphas, opt);

    Rng ref_rng(derive_seed(g.seed, kStreamReferenceStates));
    const ReferenceSet refs = collect_reference_states(zoo, ref_states, ref_rng);
    const auto na = devectorize(a.weights), nb = devectorize(b.weights);
    const auto cd_hidden = convergence_distance(na, nb, refs, Layer::kHidden);
    const auto cd_output = convergence_distance(na, nb, refs, Layer::kOutput);

    const json config = {{"id_a", id_a},     {"id_b", id_b},
                         {"label", label.empty() ? json(nullptr) : json(label)},
                         {"points", points}, {"alpha_max", alpha_max},
                         {"eval_episodes", eval_episodes}, {"ref_states", ref_states}};
    std::ostringstream os;
    os.precision(10);
    os << csv_preamble("interpolate", g, config);
    os << "# stored_survival_a=" << a.survival_time << " stored_survival_b=" << b.survival_time << '\n';
    os << "# endpoint_a=" << r.endpoint_a << " endpoint_b=" << r.endpoint_b << '\n';
    os << "# cd_hidden=" << cd_hidden.mean << " cd_output=" << cd_output.mean << '\n';
    write_sweep_csv(os, r.records);
    write_text(out, os.str());
    return 0;
  }

  CLI::App* cmd = nullptr;
};

struct RepairSweepCmd {
  std::string model_path, zoo_path, out, label, mode = "posterior";
  std::uint64_t id = 0;
  RepairOptions opt;
  int eval_episodes = 100;
  std::vector<double> levels = default_degradation_levels();

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("repair-sweep", "Degrade a network at several levels and repair it");
    c->add_option("--model", model_path, "Model file")->required();
    c->add_option("--zoo", zoo_path, "Zoo file (target record and posterior sources)")->required();
    c->add_option("--id", id, "Record id of the network to degrade")->required();
    c->add_option("--budget", opt.sample_budget, "Generator samples per repair")->capture_default_str();
    c->add_option("--top-k", opt.top_k, "Ranked candidates evaluated")->capture_default_str();
    c->add_option("--epsilon", opt.epsilon, "Survival tolerance for success")->capture_default_str();
    c->add_option("--sample-mode", mode, "prior | posterior")->capture_default_str();
    c->add_option("--label", label, "Group label for the generator");
    c->add_option("--levels", levels, "Degradation fractions")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    c->add_option("--eval-episodes", eval_episodes, "Episodes per survival evaluation")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    c->add_option("--out", out, "Sweep CSV")->required();
    c->footer("CSV columns: degradation_fraction, criterion, success, st_error, samples_used.\n"
              "One row per level and criterion (missing, whole).");
    cmd = c;
  }

  int run(const Globals& g) {
    const LoadedModel m = read_model(model_path);
    const Zoo zoo = read_zoo(zoo_path);
    const AgentRecord& target = find_record(zoo, id);
    opt.sample_mode = sample_mode_option(mode);
    opt.label = group_option(label);
    const auto rows =
        repair_sweep(target.weights, m.model, &zoo, levels, opt, derive_seed(g.seed, kStreamRepair), eval_episodes);
    const json config = {{"id", id},
                         {"budget", opt.sample_budget},
                         {"top_k", opt.top_k},
                         {"epsilon", opt.epsilon},
                         {"sample_mode", mode},
                         {"label", label.empty() ? json(nullptr) : json(label)},
                         {"levels", levels},
                         {"eval_episodes", eval_episodes}};
    std::ostringstream os;
    os << csv_preamble("repair-sweep", g, config);
    os << "# stored_survival=" << format_double(target.survival_time) << '\n';
    write_repair_csv(os, rows);
    write_text(out, os.str());
    return 0;
  }

  CLI::App* cmd = nullptr;
};

struct EfficiencySweepCmd {
  std::string zoo_path, out_dir;
  std::vector<double> fractions{1.0, 0.1, 0.01};
  GenOptions gen;
  SampleOptions sample;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("efficiency-sweep", "Generator quality against training-set size");
    c->add_option("--zoo", zoo_path, "Zoo file")->required();
    c->add_option("--fractions", fractions, "Zoo fractions to train on")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    c->add_option("--out-dir", out_dir, "Directory for the reports")->required();
    gen.add_to(c);
    sample.add_to(c);
    c->footer(
        "Writes hist_<fraction>.csv (bin_lo, bin_hi, count), samples_<fraction>.csv (as 'sample')\n"
        "and summary.csv (fraction, records, mean, std, w1_to_trainset). w1_to_trainset is the\n"
        "1-Wasserstein distance between sample and full-zoo survival times.");
    cmd = c;
  }

  static std::string tag(double f) {
    std::ostringstream os;
    os << f;
    return os.str();
  }

  int run(const Globals& g) {
    const Zoo zoo = read_zoo(zoo_path);
    const GenTrainConfig config = gen.resolve();
    const SampleMode mode = sample_mode_option(sample.mode);
    std::vector<double> trainset;
    for (const auto& r : zoo.records) trainset.push_back(r.survival_time);
    if (trainset.empty()) throw DataError("efficiency-sweep: zoo is empty");

    // Validate every subset before spending time on training.
    std::vector<Zoo> subsets;
    for (double f : fractions) {
      const auto size = static_cast<std::size_t>(std::lround(f * static_cast<double>(zoo.size())));
      Zoo sub = subset(zoo, config.group, size, derive_seed(g.seed, kStreamSubset));
      if (sub.size() < config.batch_size)
        throw DataError("efficiency-sweep: fraction " + tag(f) + " leaves " + std::to_string(sub.size()) +
                            " records, fewer than one batch (" + std::to_string(config.batch_size) + ")",
                        {{"fraction", f}, {"records", sub.size()}, {"batch_size", config.batch_size}});
      subsets.push_back(std::move(sub));
    }

    json cfg = {{"fractions", fractions}, {"generator", to_json(config)}, {"sample", sample.to_json()}};
    std::ostringstream summary;
    summary.precision(10);
    summary << csv_preamble("efficiency-sweep", g, cfg) << "fraction,records,mean,std,w1_to_trainset\n";
    for (std::size_t k = 0; k < fractions.size(); ++k) {
      const Zoo& sub = subsets[k];
      const GenModel model = train_and_round(sub, config, g, nullptr);
      const auto st = sample_and_evaluate(model, mode == SampleMode::kPosterior ? &sub : nullptr, sample, g);
      json local = cfg;
      local["fraction"] = fractions[k];
      local["records"] = sub.size();
      const fs::path dir(out_dir);
      write_text(dir / ("hist_" + tag(fractions[k]) + ".csv"),
                 csv_preamble("efficiency-sweep", g, local) + histogram_csv(st));
      write_text(dir / ("samples_" + tag(fractions[k]) + ".csv"),
                 csv_preamble("efficiency-sweep", g, local) + samples_csv(st));
      summary << tag(fractions[k]) << ',' << sub.size() << ',' << mean(st) << ',' << sample_std(st) << ','
              << wasserstein1(st, trainset) << '\n';
    }
    write_text(fs::path(out_dir) / "summary.csv", summary.str());
    return 0;
  }

  CLI::App* cmd = nullptr;
};

void report_error(const std::string& kind, const std::string& message, const json& detail = json::object()) {
  json j = {{"error", kind}, {"message", message}};
  if (!detail.empty()) j["detail"] = detail;
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Agent embeddings for Cart-Pole Q-networks"};
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
  app.set_config("--config", "", "TOML/INI file with option values; command-line flags override it");
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads (results do not depend on it)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.footer(
      "Exit codes: 0 success, 1 usage error, 2 data/file error, 3 numerical failure.\n"
      "Every CSV report opens with '#' lines naming the tool version, command, seed and\n"
      "effective config.");

  TrainZooCmd train_zoo;
  ExportCmd export_jsonl_cmd;
  TrainGenCmd train_gen_cmd;
  SampleCmd sample;
  EvalCmd eval;
  ConvergenceCmd convergence;
  InterpolateCmd interpolate;
  RepairSweepCmd repair_sweep_cmd;
  EfficiencySweepCmd efficiency;
  train_zoo.setup(app);
  export_jsonl_cmd.setup(app);
  train_gen_cmd.setup(app);
  sample.setup(app);
  eval.setup(app);
  convergence.setup(app);
  interpolate.setup(app);
  repair_sweep_cmd.setup(app);
  efficiency.setup(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train_zoo.cmd->parsed()) return train_zoo.run(g);
    if (export_jsonl_cmd.cmd->parsed()) return export_jsonl_cmd.run(g);
    if (train_gen_cmd.cmd->parsed()) return train_gen_cmd.run(g);
    if (sample.cmd->parsed()) return sample.run(g);
    if (eval.cmd->parsed()) return eval.run(g);
    if (convergence.cmd->parsed()) return convergence.run(g);
    if (interpolate.cmd->parsed()) return interpolate.run(g);
    if (repair_sweep_cmd.cmd->parsed()) return repair_sweep_cmd.run(g);
    if (efficiency.cmd->parsed()) return efficiency.run(g);
  } catch (const UsageError& e) {
    report_error("usage", e.what());
    return kExitUsage;
  } catch (const ContractViolation& e) {
    report_error("usage", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    report_error("data", e.what(), e.detail);
    return kExitData;
  } catch (const NumericalFailure& e) {
    report_error("numerical", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    report_error("data", e.what());
    return kExitData;
  }
  return kExitUsage;
}
