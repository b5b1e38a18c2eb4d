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
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "agentemb/agent.hpp"
#include "agentemb/binary_io.hpp"
#include "agentemb/errors.hpp"
#include "agentemb/nn_core.hpp"
#include "agentemb/rng.hpp"
#include "agentemb/zoo.hpp"
#include "json.hpp"

namespace agentemb {

inline constexpr std::size_t kLatentDim = 32;
inline constexpr std::size_t kNumGroups = 4;
inline constexpr double kLogVarMin = -20.0;
inline constexpr double kLogVarMax = 5.0;

/// Layer widths of the generator. The encoder concatenates its input with the
/// first hidden layer before the second; the decoder does the same with the
/// latent code:
///
///   encoder: [x, c] -> h1 (ELU) -> [x, c, h1] -> h2 (ELU) -> mu, logvar
///   decoder: [z, c] -> g1 (ELU) -> [z, c, g1] -> g2 (ELU) -> x_hat (linear)
///
/// `condition_dim` is 0 for an unconditional model and 4 (one-hot group)
/// for a conditional one.
struct GenArchitecture {
  std::size_t input_dim = kWeightCount;
  std::size_t enc_hidden1 = 128;
  std::size_t enc_hidden2 = 64;
  std::size_t latent_dim = kLatentDim;
  std::size_t dec_hidden1 = 64;
  std::size_t dec_hidden2 = 128;
  std::size_t condition_dim = 0;

  friend bool operator==(const GenArchitecture&, const GenArchitecture&) = default;
};

struct Encoding {
  std::vector<double> mu;
  std::vector<double> logvar;
};

struct ElboParts {
  double recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

/// recon = sum (x - x_hat)^2, kl = -1/2 sum (1 + logvar - mu^2 - exp(logvar)).
inline ElboParts elbo_loss(std::span<const double> x, std::span<const double> x_hat,
                           std::span<const double> mu, std::span<const double> logvar) {
  require(x.size() == x_hat.size(), "elbo_loss: x and x_hat differ in length");
  require(mu.size() == logvar.size(), "elbo_loss: mu and logvar differ in length");
  ElboParts p;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - x_hat[i];
    p.recon += d * d;
  }
  for (std::size_t k = 0; k < mu.size(); ++k)
    p.kl += -0.5 * (1.0 + logvar[k] - mu[k] * mu[k] - std::exp(logvar[k]));
  p.total = p.recon + p.kl;
  return p;
}

/// z = mu + exp(logvar / 2) * eps with logvar clamped to [-20, 5].
inline std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> logvar,
                                          std::span<const double> eps) {
  require(mu.size() == logvar.size() && mu.size() == eps.size(),
          "reparameterize: mu, logvar and eps must have equal length");
  std::vector<double> z(mu.size());
  for (std::size_t k = 0; k < mu.size(); ++k)
    z[k] = mu[k] + std::exp(0.5 * std::clamp(logvar[k], kLogVarMin, kLogVarMax)) * eps[k];
  return z;
}

inline std::vector<double> standard_normal(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& e : v) e = rng.normal();
  return v;
}

inline std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> logvar,
                                          Rng& rng) {
  const auto eps = standard_normal(mu.size(), rng);
  return reparameterize(mu, logvar, eps);
}

inline std::vector<double> one_hot(Group g) {
  std::vector<double> v(kNumGroups, 0.0);
  v[group_index(g)] = 1.0;
  return v;
}

class GenModel {
 public:
  /// Forward intermediates for one (x, label, eps) triple.
  struct Tape {
    std::vector<double> enc_in, enc_a1, enc_h1, enc_s1, enc_a2, enc_h2;
    std::vector<double> mu, logvar_raw, logvar, eps, z;
    std::vector<double> dec_in, dec_b1, dec_g1, dec_s2, dec_b2, dec_g2, x_hat;
  };

  GenModel() : GenModel(GenArchitecture{}) {}

  explicit GenModel(const GenArchitecture& arch) : arch_(arch) {
    const std::size_t in = arch.input_dim + arch.condition_dim;
    const std::size_t zin = arch.latent_dim + arch.condition_dim;
    enc1_ = DenseLayer(in, arch.enc_hidden1);
    enc2_ = DenseLayer(in + arch.enc_hidden1, arch.enc_hidden2);
    enc_mu_ = DenseLayer(arch.enc_hidden2, arch.latent_dim);
    enc_logvar_ = DenseLayer(arch.enc_hidden2, arch.latent_dim);
    dec1_ = DenseLayer(zin, arch.dec_hidden1);
    dec2_ = DenseLayer(zin + arch.dec_hidden1, arch.dec_hidden2);
    dec_out_ = DenseLayer(arch.dec_hidden2, arch.input_dim);
  }

  static GenModel random(const GenArchitecture& arch, Rng& rng) {
    GenModel m(arch);
    for (DenseLayer* l : m.layers()) l->init_uniform(rng);
    return m;
  }

  const GenArchitecture& architecture() const { return arch_; }
  bool conditional() const { return arch_.condition_dim > 0; }

  /// Set for models trained on a single group; such models accept no label
  /// and must only be sampled for that group.
  std::optional<Group> trained_group() const { return trained_group_; }
  void set_trained_group(std::optional<Group> g) { trained_group_ = g; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const DenseLayer* l : layers()) n += l->parameter_count();
    return n;
  }

  /// enc1, enc2, enc_mu, enc_logvar, dec1, dec2, dec_out; each W then b.
  std::vector<double> parameters() const {
    std::vector<double> out(parameter_count());
    std::size_t off = 0;
    for (const DenseLayer* l : layers()) {
      l->copy_parameters(std::span<double>(out).subspan(off, l->parameter_count()));
      off += l->parameter_count();
    }
    return out;
  }

  void set_parameters(std::span<const double> p) {
    require(p.size() == parameter_count(), "GenModel::set_parameters: wrong length");
    std::size_t off = 0;
    for (DenseLayer* l : layers()) {
      l->load_parameters(p.subspan(off, l->parameter_count()));
      off += l->parameter_count();
    }
  }

  bool all_finite() const {
    for (const DenseLayer* l : layers())
      if (!l->all_finite()) return false;
    return true;
  }

  Encoding encode(std::span<const double> x, std::optional<Group> label = std::nullopt) const {
    Tape t;
    run_encoder(x, label, t);
    return {std::move(t.mu), std::move(t.logvar)};
  }

  /// Mean of the Gaussian likelihood p(x | z).
  WeightVector decode(std::span<const double> z, std::optional<Group> label = std::nullopt) const {
    Tape t;
    t.z.assign(z.begin(), z.end());
    run_decoder(label, t);
    return std::move(t.x_hat);
  }

  /// Full pass with a fixed noise sample.
  Tape record(std::span<const double> x, std::optional<Group> label, std::span<const double> eps) const {
    require(eps.size() == arch_.latent_dim, "GenModel::record: eps has wrong length");
    Tape t;
    run_encoder(x, label, t);
    t.eps.assign(eps.begin(), eps.end());
    t.z = reparameterize(t.mu, t.logvar, t.eps);
    run_decoder(label, t);
    return t;
  }

  /// Loss of the recorded pass and, scaled by `scale`, its gradient with
  /// respect to every parameter accumulated into `grad`.
  ElboParts backward(const Tape& t, std::span<const double> x, double scale, std::span<double> grad) const {
    require(grad.size() == parameter_count(), "GenModel::backward: gradient buffer has wrong length");
    require(t.x_hat.size() == arch_.input_dim && x.size() == arch_.input_dim &&
                std::equal(x.begin(), x.end(), t.enc_in.begin()),
            "GenModel::backward: tape does not match input");
    const ElboParts loss = elbo_loss(x, t.x_hat, t.mu, t.logvar);

    const std::size_t K = arch_.latent_dim;
    const std::size_t C = arch_.condition_dim;
    std::array<std::span<double>, 7> g;
    {
      std::size_t off = 0;
      auto ls = layers();
      for (std::size_t i = 0; i < ls.size(); ++i) {
        g[i] = grad.subspan(off, ls[i]->parameter_count());
        off += ls[i]->parameter_count();
      }
    }

    // Decoder.
    std::vector<double> d_xhat(arch_.input_dim);
    for (std::size_t i = 0; i < d_xhat.size(); ++i) d_xhat[i] = 2.0 * (t.x_hat[i] - x[i]) * scale;
    std::vector<double> d_g2(arch_.dec_hidden2);
    dec_out_.backward(t.dec_g2, d_xhat, g[6], d_g2);
    for (std::size_t i = 0; i < d_g2.size(); ++i) d_g2[i] *= elu_grad(t.dec_b2[i]);
    std::vector<double> d_s2(K + C + arch_.dec_hidden1);
    dec2_.backward(t.dec_s2, d_g2, g[5], d_s2);
    std::vector<double> d_b1(d_s2.begin() + static_cast<std::ptrdiff_t>(K + C), d_s2.end());
    for (std::size_t i = 0; i < d_b1.size(); ++i) d_b1[i] *= elu_grad(t.dec_b1[i]);
    std::vector<double> d_dec_in(K + C);
    dec1_.backward(t.dec_in, d_b1, g[4], d_dec_in);

    // Latent: reparameterization plus KL.
    std::vector<double> d_mu(K), d_logvar(K);
    for (std::size_t k = 0; k < K; ++k) {
      const double dz = d_dec_in[k] + d_s2[k];
      const double sigma = std::exp(0.5 * t.logvar[k]);
      d_mu[k] = dz + t.mu[k] * scale;
      const bool clamped = t.logvar_raw[k] < kLogVarMin || t.logvar_raw[k] > kLogVarMax;
      d_logvar[k] = clamped ? 0.0 : dz * t.eps[k] * 0.5 * sigma + 0.5 * (std::exp(t.logvar[k]) - 1.0) * scale;
    }

    // Encoder.
    std::vector<double> d_h2(arch_.enc_hidden2), d_h2_lv(arch_.enc_hidden2);
    enc_mu_.backward(t.enc_h2, d_mu, g[2], d_h2);
    enc_logvar_.backward(t.enc_h2, d_logvar, g[3], d_h2_lv);
    for (std::size_t i = 0; i < d_h2.size(); ++i) d_h2[i] = (d_h2[i] + d_h2_lv[i]) * elu_grad(t.enc_a2[i]);
    std::vector<double> d_s1(t.enc_s1.size());
    enc2_.backward(t.enc_s1, d_h2, g[1], d_s1);
    const std::size_t in = arch_.input_dim + C;
    std::vector<double> d_a1(d_s1.begin() + static_cast<std::ptrdiff_t>(in), d_s1.end());
    for (std::size_t i = 0; i < d_a1.size(); ++i) d_a1[i] *= elu_grad(t.enc_a1[i]);
    enc1_.backward(t.enc_in, d_a1, g[0], {});
    return loss;
  }

  friend bool operator==(const GenModel& a, const GenModel& b) {
    return a.arch_ == b.arch_ && a.trained_group_ == b.trained_group_ && a.parameters() == b.parameters();
  }

 private:
  std::array<DenseLayer*, 7> layers() {
    return {&enc1_, &enc2_, &enc_mu_, &enc_logvar_, &dec1_, &dec2_, &dec_out_};
  }
  std::array<const DenseLayer*, 7> layers() const {
    return {&enc1_, &enc2_, &enc_mu_, &enc_logvar_, &dec1_, &dec2_, &dec_out_};
  }

  std::vector<double> condition(std::optional<Group> label, const char* who) const {
    require(label.has_value() == conditional(),
            std::string(who) + (conditional() ? ": conditional model requires a group label"
                                              : ": unconditional model does not accept a group label"));
    return label ? one_hot(*label) : std::vector<double>{};
  }

  static void elu_into(const std::vector<double>& pre, std::vector<double>& post) {
    post.resize(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) post[i] = elu(pre[i]);
  }

  void run_encoder(std::span<const double> x, std::optional<Group> label, Tape& t) const {
    require(x.size() == arch_.input_dim, "GenModel::encode: expected input of length " +
                                             std::to_string(arch_.input_dim));
    const auto c = condition(label, "GenModel::encode");
    t.enc_in.assign(x.begin(), x.end());
    t.enc_in.insert(t.enc_in.end(), c.begin(), c.end());
    t.enc_a1 = enc1_.forward(t.enc_in);
    elu_into(t.enc_a1, t.enc_h1);
    t.enc_s1 = t.enc_in;
    t.enc_s1.insert(t.enc_s1.end(), t.enc_h1.begin(), t.enc_h1.end());
    t.enc_a2 = enc2_.forward(t.enc_s1);
    elu_into(t.enc_a2, t.enc_h2);
    t.mu = enc_mu_.forward(t.enc_h2);
    t.logvar_raw = enc_logvar_.forward(t.enc_h2);
    t.logvar.resize(t.logvar_raw.size());
    for (std::size_t k = 0; k < t.logvar.size(); ++k)
      t.logvar[k] = std::clamp(t.logvar_raw[k], kLogVarMin, kLogVarMax);
  }

  void run_decoder(std::optional<Group> label, Tape& t) const {
    require(t.z.size() == arch_.latent_dim, "GenModel::decode: expected latent of length " +
                                                std::to_string(arch_.latent_dim));
    const auto c = condition(label, "GenModel::decode");
    t.dec_in = t.z;
    t.dec_in.insert(t.dec_in.end(), c.begin(), c.end());
    t.dec_b1 = dec1_.forward(t.dec_in);
    elu_into(t.dec_b1, t.dec_g1);
    t.dec_s2 = t.dec_in;
    t.dec_s2.insert(t.dec_s2.end(), t.dec_g1.begin(), t.dec_g1.end());
    t.dec_b2 = dec2_.forward(t.dec_s2);
    elu_into(t.dec_b2, t.dec_g2);
    t.x_hat = dec_out_.forward(t.dec_g2);
  }

  GenArchitecture arch_;
  std::optional<Group> trained_group_;
  DenseLayer enc1_, enc2_, enc_mu_, enc_logvar_, dec1_, dec2_, dec_out_;
};

enum class GenMode { kCombined, kConditional, kPerGroup };

inline std::string to_string(GenMode m) {
  switch (m) {
    case GenMode::kCombined: return "combined";
    case GenMode::kConditional: return "conditional";
    case GenMode::kPerGroup: return "per-group";
  }
  return "?";
}

inline std::optional<GenMode> parse_gen_mode(std::string_view s) {
  for (GenMode m : {GenMode::kCombined, GenMode::kConditional, GenMode::kPerGroup})
    if (s == to_string(m)) return m;
  return std::nullopt;
}

struct GenTrainConfig {
  int epochs = 20;
  std::size_t batch_size = 10;
  AdamConfig adam;
  GenMode mode = GenMode::kCombined;
  /// Required for per-group mode.
  std::optional<Group> group;
  GenArchitecture architecture;

  void validate() const {
    require(epochs >= 1, "GenTrainConfig: epochs must be >= 1");
    require(batch_size >= 1, "GenTrainConfig: batch_size must be >= 1");
    require(mode != GenMode::kPerGroup || group.has_value(), "GenTrainConfig: per-group mode needs a group");
  }
};

inline nlohmann::json to_json(const GenTrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.adam.learning_rate},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"adam_epsilon", c.adam.epsilon},
          {"mode", to_string(c.mode)},
          {"group", c.group ? nlohmann::json(to_string(*c.group)) : nlohmann::json(nullptr)}};
}

struct EpochLoss {
  int epoch = 0;
  double recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

struct GenTrainResult {
  GenModel model;
  std::vector<EpochLoss> curve;
};

/// Minibatch ADAM on the single-sample (M = 1) ELBO estimate, averaged over
/// each batch. Records are shuffled every epoch; the curve holds per-epoch
/// means of the training losses.
inline GenTrainResult train_gen(const Zoo& data, const GenTrainConfig& config, Rng& rng) {
  config.validate();
  std::vector<const AgentRecord*> items;
  for (const auto& r : data.records)
    if (config.mode != GenMode::kPerGroup || r.group == *config.group) items.push_back(&r);
  require(!items.empty(), "train_gen: no training records");

  GenArchitecture arch = config.architecture;
  arch.condition_dim = config.mode == GenMode::kConditional ? kNumGroups : 0;
  GenModel model = GenModel::random(arch, rng);
  if (config.mode == GenMode::kPerGroup) model.set_trained_group(config.group);

  std::vector<double> params = model.parameters();
  std::vector<double> grad(params.size());
  AdamState adam(params.size(), config.adam);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);

  GenTrainResult result;
  std::uint64_t batch_id = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.index(i))]);
    EpochLoss sums{epoch, 0.0, 0.0, 0.0};
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_id) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const AgentRecord& rec = *items[order[b]];
        const auto label = model.conditional() ? std::optional<Group>(rec.group) : std::nullopt;
        const auto eps = standard_normal(arch.latent_dim, rng);
        const auto tape = model.record(rec.weights, label, eps);
        const ElboParts loss = model.backward(tape, rec.weights, scale, grad);
        if (!std::isfinite(loss.total))
          throw NumericalFailure("train_gen: non-finite loss in batch " + std::to_string(batch_id) +
                                 " (epoch " + std::to_string(epoch) + ")");
        sums.recon += loss.recon;
        sums.kl += loss.kl;
        sums.total += loss.total;
      }
      try {
        adam_step(params, grad, adam);
      } catch (const PoisonedGradient& e) {
        throw NumericalFailure("train_gen: batch " + std::to_string(batch_id) + ": " + e.what());
      }
      model.set_parameters(params);
    }
    const double n = static_cast<double>(order.size());
    result.curve.push_back({epoch, sums.recon / n, sums.kl / n, sums.total / n});
  }
  if (!model.all_finite()) throw NumericalFailure("train_gen: non-finite parameters after training");
  result.model = std::move(model);
  return result;
}

inline void write_training_curve_csv(std::ostream& os, const std::vector<EpochLoss>& curve) {
  const auto old_precision = os.precision(10);
  os << "epoch,recon,kl,total\n";
  for (const auto& e : curve) os << e.epoch << ',' << e.recon << ',' << e.kl << ',' << e.total << '\n';
  os.precision(old_precision);
}

enum class SampleMode { kPrior, kPosterior };

inline std::string to_string(SampleMode m) { return m == SampleMode::kPrior ? "prior" : "posterior"; }

inline std::optional<SampleMode> parse_sample_mode(std::string_view s) {
  if (s == "prior") return SampleMode::kPrior;
  if (s == "posterior") return SampleMode::kPosterior;
  return std::nullopt;
}

/// Fresh weight vectors from the model.
///
/// Prior mode decodes z ~ N(0, I). Posterior mode picks a random source
/// record, encodes it, draws z from q(z | x) and decodes. Conditional models
/// need `label` in prior mode; in posterior mode the label restricts the
/// source records (each record is otherwise encoded with its own group).
/// A model trained on a single group only serves that group.
inline std::vector<WeightVector> sample_networks(const GenModel& model, std::size_t n, SampleMode mode,
                                                 const Zoo* source, std::optional<Group> label, Rng& rng) {
  if (model.trained_group() && label)
    require(*label == *model.trained_group(), "sample_networks: model was trained on " +
                                                  to_string(*model.trained_group()) + " only, asked for " +
                                                  to_string(*label));
  const std::size_t K = model.architecture().latent_dim;
  std::vector<WeightVector> out;
  if (n == 0) return out;
  out.reserve(n);
  if (mode == SampleMode::kPrior) {
    require(!model.conditional() || label.has_value(), "sample_networks: conditional prior sampling needs a label");
    const auto dec_label = model.conditional() ? label : std::nullopt;
    for (std::size_t i = 0; i < n; ++i) out.push_back(model.decode(standard_normal(K, rng), dec_label));
    return out;
  }
  require(source != nullptr, "sample_networks: posterior mode needs a source zoo");
  std::vector<const AgentRecord*> pool;
  for (const auto& r : source->records)
    if (!label || r.group == *label) pool.push_back(&r);
  require(!pool.empty(), "sample_networks: posterior source is empty");
  for (std::size_t i = 0; i < n; ++i) {
    const AgentRecord& rec = *pool[static_cast<std::size_t>(rng.index(pool.size()))];
    const auto rec_label = model.conditional() ? std::optional<Group>(rec.group) : std::nullopt;
    const Encoding e = model.encode(rec.weights, rec_label);
    out.push_back(model.decode(reparameterize(e.mu, e.logvar, rng), rec_label));
  }
  return out;
}

// --- Model file ------------------------------------------------------------
//
//   magic            8 bytes "AEMBGEN\0"
//   version          u32
//   architecture     7 x u32: input, enc_hidden1, enc_hidden2, latent,
//                    dec_hidden1, dec_hidden2, condition_dim
//   trained_group    u8 (0 = none, 1..4 = G1..G4)
//   metadata_length  u32, followed by UTF-8 JSON
//   parameter_count  u64
//   parameters       parameter_count x f32
//
// All little-endian; parameters in GenModel::parameters() order.

inline constexpr std::string_view kGenMagic{"AEMBGEN\0", 8};
inline constexpr std::uint32_t kGenVersion = 1;

inline std::vector<std::uint8_t> encode_model(const GenModel& model, const nlohmann::json& metadata = {}) {
  ByteWriter w;
  w.put_bytes(kGenMagic);
  w.put_u32(kGenVersion);
  const auto& a = model.architecture();
  for (std::size_t v : {a.input_dim, a.enc_hidden1, a.enc_hidden2, a.latent_dim, a.dec_hidden1, a.dec_hidden2,
                        a.condition_dim})
    w.put_u32(static_cast<std::uint32_t>(v));
  w.put_u8(model.trained_group() ? static_cast<std::uint8_t>(*model.trained_group()) : 0);
  const std::string meta = metadata.is_null() ? "{}" : metadata.dump();
  w.put_u32(static_cast<std::uint32_t>(meta.size()));
  w.put_bytes(meta);
  const auto params = model.parameters();
  w.put_u64(params.size());
  for (double p : params) w.put_f32(static_cast<float>(p));
  return w.bytes();
}

struct LoadedModel {
  GenModel model;
  nlohmann::json metadata;
};

inline LoadedModel decode_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.get_bytes(kGenMagic.size(), "magic");
  if (!std::equal(magic.begin(), magic.end(), kGenMagic.begin())) throw ParseError("bad model magic", 0);
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.get_u32("version");
  if (version != kGenVersion) throw ParseError("unsupported model version " + std::to_string(version), version_at);
  const std::size_t arch_at = r.offset();
  GenArchitecture a;
  for (std::size_t* f : {&a.input_dim, &a.enc_hidden1, &a.enc_hidden2, &a.latent_dim, &a.dec_hidden1,
                         &a.dec_hidden2, &a.condition_dim})
    *f = r.get_u32("architecture");
  if (a.input_dim != kWeightCount || a.latent_dim == 0 || a.enc_hidden1 == 0 || a.enc_hidden2 == 0 ||
      a.dec_hidden1 == 0 || a.dec_hidden2 == 0 || (a.condition_dim != 0 && a.condition_dim != kNumGroups) ||
      a.enc_hidden1 > 65536 || a.enc_hidden2 > 65536 || a.dec_hidden1 > 65536 || a.dec_hidden2 > 65536 ||
      a.latent_dim > 65536)
    throw ParseError("unsupported architecture descriptor", arch_at);
  const std::size_t group_at = r.offset();
  const std::uint8_t g = r.get_u8("trained group");
  if (g > 4) throw ParseError("invalid trained group", group_at);
  const std::uint32_t meta_len = r.get_u32("metadata length");
  const std::size_t meta_at = r.offset();
  auto meta = r.get_bytes(meta_len, "metadata");
  LoadedModel out{GenModel(a), {}};
  try {
    out.metadata = nlohmann::json::parse(meta.begin(), meta.end());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid metadata JSON: ") + e.what(), meta_at);
  }
  const std::size_t count_at = r.offset();
  const std::uint64_t count = r.get_u64("parameter count");
  if (count != out.model.parameter_count())
    throw ParseError("parameter count " + std::to_string(count) + " does not match architecture (" +
                         std::to_string(out.model.parameter_count()) + ")",
                     count_at);
  std::vector<double> params(count);
  for (double& p : params) {
    const std::size_t at = r.offset();
    p = r.get_f32("parameters");
    if (!std::isfinite(p)) throw ParseError("non-finite parameter", at);
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after parameter block", r.offset());
  out.model.set_parameters(params);
  if (g != 0) out.model.set_trained_group(static_cast<Group>(g));
  return out;
}

inline void save_model(const GenModel& model, const std::filesystem::path& path,
                       const nlohmann::json& metadata = {}) {
  write_file_atomic(path, encode_model(model, metadata));
}

inline LoadedModel load_model(const std::filesystem::path& path) { return decode_model(read_file_bytes(path)); }

/// The model as it reads back from disk (parameters rounded to f32).
inline GenModel round_trip_f32(const GenModel& model) { return decode_model(encode_model(model)).model; }

}  // namespace agentemb
