#pragma once

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mmia/core/json_enum.hpp"
#include "mmia/dataset/corpus.hpp"
#include "mmia/dataset/split.hpp"
#include "mmia/dataset/synthetic.hpp"
#include "mmia/incorporation/vectors.hpp"
#include "mmia/inversion/train.hpp"
#include "mmia/membership/attack.hpp"
#include "mmia/target/store.hpp"

namespace mmia {

MMIA_JSON_ENUM(Regime, {{Regime::feature_extraction, "feature_extraction"}, {Regime::classification, "classification"}})
MMIA_JSON_ENUM(Mode, {{Mode::rand, "rand"}, {Mode::concat, "concat"}, {Mode::sr, "sr"}, {Mode::srwal, "srwal"}})
MMIA_JSON_ENUM(ModelsForTest, {{ModelsForTest::final_only, "final"}, {ModelsForTest::all, "all"}})

namespace nn {

inline void to_json(nlohmann::json& j, const AdamConfig& a) {
  j = {{"learning_rate", a.learning_rate}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.epsilon}};
}
inline void from_json(const nlohmann::json& j, AdamConfig& a) {
  a.learning_rate = j.at("learning_rate").get<double>();
  a.beta1 = j.at("beta1").get<double>();
  a.beta2 = j.at("beta2").get<double>();
  a.epsilon = j.value("eps", 1e-8);
}

inline void to_json(nlohmann::json& j, const AngularMarginConfig& a) {
  j = {{"margin", a.margin}, {"lambda_base", a.lambda_base}, {"lambda_gamma", a.lambda_gamma},
       {"lambda_power", a.lambda_power}, {"lambda_min", a.lambda_min}};
}
inline void from_json(const nlohmann::json& j, AngularMarginConfig& a) {
  a.margin = j.at("margin").get<int>();
  a.lambda_base = j.at("lambda_base").get<double>();
  a.lambda_gamma = j.at("lambda_gamma").get<double>();
  a.lambda_power = j.at("lambda_power").get<double>();
  a.lambda_min = j.at("lambda_min").get<double>();
}

}  // namespace nn

// Module seeds are not serialized: the experiment seed drives all of them.
inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"dropout_rate", c.dropout_rate},
       {"optimizer", c.optimizer}, {"angular", c.angular}, {"update_epochs", c.update_epochs}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.optimizer = j.at("optimizer").get<nn::AdamConfig>();
  c.angular = j.at("angular").get<nn::AngularMarginConfig>();
  c.update_epochs = j.at("update_epochs").get<int>();
}

namespace inv {

inline void to_json(nlohmann::json& j, const PerceptualConfig& c) {
  j = {{"source", c.source}, {"channels", c.channels}, {"epochs", c.epochs}, {"learning_rate", c.learning_rate}};
}
inline void from_json(const nlohmann::json& j, PerceptualConfig& c) {
  c.source = j.at("source").get<PerceptualSource>();
  c.channels = j.at("channels").get<std::vector<int>>();
  c.epochs = j.at("epochs").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
}

inline void to_json(nlohmann::json& j, const InversionConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"generator_optimizer", c.generator_optimizer},
       {"discriminator_optimizer", c.discriminator_optimizer},
       {"hidden", c.hidden},
       {"z", c.z},
       {"decoder_channels", c.decoder_channels},
       {"discriminator_channels", c.discriminator_channels},
       {"perceptual", c.perceptual}};
}
inline void from_json(const nlohmann::json& j, InversionConfig& c) {
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.generator_optimizer = j.at("generator_optimizer").get<nn::AdamConfig>();
  c.discriminator_optimizer = j.at("discriminator_optimizer").get<nn::AdamConfig>();
  c.hidden = j.at("hidden").get<int>();
  c.z = j.at("z").get<int>();
  c.decoder_channels = j.at("decoder_channels").get<std::vector<int>>();
  c.discriminator_channels = j.at("discriminator_channels").get<std::vector<int>>();
  c.perceptual = j.at("perceptual").get<PerceptualConfig>();
}

}  // namespace inv

namespace mi {

inline void to_json(nlohmann::json& j, const MIConfig& c) {
  j = {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"optimizer", c.optimizer},
       {"validation_fraction", c.validation_fraction}};
}
inline void from_json(const nlohmann::json& j, MIConfig& c) {
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.optimizer = j.at("optimizer").get<nn::AdamConfig>();
  c.validation_fraction = j.at("validation_fraction").get<double>();
}

}  // namespace mi

enum class AttackKind { invert, membership };
MMIA_JSON_ENUM(AttackKind, {{AttackKind::invert, "invert"}, {AttackKind::membership, "membership"}})

/// Where the images come from: a generated toy corpus or a manifest on disk.
struct DatasetConfig {
  std::string source = "synthetic";  // "synthetic" | "manifest"
  SyntheticSpec synthetic{100, 30, {32, 32, 1}, 7, 0.04};
  std::string manifest;
  DatasetDescriptor descriptor;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

inline void to_json(nlohmann::json& j, const DatasetConfig& d) {
  j = {{"source", d.source}, {"synthetic", d.synthetic}, {"manifest", d.manifest}, {"descriptor", d.descriptor}};
}
inline void from_json(const nlohmann::json& j, DatasetConfig& d) {
  d.source = j.at("source").get<std::string>();
  d.synthetic = j.at("synthetic").get<SyntheticSpec>();
  d.manifest = j.value("manifest", std::string{});
  d.descriptor = j.at("descriptor").get<DatasetDescriptor>();
}

struct SplitConfig {
  int probe_classes = 30;         // feature extraction: classes held out of training
  int probe_size = 900;           // feature extraction: images kept from those classes
  double holdout_fraction = 0.3;  // classification: per-class share held out
  std::size_t ell = 200;          // attack training set size

  friend bool operator==(const SplitConfig&, const SplitConfig&) = default;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SplitConfig, probe_classes, probe_size, holdout_fraction, ell)

/// One file fully determines a run.
struct ExperimentConfig {
  std::string name = "experiment";
  DatasetConfig dataset;
  Regime regime = Regime::feature_extraction;
  SplitConfig split;
  BackboneSpec backbone{{32, 32, 1}, {8, 16, 32, 32}, 128, 16, true};
  TrainConfig target{15, 32, 0.5, {1e-3, 0.9, 0.999, 1e-8}, {}, 10, 1};
  std::vector<double> schedule{0.0, 0.25, 0.5, 0.75, 1.0};
  Scenario scenario = Scenario::upslope;
  int removed_classes = 5;           // downslope
  std::vector<std::size_t> stages;   // snapshot indices the attacker sees; empty = all
  std::size_t alpha = 0;             // 0 = derived; otherwise must match the stages
  AttackKind attack = AttackKind::invert;
  Mode mode = Mode::rand;
  ModelsForTest models_for_test = ModelsForTest::final_only;
  inv::InversionConfig inversion;
  mi::MIConfig membership;
  double far = 0.01;
  std::size_t max_impostor_pairs = 100000;
  std::vector<std::vector<std::size_t>> ablation{{1, 2}, {0, 1, 2, 3, 4}};
  std::uint64_t seed = 1;

  ModelKind kind() const {
    return regime == Regime::feature_extraction ? ModelKind::feature_extractor : ModelKind::classifier;
  }

  std::size_t scenario_alpha() const { return scenario == Scenario::update ? 3 : schedule.size(); }

  std::vector<std::size_t> stage_indices() const {
    if (!stages.empty()) return stages;
    std::vector<std::size_t> all(scenario_alpha());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }

  std::size_t attack_alpha() const {
    auto s = stage_indices();
    std::sort(s.begin(), s.end());
    return static_cast<std::size_t>(std::unique(s.begin(), s.end()) - s.begin());
  }

  /// Module configs with the experiment seed applied.
  TrainConfig seeded_target() const {
    TrainConfig t = target;
    t.seed = derive_seed(seed, "experiment/target");
    return t;
  }
  inv::InversionConfig seeded_inversion() const {
    auto c = inversion;
    c.seed = derive_seed(seed, "experiment/inversion");
    return c;
  }
  mi::MIConfig seeded_membership() const {
    auto c = membership;
    c.seed = derive_seed(seed, "experiment/membership");
    return c;
  }

  /// Throws PreconditionError naming the first inconsistent field.
  void validate() const {
    require(dataset.source == "synthetic" || dataset.source == "manifest",
            "dataset.source must be 'synthetic' or 'manifest'");
    require(dataset.source != "manifest" || !dataset.manifest.empty(), "dataset.manifest is required for manifest sources");
    const ImageShape img = dataset.source == "synthetic" ? dataset.synthetic.shape : dataset.descriptor.shape();
    require(img == backbone.input, "backbone.input " + to_string(backbone.input) + " does not match the dataset images " +
                                       to_string(img));
    require(!schedule.empty(), "schedule must not be empty");
    for (auto i : stage_indices()) {
      require(i < scenario_alpha(), "stage index " + std::to_string(i) + " exceeds the scenario's " +
                                        std::to_string(scenario_alpha()) + " snapshots");
    }
    require(alpha == 0 || alpha == attack_alpha(), "alpha " + std::to_string(alpha) + " does not match the " +
                                                       std::to_string(attack_alpha()) + " selected snapshots");
    require(mode != Mode::rand || models_for_test == ModelsForTest::final_only,
            "mode rand only supports models_for_test=final");
    require(split.ell >= 1, "split.ell must be positive");
    require(far > 0 && far < 1, "far must lie in (0,1)");
    for (const auto& sub : ablation) require(!sub.empty(), "ablation subsets must not be empty");
  }

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"name", c.name},
       {"dataset", c.dataset},
       {"regime", c.regime},
       {"split", c.split},
       {"backbone", c.backbone},
       {"target", c.target},
       {"schedule", c.schedule},
       {"scenario", c.scenario},
       {"removed_classes", c.removed_classes},
       {"stages", c.stages},
       {"alpha", c.alpha},
       {"attack", c.attack},
       {"mode", c.mode},
       {"models_for_test", c.models_for_test},
       {"inversion", c.inversion},
       {"membership", c.membership},
       {"far", c.far},
       {"max_impostor_pairs", c.max_impostor_pairs},
       {"ablation", c.ablation},
       {"seed", c.seed}};
}

/// Missing keys keep their defaults so small config files stay readable.
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  auto take = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  take("name", c.name);
  take("dataset", c.dataset);
  take("regime", c.regime);
  take("split", c.split);
  take("backbone", c.backbone);
  take("target", c.target);
  take("schedule", c.schedule);
  take("scenario", c.scenario);
  take("removed_classes", c.removed_classes);
  take("stages", c.stages);
  take("alpha", c.alpha);
  take("attack", c.attack);
  take("mode", c.mode);
  take("models_for_test", c.models_for_test);
  take("inversion", c.inversion);
  take("membership", c.membership);
  take("far", c.far);
  take("max_impostor_pairs", c.max_impostor_pairs);
  take("ablation", c.ablation);
  take("seed", c.seed);
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return nlohmann::json(a) == nlohmann::json(b);
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require(EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) == 1, "SHA-256 failed");
  std::string out;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    out += buf;
  }
  return out;
}

/// Content hash of the canonical JSON form (keys sorted), shortened to 16 hex digits.
inline std::string config_hash(const ExperimentConfig& c) { return sha256_hex(nlohmann::json(c).dump()).substr(0, 16); }

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("config not found: " + path.string());
  try {
    auto c = nlohmann::json::parse(in).get<ExperimentConfig>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw IngestError("malformed config " + path.string() + ": " + e.what());
  }
}

inline void save_config(const ExperimentConfig& c, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  out << nlohmann::json(c).dump(2) << "\n";
}

}  // namespace mmia
