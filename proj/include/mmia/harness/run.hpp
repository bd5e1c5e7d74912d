#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mmia/dataset/blur.hpp"
#include "mmia/evaluation/attacks.hpp"
#include "mmia/harness/config.hpp"

namespace mmia::harness {

namespace fs = std::filesystem;

/// Pipeline stages in execution order.
enum class PipelineStage { ingest, target, incorporation, attack, evaluation };

inline std::string to_string(PipelineStage s) {
  switch (s) {
    case PipelineStage::ingest: return "ingest";
    case PipelineStage::target: return "target";
    case PipelineStage::incorporation: return "incorporation";
    case PipelineStage::attack: return "attack";
    case PipelineStage::evaluation: return "evaluation";
  }
  return "?";
}

struct RunOptions {
  PipelineStage until = PipelineStage::evaluation;
  bool force = false;                    // recompute even if artifacts exist
  std::optional<fs::path> target_cache;  // shared directory of trained snapshot sets
  std::function<void(const std::string&)> log = [](const std::string&) {};
};

struct RunResult {
  fs::path dir;
  std::string hash;
  std::vector<eval::EvalReport> reports;
  std::vector<std::string> notes;
};

/// Images and their partition into target training data and attacker data.
struct PipelineData {
  Corpus corpus;
  DatasetSplit split;
  ProbePartition partition;
  std::vector<ImageSample> update_images;  // crafted new class (update scenario)
  std::vector<std::string> notes;
};

inline std::vector<std::string> ids_of(const std::vector<ImageSample>& v) {
  std::vector<std::string> out;
  for (const auto& s : v) out.push_back(s.sample_id);
  return out;
}

inline PipelineData prepare_data(const ExperimentConfig& cfg) {
  PipelineData d;
  if (cfg.dataset.source == "synthetic") {
    d.corpus = synthesize_corpus(cfg.dataset.synthetic);
  } else {
    auto loaded = load_corpus(cfg.dataset.manifest, cfg.dataset.descriptor);
    d.corpus = std::move(loaded.corpus);
    d.notes = std::move(loaded.warnings);
  }
  require(!d.corpus.empty(), "the corpus is empty");
  Corpus pool = d.corpus;
  if (cfg.scenario == Scenario::update) {
    // the highest-labelled class becomes the newly enrolled, crafted user
    const auto labels = class_set(pool);
    const int donor = *labels.rbegin();
    for (const auto& s : pool) {
      if (s.class_label != donor) continue;
      ImageSample crafted = craft_blurred(s);
      crafted.class_label = donor + 1;
      d.update_images.push_back(std::move(crafted));
    }
    std::erase_if(pool, [&](const ImageSample& s) { return s.class_label == donor; });
    d.notes.push_back("class " + std::to_string(donor) + " reserved as the crafted update class " + std::to_string(donor + 1));
  }
  const auto split_seed = derive_seed(cfg.seed, "experiment/split");
  d.split = cfg.regime == Regime::feature_extraction
                ? split_feature_extraction(pool, cfg.split.probe_classes, cfg.split.probe_size, split_seed)
                : split_classification(pool, cfg.split.holdout_fraction, split_seed);
  for (const auto& n : d.split.notes) d.notes.push_back(n);
  d.partition = partition_probe(d.split.probe, cfg.split.ell, derive_seed(cfg.seed, "experiment/partition"));
  return d;
}

/// Everything that determines the trained snapshots.
inline std::string target_hash(const ExperimentConfig& cfg) {
  nlohmann::json j = {{"dataset", cfg.dataset}, {"regime", cfg.regime},   {"split", cfg.split},
                      {"backbone", cfg.backbone}, {"target", cfg.target}, {"schedule", cfg.schedule},
                      {"scenario", cfg.scenario}, {"seed", cfg.seed}};
  j["split"].erase("ell");
  if (cfg.scenario == Scenario::downslope) j["removed_classes"] = cfg.removed_classes;
  return sha256_hex(j.dump()).substr(0, 16);
}

inline SnapshotSet train_target(const ExperimentConfig& cfg, const PipelineData& d) {
  const TrainConfig tc = cfg.seeded_target();
  switch (cfg.scenario) {
    case Scenario::upslope:
      return train_with_snapshots(d.split, cfg.kind(), cfg.backbone, tc, cfg.schedule);
    case Scenario::update: {
      const auto base = train_with_snapshots(d.split, cfg.kind(), cfg.backbone, tc, {0.0, 1.0});
      return run_update_scenario(base, d.split, d.update_images, tc);
    }
    case Scenario::downslope:
      return run_downslope_scenario(d.split, cfg.kind(), cfg.backbone, cfg.removed_classes, tc, cfg.schedule);
  }
  throw PreconditionError("unknown scenario");
}

inline SnapshotSet obtain_target(const ExperimentConfig& cfg, const PipelineData& d, const fs::path& run_dir,
                                 const RunOptions& opt) {
  const fs::path dir = opt.target_cache ? *opt.target_cache / target_hash(cfg) : run_dir / "target";
  if (opt.target_cache) {
    fs::create_directories(run_dir / "target");
    std::ofstream(run_dir / "target" / "source.json") << nlohmann::json({{"snapshots", dir.string()}}).dump(2) << "\n";
  }
  if (!opt.force && fs::exists(dir / "metadata.json")) {
    opt.log("reusing target snapshots in " + dir.string());
    return load_snapshot_set(dir);
  }
  opt.log("training target (" + to_string(cfg.scenario) + ", " + to_string(cfg.kind()) + ")");
  auto set = train_target(cfg, d);
  save_snapshot_set(set, dir);
  return set;
}

/// Tuples the attack is tested on: the final model only, or every attacker snapshot.
inline VectorBank test_tuples(const SnapshotSet& full, const SnapshotSet& attacker_set, ModelsForTest models,
                              const std::vector<ImageSample>& images) {
  return models == ModelsForTest::final_only ? build_vector_bank(full.subset({full.alpha() - 1}), images)
                                             : build_vector_bank(attacker_set, images);
}

namespace detail {

inline bool complete(const fs::path& marker, const RunOptions& opt) { return !opt.force && fs::exists(marker); }

inline eval::EvalReport primary(const std::vector<eval::EvalReport>& reports) {
  require(!reports.empty(), "no reports produced");
  return reports.front();
}

}  // namespace detail

/// Trains one attack on the given snapshots and evaluates it against the
/// full set's final model. Artifacts go to `dir`.
inline std::vector<eval::EvalReport> attack_and_evaluate(const ExperimentConfig& cfg, const PipelineData& d,
                                                         const SnapshotSet& full, const SnapshotSet& attacker_set,
                                                         const eval::ReportContext& ctx, const fs::path& dir,
                                                         const RunOptions& opt) {
  const fs::path inc = dir / "incorporation", atk = dir / "attack", ev = dir / "evaluation";
  std::vector<eval::EvalReport> reports;
  std::string stage = "incorporation";
  try {
    if (cfg.attack == AttackKind::invert) {
      const auto train_bank = build_vector_bank(attacker_set, d.partition.attack_train);
      const auto eval_bank = test_tuples(full, attacker_set, cfg.models_for_test, d.partition.attack_eval);
      fs::create_directories(inc);
      write_vector_bank(train_bank, inc / "bank_train.csv");
      write_vector_bank(eval_bank, inc / "bank_eval.csv");
      if (opt.until == PipelineStage::incorporation) return {};

      stage = "attack";
      inv::InversionModel model;
      if (detail::complete(atk / "inversion.json", opt)) {
        opt.log("reusing inversion attack in " + atk.string());
        model = inv::load_inversion(atk);
      } else {
        const auto icfg = cfg.seeded_inversion();
        std::optional<inv::PerceptualNet<float>> pnet;
        if (icfg.perceptual.source == inv::PerceptualSource::feature_net) {
          opt.log("training perceptual feature network");
          pnet = inv::train_perceptual_net(d.split.target_train, icfg.perceptual, derive_seed(icfg.seed, "perceptual"));
        }
        opt.log("training inversion attack (" + to_string(cfg.mode) + ", alpha=" + std::to_string(attacker_set.alpha()) + ")");
        model = inv::train_inversion(train_bank, d.partition.attack_train, cfg.mode, icfg, pnet ? &*pnet : nullptr);
        inv::save_inversion(model, atk);
      }
      if (opt.until == PipelineStage::attack) return {};

      stage = "evaluation";
      const auto& fin = full.final_model();
      if (fin.kind() == ModelKind::feature_extractor) {
        const auto th = eval::calibrate_threshold(fin, d.split.target_train, cfg.far, cfg.max_impostor_pairs,
                                                  derive_seed(cfg.seed, "experiment/impostors"));
        fs::create_directories(ev);
        std::ofstream(ev / "threshold.json") << nlohmann::json({{"t", th.t},
                                                                {"far_target", th.far_target},
                                                                {"calibration_size", th.calibration_size},
                                                                {"accepted", th.accepted}})
                                                    .dump(2)
                                             << "\n";
        reports.push_back(eval::make_report("type1", eval::type1_accuracy(model, fin, eval_bank, th, cfg.models_for_test), ctx));
        reports.push_back(eval::make_report("rank1", eval::rank1_accuracy(model, fin, eval_bank, cfg.models_for_test), ctx));
      } else {
        reports.push_back(eval::make_report(
            "classifier_inversion", eval::classifier_inversion_accuracy(model, fin, eval_bank, cfg.models_for_test), ctx));
      }
    } else {
      // non-members come from the attacker's probe partition, members from target_train
      std::vector<ImageSample> members = d.split.target_train;
      Rng rng = make_rng(cfg.seed, "experiment/members");
      shuffle(members.begin(), members.end(), rng);
      const std::size_t n_train = std::min(d.partition.attack_train.size(), members.size() / 2);
      const std::size_t n_eval = std::min(d.partition.attack_eval.size(), members.size() - n_train);
      const std::vector<ImageSample> mem_train(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
      const std::vector<ImageSample> mem_eval(members.begin() + static_cast<std::ptrdiff_t>(n_train),
                                              members.begin() + static_cast<std::ptrdiff_t>(n_train + n_eval));
      const auto mseed = cfg.seeded_membership().seed;
      const auto train_ds = mi::build_mi_dataset(attacker_set, d.split.target_train, mem_train, d.partition.attack_train,
                                                 cfg.mode, derive_seed(mseed, "train"));
      const SnapshotSet& eval_set = cfg.models_for_test == ModelsForTest::final_only ? full.subset({full.alpha() - 1}) : attacker_set;
      const auto eval_ds = mi::build_mi_dataset(eval_set, d.split.target_train, mem_eval, d.partition.attack_eval,
                                                cfg.mode, derive_seed(mseed, "eval"));
      fs::create_directories(inc);
      mi::write_mi_dataset(train_ds, inc / "mi_train.csv");
      mi::write_mi_dataset(eval_ds, inc / "mi_eval.csv");
      if (opt.until == PipelineStage::incorporation) return {};

      stage = "attack";
      mi::MIAttacker attacker;
      if (detail::complete(atk / "attacker.json", opt)) {
        opt.log("reusing membership attack in " + atk.string());
        attacker = mi::load_mi_attacker(atk);
      } else {
        opt.log("training membership attack (" + to_string(cfg.mode) + ", alpha=" + std::to_string(attacker_set.alpha()) + ")");
        auto trained = mi::train_mi(train_ds, cfg.seeded_membership());
        attacker = std::move(trained.attacker);
        mi::save_mi_attacker(attacker, atk);
        nlohmann::json summary = {{"validation_accuracy", trained.validation_accuracy}, {"loss_curve", trained.loss_curve}};
        if (trained.index_accuracy) summary["index_accuracy"] = *trained.index_accuracy;
        std::ofstream(atk / "training.json") << summary.dump(2) << "\n";
      }
      if (opt.until == PipelineStage::attack) return {};

      stage = "evaluation";
      reports.push_back(eval::make_report("mi_accuracy", eval::mi_accuracy(attacker, eval_ds, cfg.models_for_test), ctx));
    }
    fs::create_directories(ev);
    eval::write_reports_csv(reports, ev / "report.csv");
    eval::write_reports_json(reports, ev / "report.json");
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
  return reports;
}

inline void write_status(const fs::path& dir, const nlohmann::json& status) {
  fs::create_directories(dir);
  std::ofstream(dir / "status.json") << status.dump(2) << "\n";
}

inline eval::ReportContext context_for(const ExperimentConfig& cfg, const std::string& hash) {
  auto idx = cfg.stage_indices();
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return {to_string(cfg.scenario), to_string(cfg.mode), to_string(cfg.models_for_test), idx.size(),
          eval::subset_label(idx), cfg.seed, hash};
}

/// dataset -> target -> incorporation -> attack -> evaluation under
/// <root>/<config-hash>/. Finished runs are reused unless opt.force.
inline RunResult run_experiment(const ExperimentConfig& cfg, const fs::path& root, const RunOptions& opt = {}) {
  cfg.validate();
  RunResult out;
  out.hash = config_hash(cfg);
  out.dir = root / out.hash;
  fs::create_directories(out.dir);
  save_config(cfg, out.dir / "config.json");
  const fs::path report = out.dir / "evaluation" / "report.csv";
  if (opt.until == PipelineStage::evaluation && !opt.force && fs::exists(report) && fs::exists(out.dir / "status.json")) {
    opt.log("run " + out.hash + " already complete");
    out.reports = eval::read_reports_csv(report);
    return out;
  }

  std::string stage = "ingest";
  auto fail = [&](const std::string& what) {
    write_status(out.dir, {{"completed", false}, {"failed_stage", stage}, {"error", what}});
    throw StageError(stage, what);
  };
  try {
    const PipelineData d = prepare_data(cfg);
    out.notes = d.notes;
    fs::create_directories(out.dir / "dataset");
    std::ofstream(out.dir / "dataset" / "split.json")
        << nlohmann::json({{"regime", d.split.regime},
                           {"target_train", ids_of(d.split.target_train)},
                           {"probe", ids_of(d.split.probe)},
                           {"attack_train", ids_of(d.partition.attack_train)},
                           {"attack_eval", ids_of(d.partition.attack_eval)},
                           {"update_class", ids_of(d.update_images)},
                           {"notes", d.notes}})
               .dump(2)
        << "\n";
    if (opt.until == PipelineStage::ingest) {
      write_status(out.dir, {{"completed", true}, {"until", "ingest"}});
      return out;
    }

    stage = "target";
    const SnapshotSet full = obtain_target(cfg, d, out.dir, opt);
    if (opt.until == PipelineStage::target) {
      write_status(out.dir, {{"completed", true}, {"until", "target"}});
      return out;
    }

    out.reports = attack_and_evaluate(cfg, d, full, full.subset(cfg.stage_indices()), context_for(cfg, out.hash),
                                      out.dir, opt);
  } catch (const StageError& e) {
    stage = e.stage();
    const std::string what = e.what();
    write_status(out.dir, {{"completed", false}, {"failed_stage", stage}, {"error", what}});
    throw;
  } catch (const std::exception& e) {
    fail(e.what());
  }
  write_status(out.dir, {{"completed", true}, {"until", to_string(opt.until)}, {"config_hash", out.hash}});
  return out;
}

/// Retrains the attack once per snapshot subset of cfg.ablation; each subset
/// gets its own content-addressed run. Returns the primary metric per subset.
inline std::vector<eval::EvalReport> run_ablation(const ExperimentConfig& cfg, const fs::path& root,
                                                  const RunOptions& opt = {}) {
  cfg.validate();
  require(!cfg.ablation.empty(), "the config lists no ablation subsets");
  std::vector<eval::EvalReport> out;
  for (const auto& subset : cfg.ablation) {
    require(!subset.empty(), "ablation snapshot subsets must not be empty");
    ExperimentConfig sub = cfg;
    sub.stages = subset;
    sub.alpha = 0;
    auto res = run_experiment(sub, root, opt);
    out.push_back(detail::primary(res.reports));
  }
  const fs::path dir = root / ("ablation-" + config_hash(cfg));
  fs::create_directories(dir);
  save_config(cfg, dir / "config.json");
  eval::write_reports_csv(out, dir / "report.csv");
  return out;
}

}  // namespace mmia::harness
