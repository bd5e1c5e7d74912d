#include <CLI11.hpp>

#include <iostream>
#include <sstream>

#include "mmia/harness/compare.hpp"
#include "mmia/harness/run.hpp"

using namespace mmia;
using namespace mmia::harness;
namespace fs = std::filesystem;

namespace {

/// Flag values; unset optionals leave the loaded config alone.
struct Overrides {
  std::string config_path;
  std::optional<std::string> name, source, manifest, regime, scenario, mode, models_for_test, attack, perceptual;
  std::optional<int> height, width, channels;
  std::optional<int> synthetic_classes, synthetic_per_class;
  std::optional<std::uint64_t> synthetic_seed;
  std::optional<int> probe_classes, probe_size;
  std::optional<double> holdout_fraction;
  std::optional<std::size_t> ell, alpha, embedding, max_impostor_pairs;
  std::optional<std::vector<std::size_t>> stages;
  std::optional<std::string> ablation;
  std::optional<int> target_epochs, update_epochs, removed_classes, gan_epochs, gan_batch, mi_epochs;
  std::optional<double> gan_lr, disc_lr, far;
  std::optional<std::vector<double>> schedule;
  std::optional<std::uint64_t> seed;
};

template <class T>
T parse_enum(const std::string& s) {
  return nlohmann::json(s).get<T>();
}

std::vector<std::vector<std::size_t>> parse_ablation(const std::string& text) {
  // "1,2;0,1,2,3,4"
  std::vector<std::vector<std::size_t>> out;
  std::stringstream groups(text);
  std::string group;
  while (std::getline(groups, group, ';')) {
    std::vector<std::size_t> idx;
    std::stringstream items(group);
    std::string item;
    while (std::getline(items, item, ',')) {
      try {
        std::size_t pos = 0;
        const auto v = std::stoul(item, &pos);
        if (pos != item.size()) throw std::invalid_argument(item);
        idx.push_back(v);
      } catch (const std::logic_error&) {
        throw PreconditionError("bad snapshot index '" + item + "' in --ablation");
      }
    }
    out.push_back(std::move(idx));
  }
  return out;
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (o.name) c.name = *o.name;
  if (o.source) c.dataset.source = *o.source;
  if (o.manifest) c.dataset.manifest = *o.manifest, c.dataset.source = "manifest";
  if (o.height) c.dataset.descriptor.height = *o.height, c.dataset.synthetic.shape.height = *o.height, c.backbone.input.height = *o.height;
  if (o.width) c.dataset.descriptor.width = *o.width, c.dataset.synthetic.shape.width = *o.width, c.backbone.input.width = *o.width;
  if (o.channels) c.dataset.descriptor.channels = *o.channels, c.dataset.synthetic.shape.channels = *o.channels, c.backbone.input.channels = *o.channels;
  if (o.synthetic_classes) c.dataset.synthetic.classes = *o.synthetic_classes;
  if (o.synthetic_per_class) c.dataset.synthetic.per_class = *o.synthetic_per_class;
  if (o.synthetic_seed) c.dataset.synthetic.seed = *o.synthetic_seed;
  if (o.regime) c.regime = parse_enum<Regime>(*o.regime);
  if (o.scenario) c.scenario = parse_enum<Scenario>(*o.scenario);
  if (o.mode) c.mode = parse_enum<Mode>(*o.mode);
  if (o.models_for_test) c.models_for_test = parse_enum<ModelsForTest>(*o.models_for_test);
  if (o.attack) c.attack = parse_enum<AttackKind>(*o.attack);
  if (o.perceptual) c.inversion.perceptual.source = parse_enum<inv::PerceptualSource>(*o.perceptual);
  if (o.probe_classes) c.split.probe_classes = *o.probe_classes;
  if (o.probe_size) c.split.probe_size = *o.probe_size;
  if (o.holdout_fraction) c.split.holdout_fraction = *o.holdout_fraction;
  if (o.ell) c.split.ell = *o.ell;
  if (o.alpha) c.alpha = *o.alpha;
  if (o.stages) c.stages = *o.stages;
  if (o.ablation) c.ablation = parse_ablation(*o.ablation);
  if (o.embedding) c.backbone.embedding = *o.embedding;
  if (o.max_impostor_pairs) c.max_impostor_pairs = *o.max_impostor_pairs;
  if (o.target_epochs) c.target.epochs = *o.target_epochs;
  if (o.update_epochs) c.target.update_epochs = *o.update_epochs;
  if (o.removed_classes) c.removed_classes = *o.removed_classes;
  if (o.schedule) c.schedule = *o.schedule;
  if (o.gan_epochs) c.inversion.epochs = *o.gan_epochs;
  if (o.gan_batch) c.inversion.batch_size = *o.gan_batch;
  if (o.gan_lr) c.inversion.generator_optimizer.learning_rate = *o.gan_lr;
  if (o.disc_lr) c.inversion.discriminator_optimizer.learning_rate = *o.disc_lr;
  if (o.mi_epochs) c.membership.epochs = *o.mi_epochs;
  if (o.far) c.far = *o.far;
  if (o.seed) c.seed = *o.seed;
  c.validate();
  return c;
}

void add_config_flags(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config_path, "JSON experiment config; flags below override it")->check(CLI::ExistingFile);
  app->add_option("--name", o.name, "experiment name");
  app->add_option("--source", o.source, "dataset source: synthetic | manifest");
  app->add_option("--manifest", o.manifest, "CSV manifest (path,label) of an image corpus; implies --source manifest");
  app->add_option("--height", o.height, "image height");
  app->add_option("--width", o.width, "image width");
  app->add_option("--channels", o.channels, "image channels (1 or 3)");
  app->add_option("--synthetic-classes", o.synthetic_classes, "classes in the synthetic corpus");
  app->add_option("--synthetic-per-class", o.synthetic_per_class, "images per synthetic class");
  app->add_option("--synthetic-seed", o.synthetic_seed, "synthetic corpus seed");
  app->add_option("--regime", o.regime, "feature_extraction | classification");
  app->add_option("--scenario", o.scenario, "upslope | update | downslope");
  app->add_option("--mode", o.mode, "incorporation mode: rand | concat | sr | srwal");
  app->add_option("--alpha", o.alpha, "number of snapshots the attacker sees (0 derives it from --stages)");
  app->add_option("--stages", o.stages, "snapshot indices the attacker sees")->delimiter(',');
  app->add_option("--models-for-test", o.models_for_test, "final | all");
  app->add_option("--attack", o.attack, "invert | membership");
  app->add_option("--perceptual", o.perceptual, "perceptual feature source: feature_net | discriminator");
  app->add_option("--probe-classes", o.probe_classes, "classes held out as the attacker's probe set");
  app->add_option("--probe-size", o.probe_size, "probe images kept from the held-out classes");
  app->add_option("--holdout-fraction", o.holdout_fraction, "classification regime: per-class probe share");
  app->add_option("--ell", o.ell, "attack training set size");
  app->add_option("--embedding", o.embedding, "template width m");
  app->add_option("--target-epochs", o.target_epochs, "target training epochs");
  app->add_option("--update-epochs", o.update_epochs, "fine-tuning epochs in the update scenario");
  app->add_option("--removed-classes", o.removed_classes, "classes removed in the downslope scenario");
  app->add_option("--schedule", o.schedule, "snapshot schedule as training fractions")->delimiter(',');
  app->add_option("--gan-epochs", o.gan_epochs, "inversion GAN epochs");
  app->add_option("--gan-batch", o.gan_batch, "inversion GAN batch size");
  app->add_option("--gan-lr", o.gan_lr, "generator learning rate");
  app->add_option("--disc-lr", o.disc_lr, "discriminator learning rate");
  app->add_option("--mi-epochs", o.mi_epochs, "membership attacker epochs");
  app->add_option("--far", o.far, "false accept rate for the Type1 threshold");
  app->add_option("--max-impostor-pairs", o.max_impostor_pairs, "cap on impostor distances used for calibration");
  app->add_option("--ablation", o.ablation, "snapshot subsets, e.g. \"1,2;0,1,2,3,4\"");
  app->add_option("--seed", o.seed, "master seed");
}

struct Common {
  fs::path runs = "runs";
  std::optional<fs::path> target_cache;
  std::optional<fs::path> save_config;
  bool no_target_cache = false;
  bool force = false;
  bool print_config = false;
  bool quiet = false;
};

void add_common_flags(CLI::App* app, Common& c) {
  app->add_option("--runs", c.runs, "directory holding content-addressed run directories");
  app->add_option("--target-cache", c.target_cache,
                  "directory of trained target snapshots shared across runs (default: targets/ beside --runs)");
  app->add_flag("--no-target-cache", c.no_target_cache, "keep target snapshots inside each run directory");
  app->add_option("--save-config", c.save_config, "write the resolved config to this file");
  app->add_flag("--force", c.force, "recompute stages even when their artifacts exist");
  app->add_flag("--print-config", c.print_config, "print the resolved config and exit");
  app->add_flag("-q,--quiet", c.quiet, "no progress messages");
}

RunOptions options(const Common& c, PipelineStage until) {
  RunOptions opt;
  opt.until = until;
  opt.force = c.force;
  if (!c.no_target_cache) opt.target_cache = c.target_cache ? *c.target_cache : c.runs.parent_path() / "targets";
  if (!c.quiet) opt.log = [](const std::string& m) { std::cerr << "[mmia] " << m << "\n"; };
  return opt;
}

void print_reports(const std::vector<eval::EvalReport>& reports) { eval::write_reports_csv(reports, std::cout); }

int run_stage(const Overrides& o, const Common& c, PipelineStage until, std::optional<AttackKind> attack) {
  auto cfg = resolve(o);
  if (attack) cfg.attack = *attack;
  if (c.save_config) save_config(cfg, *c.save_config);
  if (c.print_config) {
    std::cout << nlohmann::json(cfg).dump(2) << "\n";
    return 0;
  }
  const auto res = run_experiment(cfg, c.runs, options(c, until));
  for (const auto& n : res.notes) std::cerr << "note: " << n << "\n";
  std::cout << "run " << res.hash << " (" << to_string(until) << ") -> " << res.dir.string() << "\n";
  if (!res.reports.empty()) print_reports(res.reports);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-snapshot model inversion and membership inference experiments"};
  app.require_subcommand(1);
  Overrides o;
  Common c;

  auto* ingest = app.add_subcommand("ingest", "load or synthesize the corpus and write the dataset split");
  auto* train = app.add_subcommand("train-target", "train the target model and persist its snapshots");
  auto* invert = app.add_subcommand("attack-invert", "build vector banks and train the inversion attack");
  auto* mi = app.add_subcommand("attack-mi", "build membership tuples and train the membership attacker");
  auto* evaluate = app.add_subcommand("evaluate", "run every stage through evaluation and print the report");
  auto* ablate = app.add_subcommand("ablate", "retrain and evaluate the attack on each snapshot subset");
  for (auto* sub : {ingest, train, invert, mi, evaluate, ablate}) {
    add_config_flags(sub, o);
    add_common_flags(sub, c);
  }

  std::vector<fs::path> report_runs;
  fs::path report_out = "report";
  auto* report = app.add_subcommand("report", "merge finished runs into comparison tables and bar charts");
  report->add_option("runs", report_runs, "run directories")->required();
  report->add_option("-o,--out", report_out, "output directory");

  fs::path synth_out;
  auto* synth = app.add_subcommand("synth-corpus", "write the synthetic corpus as PNG files plus a manifest");
  synth->add_option("-o,--out", synth_out, "output directory")->required();
  add_config_flags(synth, o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return run_stage(o, c, PipelineStage::ingest, std::nullopt);
    if (*train) return run_stage(o, c, PipelineStage::target, std::nullopt);
    if (*invert) return run_stage(o, c, PipelineStage::attack, AttackKind::invert);
    if (*mi) return run_stage(o, c, PipelineStage::attack, AttackKind::membership);
    if (*evaluate) return run_stage(o, c, PipelineStage::evaluation, std::nullopt);
    if (*ablate) {
      const auto cfg = resolve(o);
      if (c.print_config) {
        std::cout << nlohmann::json(cfg).dump(2) << "\n";
        return 0;
      }
      if (c.save_config) save_config(cfg, *c.save_config);
      print_reports(run_ablation(cfg, c.runs, options(c, PipelineStage::evaluation)));
      return 0;
    }
    if (*report) {
      const auto cmp = render_report(report_runs, report_out);
      for (const auto& w : cmp.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "wrote " << cmp.csv.string() << ", " << cmp.table.string() << " and " << cmp.charts.size()
                << " chart(s)\n";
      std::ifstream in(cmp.table);
      std::cout << in.rdbuf();
      return 0;
    }
    if (*synth) {
      const auto cfg = resolve(o);
      require(cfg.dataset.source == "synthetic", "synth-corpus needs a synthetic dataset config");
      const auto manifest = write_corpus(synthesize_corpus(cfg.dataset.synthetic), synth_out);
      std::cout << "wrote " << manifest.string() << "\n";
      return 0;
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
