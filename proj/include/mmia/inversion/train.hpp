#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mmia/core/json_enum.hpp"
#include "mmia/dataset/sample.hpp"
#include "mmia/incorporation/bank_io.hpp"
#include "mmia/incorporation/vectors.hpp"
#include "mmia/inversion/losses.hpp"
#include "mmia/inversion/networks.hpp"
#include "mmia/inversion/ssim.hpp"
#include "mmia/nn/adam.hpp"
#include "mmia/nn/serialize.hpp"
#include "mmia/target/model.hpp"

namespace mmia::inv {

enum class PerceptualSource { feature_net, discriminator };

MMIA_JSON_ENUM(PerceptualSource, {{PerceptualSource::feature_net, "feature_net"},
                                                {PerceptualSource::discriminator, "discriminator"}})

struct PerceptualConfig {
  PerceptualSource source = PerceptualSource::feature_net;
  std::vector<int> channels{8, 16};
  int epochs = 8;
  double learning_rate = 1e-3;

  friend bool operator==(const PerceptualConfig&, const PerceptualConfig&) = default;
};

struct InversionConfig {
  int epochs = 60;
  int batch_size = 32;
  nn::AdamConfig generator_optimizer{2e-4, 0.5, 0.999, 1e-8};
  nn::AdamConfig discriminator_optimizer{2e-4, 0.5, 0.999, 1e-8};
  int hidden = 256;
  int z = 128;
  std::vector<int> decoder_channels{64, 32, 16, 8};
  std::vector<int> discriminator_channels{8, 16, 32};
  PerceptualConfig perceptual;
  std::uint64_t seed = 1;
};

/// Which generator loss terms contribute gradients.
struct Terms {
  bool l1 = true, ssim = true, perceptual = true, adversarial = true, alignment = true;
};

template <class T>
struct GeneratorLosses {
  LossBundle bundle;
  nn::Matrix<T> grad_image;
  nn::Matrix<T> grad_logits;  // empty without an alignment head
};

/// Generator objective on an already generated batch. Backpropagates the
/// adversarial and perceptual terms through D and the feature network; their
/// parameter gradients are scratch and must be cleared before their own updates.
template <class T>
GeneratorLosses<T> generator_losses(const nn::Matrix<T>& fake, const nn::Matrix<T>& logits, const nn::Matrix<T>& real,
                                    const std::vector<std::size_t>& slots, Discriminator<T>& disc,
                                    PerceptualNet<T>* feature_net, const Ssim<T>& ssim, bool srwal, Terms terms = {}) {
  require_shape(fake.rows() == real.rows() && fake.cols() == real.cols(), "generator output does not match images");
  GeneratorLosses<T> out;
  out.grad_image = nn::Matrix<T>::Zero(fake.rows(), fake.cols());

  const auto l1 = l1_loss(real, fake);
  if (terms.l1) out.grad_image += l1.grad;

  nn::Matrix<T> ssim_grad;
  const T s = ssim.mean_with_grad(real, fake, ssim_grad);
  if (terms.ssim) out.grad_image -= ssim_grad;

  T perceptual = 0;
  if (feature_net) {
    const auto pl = feature_mse(feature_net->features_infer(real), feature_net->features_forward(fake));
    perceptual = pl.loss;
    if (terms.perceptual) out.grad_image += feature_net->features_backward(pl.grad);
  } else {
    const auto pl = feature_mse(disc.features_infer(real), disc.features_forward(fake));
    perceptual = pl.loss;
    if (terms.perceptual) out.grad_image += disc.features_backward(pl.grad);
  }

  const auto adv = generator_adversarial_loss(disc.forward(fake));
  if (terms.adversarial) out.grad_image += disc.backward(adv.grad);

  std::optional<double> align;
  if (srwal) {
    const auto al = alignment_loss(logits, slots);
    align = static_cast<double>(al.loss);
    out.grad_logits = terms.alignment ? al.grad : nn::Matrix<T>::Zero(al.grad.rows(), al.grad.cols());
  }
  out.bundle = total_generator_loss(l1.loss, 1.0 - static_cast<double>(s), perceptual, adv.loss, align, srwal);
  return out;
}

template <class T>
nn::Matrix<T> stack_rows(const std::vector<const std::vector<T>*>& rows) {
  require(!rows.empty(), "cannot stack an empty batch");
  nn::Matrix<T> m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front()->size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require_shape(rows[r]->size() == static_cast<std::size_t>(m.cols()), "ragged batch");
    std::copy(rows[r]->begin(), rows[r]->end(), m.row(static_cast<Eigen::Index>(r)).data());
  }
  return m;
}

/// Trains the frozen feature network used by the perceptual loss.
inline PerceptualNet<float> train_perceptual_net(const std::vector<ImageSample>& data, const PerceptualConfig& cfg,
                                                 std::uint64_t seed) {
  require(!data.empty(), "perceptual net needs training images");
  std::map<int, int> index;
  for (const auto& s : data) index.emplace(s.class_label, 0);
  int next = 0;
  for (auto& [_, i] : index) i = next++;
  PerceptualNet<float> net(data.front().pixels.shape, cfg.channels, index.size(), derive_seed(seed, "perceptual/init"));
  nn::Adam<float> opt(net.params(), {cfg.learning_rate, 0.9, 0.999, 1e-8});
  Rng rng = make_rng(seed, "perceptual/shuffle");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int e = 0; e < cfg.epochs; ++e) {
    shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += 32) {
      std::vector<const Image*> imgs;
      std::vector<int> targets;
      for (std::size_t i = b; i < std::min(order.size(), b + 32); ++i) {
        imgs.push_back(&data[order[i]].pixels);
        targets.push_back(index.at(data[order[i]].class_label));
      }
      opt.zero_grad();
      const auto logits = net.head().forward(net.features_forward(stack_images(imgs)), nn::Phase::train);
      const auto ce = nn::softmax_cross_entropy(logits, targets);
      if (!std::isfinite(ce.loss)) throw TrainingDiverged("perceptual net loss is not finite", e + 1);
      net.features_backward(net.head().backward(ce.grad));
      opt.step();
    }
  }
  for (auto* p : net.params()) p->grad.setZero();
  return net;
}

struct EpochLosses {
  int epoch = 0;
  LossBundle generator;
  double discriminator = 0;
};

/// A trained inversion attack: generator, discriminator and training curve.
struct InversionModel {
  Mode mode = Mode::rand;
  std::size_t alpha = 1;
  std::size_t m = 0;
  Generator<float> generator;
  Discriminator<float> discriminator;
  PerceptualSource perceptual = PerceptualSource::feature_net;
  std::vector<EpochLosses> curve;

  std::size_t input_dim() const { return input_width(mode, alpha, m); }
};

namespace detail {

inline float bank_input_scale(const VectorBank& bank) {
  double sq = 0;
  std::size_t n = 0;
  for (const auto& t : bank)
    for (const auto& v : t.vectors)
      for (float x : v) {
        sq += static_cast<double>(x) * x;
        ++n;
      }
  const double rms = n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
  return rms > 0 ? static_cast<float>(1.0 / rms) : 1.0f;
}

inline std::map<std::string, const Image*> images_by_id(const std::vector<ImageSample>& images) {
  std::map<std::string, const Image*> out;
  for (const auto& s : images) out[s.sample_id] = &s.pixels;
  return out;
}

inline std::string describe(const LossBundle& b) {
  std::ostringstream os;
  os << "l1=" << b.l1 << " ssim=" << b.ssim_loss << " perceptual=" << b.perceptual << " adversarial=" << b.adversarial;
  if (b.alignment) os << " alignment=" << *b.alignment;
  return os.str();
}

}  // namespace detail

/// Alternating discriminator/generator training on the attacker's vector bank.
/// `images` must contain the probe image of every bank tuple (by sample id).
/// `feature_net` is required when cfg.perceptual.source is feature_net.
inline InversionModel train_inversion(const VectorBank& bank, const std::vector<ImageSample>& images, Mode mode,
                                      const InversionConfig& cfg, const PerceptualNet<float>* feature_net) {
  require(!bank.empty(), "cannot train an inversion attack on an empty bank");
  require(cfg.epochs >= 1 && cfg.batch_size >= 1, "inversion epochs and batch size must be positive");
  const std::size_t alpha = bank.front().alpha(), m = bank.front().m();
  for (const auto& t : bank) {
    require_shape(t.alpha() == alpha && t.m() == m, "bank tuple " + t.sample_id + " has inconsistent alpha or m");
  }
  const auto by_id = detail::images_by_id(images);
  std::vector<const Image*> targets;
  for (const auto& t : bank) {
    const auto it = by_id.find(t.sample_id);
    require(it != by_id.end(), "no probe image for bank tuple " + t.sample_id);
    targets.push_back(it->second);
  }
  const ImageShape shape = targets.front()->shape;
  std::optional<PerceptualNet<float>> pnet;
  if (cfg.perceptual.source == PerceptualSource::feature_net) {
    require(feature_net != nullptr, "perceptual source feature_net needs a trained feature network");
    require_shape(feature_net->image() == shape, "feature network expects a different image shape");
    pnet = *feature_net;
  }

  InversionModel model;
  model.mode = mode;
  model.alpha = alpha;
  model.m = m;
  model.perceptual = cfg.perceptual.source;
  GeneratorConfig gcfg{input_width(mode, alpha, m), alpha, mode == Mode::srwal, shape, cfg.hidden, cfg.z,
                       cfg.decoder_channels};
  model.generator = Generator<float>(gcfg, derive_seed(cfg.seed, "inversion/generator"));
  model.generator.set_input_scale(detail::bank_input_scale(bank));
  model.discriminator = Discriminator<float>(shape, cfg.discriminator_channels, derive_seed(cfg.seed, "inversion/discriminator"));

  auto& gen = model.generator;
  auto& disc = model.discriminator;
  nn::Adam<float> gopt(gen.params(), cfg.generator_optimizer);
  nn::Adam<float> dopt(disc.params(), cfg.discriminator_optimizer);
  const Ssim<float> ssim({shape.channels, shape.height, shape.width});
  Rng order_rng = make_rng(cfg.seed, "inversion/order");
  Rng slot_rng = make_rng(cfg.seed, "inversion/slots");
  const bool srwal = mode == Mode::srwal;

  std::vector<std::size_t> order(bank.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), order_rng);
    EpochLosses acc{epoch, {}, 0};
    double l1 = 0, ss = 0, pc = 0, adv = 0, al = 0, tot = 0, dl = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += bs) {
      const std::size_t end = std::min(order.size(), begin + bs);
      std::vector<AugmentedVector> inputs;
      std::vector<const std::vector<float>*> rows;
      std::vector<const Image*> imgs;
      std::vector<std::size_t> slots;
      for (std::size_t i = begin; i < end; ++i) {
        inputs.push_back(make_training_input(bank[order[i]], mode, slot_rng));
        imgs.push_back(targets[order[i]]);
        slots.push_back(inputs.back().slot_index.value_or(0));
      }
      for (const auto& a : inputs) rows.push_back(&a.data);
      const nn::Matrix<float> in = stack_rows(rows);
      const nn::Matrix<float> real = stack_images(imgs);

      const nn::Matrix<float> fake = gen.forward(in);

      // real and fake share one discriminator pass
      const Eigen::Index nb = real.rows();
      nn::Matrix<float> both(2 * nb, real.cols());
      both.topRows(nb) = real;
      both.bottomRows(nb) = fake;
      disc.zero_grad();
      const nn::Matrix<float> d_out = disc.forward(both);
      const auto dloss = discriminator_loss<float>(d_out.topRows(nb), d_out.bottomRows(nb));
      nn::Matrix<float> d_grad(2 * nb, 1);
      d_grad.topRows(nb) = dloss.grad_real;
      d_grad.bottomRows(nb) = dloss.grad_fake;
      disc.backward(d_grad);
      dopt.step();

      for (auto* p : gen.params()) p->grad.setZero();
      auto g = generator_losses(fake, gen.logits(), real, slots, disc, pnet ? &*pnet : nullptr, ssim, srwal);
      if (!std::isfinite(g.bundle.total) || !std::isfinite(dloss.loss)) {
        throw TrainingDiverged("inversion training diverged at epoch " + std::to_string(epoch) + ": " +
                                   detail::describe(g.bundle) + " discriminator=" + std::to_string(dloss.loss),
                               epoch);
      }
      gen.backward(g.grad_image, srwal ? &g.grad_logits : nullptr);
      gopt.step();

      const double w = static_cast<double>(end - begin);
      l1 += g.bundle.l1 * w;
      ss += g.bundle.ssim_loss * w;
      pc += g.bundle.perceptual * w;
      adv += g.bundle.adversarial * w;
      al += g.bundle.alignment.value_or(0.0) * w;
      tot += g.bundle.total * w;
      dl += dloss.loss * w;
    }
    const double n = static_cast<double>(order.size());
    acc.generator = total_generator_loss(l1 / n, ss / n, pc / n, adv / n, srwal ? std::optional<double>(al / n) : std::nullopt, srwal);
    acc.discriminator = dl / n;
    model.curve.push_back(acc);
  }
  disc.zero_grad();
  for (auto* p : gen.params()) p->grad.setZero();
  return model;
}

/// Deterministic inference-mode reconstructions, one row per input.
inline nn::Matrix<float> invert_batch(const InversionModel& model, const std::vector<AugmentedVector>& inputs) {
  require(!inputs.empty(), "nothing to invert");
  std::vector<const std::vector<float>*> rows;
  for (const auto& a : inputs) {
    require_shape(a.data.size() == model.input_dim(), "inversion input width " + std::to_string(a.data.size()) +
                                                          " != generator input width " + std::to_string(model.input_dim()));
    rows.push_back(&a.data);
  }
  return model.generator.infer(stack_rows(rows));
}

inline Image invert(const InversionModel& model, const AugmentedVector& input) {
  const auto y = invert_batch(model, {input});
  return Image(model.generator.config().image, std::vector<float>(y.data(), y.data() + y.size()));
}

/// Reconstructions for whole tuples. Several test inputs per tuple are
/// averaged in image space.
inline std::vector<Image> reconstruct(const InversionModel& model, const VectorBank& tuples, ModelsForTest models) {
  std::vector<Image> out;
  out.reserve(tuples.size());
  const ImageShape shape = model.generator.config().image;
  constexpr std::size_t kChunk = 128;
  for (std::size_t begin = 0; begin < tuples.size(); begin += kChunk) {
    const std::size_t end = std::min(tuples.size(), begin + kChunk);
    std::vector<AugmentedVector> inputs;
    std::vector<std::size_t> owner;
    for (std::size_t i = begin; i < end; ++i) {
      require(tuples[i].alpha() == model.alpha || models == ModelsForTest::final_only,
              "tuple " + tuples[i].sample_id + " does not have the attack's alpha");
      std::vector<AugmentedVector> ins;
      if (models == ModelsForTest::final_only) {
        ins.push_back(make_test_input(tuples[i].final_vector(), model.alpha, model.mode));
      } else {
        ins = make_test_inputs(tuples[i], model.mode, models);
      }
      for (auto& a : ins) {
        inputs.push_back(std::move(a));
        owner.push_back(i - begin);
      }
    }
    const nn::Matrix<float> y = invert_batch(model, inputs);
    std::vector<std::vector<double>> sums(end - begin, std::vector<double>(shape.size(), 0.0));
    std::vector<int> counts(end - begin, 0);
    for (std::size_t r = 0; r < owner.size(); ++r) {
      auto& s = sums[owner[r]];
      for (std::size_t k = 0; k < s.size(); ++k) s[k] += y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
      ++counts[owner[r]];
    }
    for (std::size_t i = 0; i < sums.size(); ++i) {
      std::vector<float> px(shape.size());
      for (std::size_t k = 0; k < px.size(); ++k) px[k] = static_cast<float>(sums[i][k] / counts[i]);
      out.emplace_back(shape, std::move(px));
    }
  }
  return out;
}

/// Fraction of held-out structured-random inputs whose slot the alignment head recovers.
inline double alignment_accuracy(const InversionModel& model, const VectorBank& tuples, std::uint64_t seed, int draws_per_tuple = 5) {
  require(model.mode == Mode::srwal && model.generator.has_alignment_head(), "alignment accuracy needs an srwal attack");
  Rng rng = make_rng(seed, "inversion/alignment-eval");
  std::vector<AugmentedVector> inputs;
  for (const auto& t : tuples)
    for (int d = 0; d < draws_per_tuple; ++d) inputs.push_back(make_structured_random(t, rng, true));
  std::vector<const std::vector<float>*> rows;
  for (const auto& a : inputs) rows.push_back(&a.data);
  const auto logits = model.generator.infer_logits(stack_rows(rows));
  std::size_t correct = 0;
  for (std::size_t r = 0; r < inputs.size(); ++r) {
    Eigen::Index best = 0;
    logits.row(static_cast<Eigen::Index>(r)).maxCoeff(&best);
    correct += static_cast<std::size_t>(best) + 1 == *inputs[r].slot_index;
  }
  return static_cast<double>(correct) / static_cast<double>(inputs.size());
}

// ---- persistence ----

inline void write_curve_csv(const std::vector<EpochLosses>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  out << "epoch,l1,ssim,perceptual,adversarial,alignment,total,discriminator\n";
  for (const auto& e : curve) {
    const auto& b = e.generator;
    out << e.epoch << ',' << mmia::detail::format_double(b.l1) << ',' << mmia::detail::format_double(b.ssim_loss) << ','
        << mmia::detail::format_double(b.perceptual) << ',' << mmia::detail::format_double(b.adversarial) << ','
        << (b.alignment ? mmia::detail::format_double(*b.alignment) : "") << ',' << mmia::detail::format_double(b.total)
        << ',' << mmia::detail::format_double(e.discriminator) << "\n";
  }
}

inline void save_inversion(InversionModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& g = model.generator.config();
  nlohmann::json meta = {{"mode", to_string(model.mode)},
                         {"alpha", model.alpha},
                         {"m", model.m},
                         {"input_dim", g.input_dim},
                         {"image", {g.image.height, g.image.width, g.image.channels}},
                         {"hidden", g.hidden},
                         {"z", g.z},
                         {"decoder_channels", g.decoder_channels},
                         {"discriminator_channels", model.discriminator.channels()},
                         {"input_scale", model.generator.input_scale()},
                         {"perceptual", model.perceptual}};
  std::ofstream(dir / "inversion.json") << meta.dump(2) << "\n";
  nn::save_params(dir / "generator.bin", model.generator.params());
  nn::save_params(dir / "discriminator.bin", model.discriminator.params());
  write_curve_csv(model.curve, dir / "curve.csv");
}

inline InversionModel load_inversion(const std::filesystem::path& dir) {
  std::ifstream in(dir / "inversion.json");
  if (!in) throw IngestError("inversion checkpoint not found: " + (dir / "inversion.json").string());
  const auto meta = nlohmann::json::parse(in);
  InversionModel model;
  model.mode = parse_mode(meta.at("mode").get<std::string>());
  model.alpha = meta.at("alpha").get<std::size_t>();
  model.m = meta.at("m").get<std::size_t>();
  model.perceptual = meta.at("perceptual").get<PerceptualSource>();
  const auto img = meta.at("image").get<std::vector<int>>();
  GeneratorConfig g{meta.at("input_dim").get<std::size_t>(), model.alpha, model.mode == Mode::srwal,
                    {img.at(0), img.at(1), img.at(2)}, meta.at("hidden").get<int>(), meta.at("z").get<int>(),
                    meta.at("decoder_channels").get<std::vector<int>>()};
  model.generator = Generator<float>(g, 0);
  model.generator.set_input_scale(meta.at("input_scale").get<float>());
  model.discriminator = Discriminator<float>(g.image, meta.at("discriminator_channels").get<std::vector<int>>(), 0);
  nn::load_params(dir / "generator.bin", model.generator.params());
  nn::load_params(dir / "discriminator.bin", model.discriminator.params());
  return model;
}

}  // namespace mmia::inv
