#pragma once

#include <functional>

#include "mmia/dataset/synthetic.hpp"
#include "mmia/inversion/train.hpp"

namespace mmia::testing {

using namespace mmia::inv;

inline nn::Matrix<double> uniform_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = 0.0, double hi = 1.0) {
  nn::Matrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * uniform01(rng);
  return m;
}

struct Mini {
  GeneratorConfig cfg{6, 2, true, {12, 12, 1}, 8, 6, {2, 2}};
  Generator<double> gen{cfg, 21};
  Discriminator<double> disc{{12, 12, 1}, {2, 3}, 22};
  PerceptualNet<double> pnet{{12, 12, 1}, {2, 2}, 3, 23};
  Ssim<double> ssim{{1, 12, 12}};
  nn::Matrix<double> in, real;
  std::vector<std::size_t> slots{1, 2, 2};

  Mini() {
    Rng rng(24);
    in = uniform_matrix(3, 6, rng, -1, 1);
    real = uniform_matrix(3, 144, rng, 0.05, 0.95);
  }

  GeneratorLosses<double> eval(PerceptualNet<double>* feature, Terms terms) {
    const auto fake = gen.forward(in);
    return generator_losses(fake, gen.logits(), real, slots, disc, feature, ssim, true, terms);
  }
};

using Pick = std::function<double(const LossBundle&)>;

/// Worst relative error over 20 random generator parameters.
inline double worst_gradient_error(Mini& mini, bool use_feature_net, Terms terms, const Pick& pick) {
  PerceptualNet<double>* feature = use_feature_net ? &mini.pnet : nullptr;
  auto params = mini.gen.params();
  for (auto* p : params) p->grad.setZero();
  auto g = mini.eval(feature, terms);
  mini.gen.backward(g.grad_image, &g.grad_logits);

  std::vector<std::pair<nn::Param<double>*, Eigen::Index>> all;
  for (auto* p : params)
    for (Eigen::Index i = 0; i < p->value.size(); ++i) all.emplace_back(p, i);
  Rng rng(77);
  const double h = 1e-5;
  double worst = 0;
  for (int k = 0; k < 20; ++k) {
    auto [p, i] = all[uniform_index(rng, all.size())];
    const double keep = p->value.data()[i];
    p->value.data()[i] = keep + h;
    const double up = pick(mini.eval(feature, terms).bundle);
    p->value.data()[i] = keep - h;
    const double down = pick(mini.eval(feature, terms).bundle);
    p->value.data()[i] = keep;
    const double numeric = (up - down) / (2 * h);
    const double analytic = p->grad.data()[i];
    worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6}));
  }
  return worst;
}


/// Toy attacker data: per-class codes observed through `alpha` noisy snapshots.
struct ToyBank {
  Corpus images;
  VectorBank train, test;
};

inline ToyBank toy_bank(std::size_t alpha, std::size_t m) {
  SyntheticSpec s;
  s.classes = 6;
  s.per_class = 14;
  s.shape = {16, 16, 1};
  ToyBank out;
  out.images = synthesize_corpus(s);
  Rng rng(31);
  std::vector<std::vector<TemplateVector>> codes(6, std::vector<TemplateVector>(alpha, TemplateVector(m)));
  for (auto& per_class : codes)
    for (auto& v : per_class)
      for (auto& x : v) x = static_cast<float>(standard_normal(rng));
  for (const auto& img : out.images) {
    VectorTuple t{img.sample_id, img.class_label, {}};
    for (std::size_t a = 0; a < alpha; ++a) {
      TemplateVector v = codes[static_cast<std::size_t>(img.class_label)][a];
      for (auto& x : v) x += static_cast<float>(0.1 * standard_normal(rng));
      t.vectors.push_back(v);
    }
    (out.test.size() * 7 < out.train.size() * 2 ? out.test : out.train).push_back(std::move(t));
  }
  return out;
}

inline InversionConfig toy_config(int epochs) {
  InversionConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.hidden = 48;
  cfg.z = 24;
  cfg.decoder_channels = {8, 8};
  cfg.discriminator_channels = {4, 8};
  cfg.perceptual.source = PerceptualSource::discriminator;
  cfg.generator_optimizer.learning_rate = 1e-3;
  cfg.seed = 5;
  return cfg;
}

}  // namespace mmia::testing
