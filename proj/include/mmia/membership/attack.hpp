#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mmia/dataset/sample.hpp"
#include "mmia/incorporation/bank_io.hpp"
#include "mmia/incorporation/vectors.hpp"
#include "mmia/nn/adam.hpp"
#include "mmia/nn/losses.hpp"
#include "mmia/nn/sequential.hpp"
#include "mmia/nn/serialize.hpp"
#include "mmia/target/snapshots.hpp"

namespace mmia::mi {

/// Labeled outputs of a snapshot set. members[i] != 0 iff tuples[i] came from
/// the target's training data.
struct MIDataset {
  Mode mode = Mode::rand;
  VectorBank tuples;
  std::vector<int> members;

  std::size_t size() const noexcept { return tuples.size(); }
  std::size_t alpha() const { return tuples.empty() ? 0 : tuples.front().alpha(); }
  std::size_t m() const { return tuples.empty() ? 0 : tuples.front().m(); }
  std::size_t width() const { return input_width(mode, alpha(), m()); }
  std::size_t member_count() const {
    std::size_t n = 0;
    for (int v : members) n += v != 0;
    return n;
  }
  double balance() const { return size() ? static_cast<double>(member_count()) / static_cast<double>(size()) : 0.0; }
  bool has_both_labels() const { return member_count() > 0 && member_count() < size(); }
};

/// Queries every snapshot with member and non-member images and labels the
/// tuples by provenance. With `balance`, the larger side is subsampled so
/// both sides have equal counts.
inline MIDataset build_mi_dataset(const SnapshotSet& set, const std::vector<ImageSample>& target_train,
                                  const std::vector<ImageSample>& member_images,
                                  const std::vector<ImageSample>& nonmember_images, Mode mode, std::uint64_t seed,
                                  bool balance = true) {
  std::set<std::string> train_ids, member_ids;
  for (const auto& s : target_train) train_ids.insert(s.sample_id);
  for (const auto& s : member_images) {
    require(train_ids.count(s.sample_id), "member " + s.sample_id + " is not in the target's training data");
    member_ids.insert(s.sample_id);
  }
  for (const auto& s : nonmember_images) {
    require(!member_ids.count(s.sample_id), "sample " + s.sample_id + " is listed as both member and non-member");
    require(!train_ids.count(s.sample_id), "non-member " + s.sample_id + " is in the target's training data");
  }
  require(!member_images.empty() && !nonmember_images.empty(), "membership data needs members and non-members");

  Rng rng = make_rng(seed, "membership/dataset");
  std::vector<ImageSample> mem = member_images, non = nonmember_images;
  sort_by_id(mem);
  sort_by_id(non);
  if (balance) {
    const std::size_t n = std::min(mem.size(), non.size());
    shuffle(mem.begin(), mem.end(), rng);
    shuffle(non.begin(), non.end(), rng);
    mem.resize(n);
    non.resize(n);
  }
  MIDataset out;
  out.mode = mode;
  for (auto& t : build_vector_bank(set, mem)) {
    out.tuples.push_back(std::move(t));
    out.members.push_back(1);
  }
  for (auto& t : build_vector_bank(set, non)) {
    out.tuples.push_back(std::move(t));
    out.members.push_back(0);
  }
  std::vector<std::size_t> order(out.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order.begin(), order.end(), rng);
  MIDataset shuffled{mode, {}, {}};
  for (auto i : order) {
    shuffled.tuples.push_back(std::move(out.tuples[i]));
    shuffled.members.push_back(out.members[i]);
  }
  return shuffled;
}

inline void write_mi_dataset(const MIDataset& ds, const std::filesystem::path& path) {
  write_vector_bank(ds.tuples, path, &ds.members);
}

inline MIDataset read_mi_dataset(const std::filesystem::path& path, Mode mode) {
  auto file = read_vector_bank(path);
  require(!file.bank.empty() && file.members.size() == file.bank.size(), path.string() + " has no member column");
  return {mode, std::move(file.bank), std::move(file.members)};
}

/// Two rectified hidden layers (64, 64) feeding a logistic membership output;
/// srwal adds a linear slot-index head on the last hidden layer.
class MIAttacker {
 public:
  MIAttacker() = default;
  MIAttacker(Mode mode, std::size_t alpha, std::size_t m, std::uint64_t seed, std::vector<int> hidden = {64, 64})
      : mode_(mode), alpha_(alpha), m_(m), hidden_(std::move(hidden)) {
    require(alpha >= 1 && m >= 1, "membership attacker needs alpha >= 1 and m >= 1");
    require(!hidden_.empty(), "membership attacker needs hidden layers");
    Rng rng(seed);
    std::size_t width = input_width(mode, alpha, m);
    for (int h : hidden_) {
      trunk_.emplace<nn::Dense<float>>(width, static_cast<std::size_t>(h), rng);
      trunk_.emplace<nn::LeakyRelu<float>>(static_cast<std::size_t>(h));
      width = static_cast<std::size_t>(h);
    }
    member_.emplace<nn::Dense<float>>(width, 1, rng, 1.0);
    member_.emplace<nn::Sigmoid<float>>(1);
    if (mode == Mode::srwal) index_.emplace<nn::Dense<float>>(width, alpha, rng, 1.0);
  }

  Mode mode() const noexcept { return mode_; }
  std::size_t alpha() const noexcept { return alpha_; }
  std::size_t m() const noexcept { return m_; }
  std::size_t input_dim() const { return input_width(mode_, alpha_, m_); }
  const std::vector<int>& hidden() const noexcept { return hidden_; }
  bool has_index_head() const noexcept { return !index_.empty(); }
  float input_scale() const noexcept { return scale_; }
  void set_input_scale(float s) { scale_ = s; }

  /// Training pass: membership probabilities (column) and, with an index head, slot logits.
  nn::Matrix<float> forward(const nn::Matrix<float>& in) {
    h_ = trunk_.forward(in * scale_, nn::Phase::train);
    if (has_index_head()) logits_ = index_.forward(h_, nn::Phase::train);
    return member_.forward(h_, nn::Phase::train);
  }
  const nn::Matrix<float>& index_logits() const noexcept { return logits_; }

  void backward(const nn::Matrix<float>& grad_member, const nn::Matrix<float>* grad_index) {
    nn::Matrix<float> g = member_.backward(grad_member);
    if (grad_index) g += index_.backward(*grad_index);
    trunk_.backward(g);
  }

  nn::Matrix<float> infer(const nn::Matrix<float>& in) const {
    check(in);
    return member_.infer(trunk_.infer(in * scale_));
  }

  nn::Matrix<float> infer_index(const nn::Matrix<float>& in) const {
    require(has_index_head(), "membership attacker has no index head");
    check(in);
    return index_.infer(trunk_.infer(in * scale_));
  }

  std::vector<nn::Param<float>*> params() {
    auto p = trunk_.params();
    for (auto* q : member_.params()) p.push_back(q);
    for (auto* q : index_.params()) p.push_back(q);
    return p;
  }

 private:
  void check(const nn::Matrix<float>& in) const {
    require_shape(static_cast<std::size_t>(in.cols()) == input_dim(),
                  "membership input width " + std::to_string(in.cols()) + " != " + std::to_string(input_dim()));
  }

  Mode mode_ = Mode::rand;
  std::size_t alpha_ = 1, m_ = 1;
  std::vector<int> hidden_{64, 64};
  float scale_ = 1;
  nn::Sequential<float> trunk_, member_, index_;
  nn::Matrix<float> h_, logits_;
};

struct MIConfig {
  int epochs = 60;
  int batch_size = 32;
  nn::AdamConfig optimizer{1e-3, 0.9, 0.999, 1e-8};
  double validation_fraction = 0.2;
  std::uint64_t seed = 1;
};

struct MITrainResult {
  MIAttacker attacker;
  double validation_accuracy = 0;
  std::optional<double> index_accuracy;  // srwal only, on held-out structured-random draws
  std::vector<double> loss_curve;         // mean training loss per epoch
};

namespace detail {

inline nn::Matrix<float> stack(const std::vector<AugmentedVector>& inputs) {
  require(!inputs.empty(), "empty membership batch");
  nn::Matrix<float> m(static_cast<Eigen::Index>(inputs.size()), static_cast<Eigen::Index>(inputs.front().data.size()));
  for (std::size_t r = 0; r < inputs.size(); ++r) {
    require_shape(inputs[r].data.size() == static_cast<std::size_t>(m.cols()), "ragged membership batch");
    std::copy(inputs[r].data.begin(), inputs[r].data.end(), m.row(static_cast<Eigen::Index>(r)).data());
  }
  return m;
}

inline float input_scale(const VectorBank& bank) {
  double sq = 0;
  std::size_t n = 0;
  for (const auto& t : bank)
    for (const auto& v : t.vectors)
      for (float x : v) sq += static_cast<double>(x) * x, ++n;
  const double rms = n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
  return rms > 0 ? static_cast<float>(1.0 / rms) : 1.0f;
}

}  // namespace detail

inline double infer_membership(const MIAttacker& attacker, const AugmentedVector& input) {
  return attacker.infer(detail::stack({input}))(0, 0);
}

/// Membership scores per tuple. Several test inputs per tuple are averaged.
inline std::vector<double> membership_scores(const MIAttacker& attacker, const VectorBank& tuples,
                                             ModelsForTest models = ModelsForTest::final_only) {
  std::vector<AugmentedVector> inputs;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    std::vector<AugmentedVector> ins;
    if (models == ModelsForTest::final_only) {
      ins.push_back(make_test_input(tuples[i].final_vector(), attacker.alpha(), attacker.mode()));
    } else {
      require(tuples[i].alpha() == attacker.alpha(), "tuple " + tuples[i].sample_id + " does not have the attack's alpha");
      ins = make_test_inputs(tuples[i], attacker.mode(), models);
    }
    for (auto& a : ins) {
      inputs.push_back(std::move(a));
      owner.push_back(i);
    }
  }
  std::vector<double> sum(tuples.size(), 0.0);
  std::vector<int> count(tuples.size(), 0);
  if (!inputs.empty()) {
    const auto p = attacker.infer(detail::stack(inputs));
    for (std::size_t r = 0; r < owner.size(); ++r) {
      sum[owner[r]] += p(static_cast<Eigen::Index>(r), 0);
      ++count[owner[r]];
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= count[i];
  return sum;
}

/// Fraction of thresholded (0.5) decisions that match the labels.
inline double decision_accuracy(const std::vector<double>& scores, const std::vector<int>& members) {
  require_shape(scores.size() == members.size() && !scores.empty(), "scores and labels must align and be non-empty");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) ok += (scores[i] >= 0.5) == (members[i] != 0);
  return static_cast<double>(ok) / static_cast<double>(scores.size());
}

inline double index_accuracy(const MIAttacker& attacker, const VectorBank& tuples, std::uint64_t seed, int draws = 5) {
  require(attacker.has_index_head(), "index accuracy needs an srwal attacker");
  Rng rng = make_rng(seed, "membership/index-eval");
  std::vector<AugmentedVector> inputs;
  for (const auto& t : tuples)
    for (int d = 0; d < draws; ++d) inputs.push_back(make_structured_random(t, rng, true));
  const auto logits = attacker.infer_index(detail::stack(inputs));
  std::size_t ok = 0;
  for (std::size_t r = 0; r < inputs.size(); ++r) {
    Eigen::Index best = 0;
    logits.row(static_cast<Eigen::Index>(r)).maxCoeff(&best);
    ok += static_cast<std::size_t>(best) + 1 == *inputs[r].slot_index;
  }
  return static_cast<double>(ok) / static_cast<double>(inputs.size());
}

/// Binary cross-entropy on the membership output (plus slot cross-entropy for
/// srwal). A stratified validation split reports held-out accuracy.
inline MITrainResult train_mi(const MIDataset& ds, const MIConfig& cfg) {
  require(ds.size() >= 2 && ds.has_both_labels(), "membership training needs both member and non-member records");
  require(cfg.epochs >= 1 && cfg.batch_size >= 1, "membership epochs and batch size must be positive");
  require(cfg.validation_fraction >= 0 && cfg.validation_fraction < 1, "validation_fraction must lie in [0,1)");
  const std::size_t alpha = ds.alpha(), m = ds.m();
  for (const auto& t : ds.tuples) require_shape(t.alpha() == alpha && t.m() == m, "inconsistent membership tuple " + t.sample_id);

  // stratified split
  Rng split_rng = make_rng(cfg.seed, "membership/split");
  std::vector<std::size_t> pos, neg, train, val;
  for (std::size_t i = 0; i < ds.size(); ++i) (ds.members[i] ? pos : neg).push_back(i);
  for (auto* side : {&pos, &neg}) {
    shuffle(side->begin(), side->end(), split_rng);
    auto nv = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(side->size())));
    nv = std::min(nv, side->size() - 1);
    for (std::size_t k = 0; k < side->size(); ++k) (k < nv ? val : train).push_back((*side)[k]);
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());

  MITrainResult out;
  auto& net = out.attacker;
  net = MIAttacker(ds.mode, alpha, m, derive_seed(cfg.seed, "membership/init"));
  net.set_input_scale(detail::input_scale(ds.tuples));
  nn::Adam<float> opt(net.params(), cfg.optimizer);
  Rng order_rng = make_rng(cfg.seed, "membership/order");
  Rng slot_rng = make_rng(cfg.seed, "membership/slots");
  const bool srwal = ds.mode == Mode::srwal;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(train.begin(), train.end(), order_rng);
    double total = 0;
    for (std::size_t begin = 0; begin < train.size(); begin += bs) {
      const std::size_t end = std::min(train.size(), begin + bs);
      std::vector<AugmentedVector> inputs;
      std::vector<int> labels;
      std::vector<int> slots;
      for (std::size_t k = begin; k < end; ++k) {
        inputs.push_back(make_training_input(ds.tuples[train[k]], ds.mode, slot_rng));
        labels.push_back(ds.members[train[k]] != 0);
        slots.push_back(static_cast<int>(inputs.back().slot_index.value_or(1)) - 1);
      }
      for (auto* p : net.params()) p->grad.setZero();
      const auto prob = net.forward(detail::stack(inputs));
      const auto bce = nn::binary_cross_entropy(prob, labels);
      double loss = bce.loss;
      if (srwal) {
        const auto ce = nn::softmax_cross_entropy(net.index_logits(), slots);
        loss += ce.loss;
        net.backward(bce.grad, &ce.grad);
      } else {
        net.backward(bce.grad, nullptr);
      }
      if (!std::isfinite(loss)) throw TrainingDiverged("membership training loss is not finite", epoch);
      opt.step();
      total += loss * static_cast<double>(end - begin);
    }
    out.loss_curve.push_back(total / static_cast<double>(train.size()));
  }
  for (auto* p : net.params()) p->grad.setZero();

  if (!val.empty()) {
    VectorBank vt;
    std::vector<int> vl;
    for (auto i : val) vt.push_back(ds.tuples[i]), vl.push_back(ds.members[i]);
    out.validation_accuracy = decision_accuracy(membership_scores(net, vt), vl);
    if (srwal) out.index_accuracy = index_accuracy(net, vt, cfg.seed);
  }
  return out;
}

inline void save_mi_attacker(MIAttacker& a, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const nlohmann::json meta = {{"mode", to_string(a.mode())}, {"alpha", a.alpha()},       {"m", a.m()},
                               {"hidden", a.hidden()},        {"input_scale", a.input_scale()}};
  std::ofstream(dir / "attacker.json") << meta.dump(2) << "\n";
  nn::save_params(dir / "attacker.bin", a.params());
}

inline MIAttacker load_mi_attacker(const std::filesystem::path& dir) {
  std::ifstream in(dir / "attacker.json");
  if (!in) throw IngestError("membership attacker not found: " + (dir / "attacker.json").string());
  const auto meta = nlohmann::json::parse(in);
  MIAttacker a(parse_mode(meta.at("mode").get<std::string>()), meta.at("alpha").get<std::size_t>(),
               meta.at("m").get<std::size_t>(), 0, meta.at("hidden").get<std::vector<int>>());
  a.set_input_scale(meta.at("input_scale").get<float>());
  nn::load_params(dir / "attacker.bin", a.params());
  return a;
}

}  // namespace mmia::mi
