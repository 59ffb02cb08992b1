// SPDX-License-Identifier: Apache-2.0
#include "advhar/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "advhar/error.hpp"
#include "advhar/metrics.hpp"
#include "advhar/seeding.hpp"
#include "json.hpp"

namespace advhar {

using nn::Tensor;

namespace {

constexpr std::size_t kEvalChunk = 256;

// Running per-epoch means of the logged losses.
struct LossMeans {
  double sum[4] = {0, 0, 0, 0};
  std::size_t n[4] = {0, 0, 0, 0};
  void add(int slot, double v) {
    sum[slot] += v;
    ++n[slot];
  }
  std::optional<double> mean(int slot) const {
    if (n[slot] == 0) return std::nullopt;
    return sum[slot] / static_cast<double>(n[slot]);
  }
};
enum Slot { kRec = 0, kCls = 1, kDisc = 2, kAdv = 3 };

std::string describe_batch(std::span<const std::size_t> a_batch, std::span<const PairSample* const> pairs) {
  std::ostringstream os;
  os << "window batch [";
  for (std::size_t i = 0; i < a_batch.size(); ++i) os << (i ? "," : "") << a_batch[i];
  os << "]";
  if (!pairs.empty()) {
    os << ", pair batch [";
    for (std::size_t i = 0; i < pairs.size(); ++i) os << (i ? "," : "") << "(" << pairs[i]->a << "," << pairs[i]->b << ")";
    os << "]";
  }
  return os.str();
}

struct BatchContext {
  int step;
  std::size_t epoch, iteration;
  std::span<const std::size_t> a_batch;
  std::span<const PairSample* const> pairs;
};

double finite(double v, const char* what, const BatchContext& ctx) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "non-finite " << what << " loss at step " << ctx.step << ", epoch " << ctx.epoch << ", iteration "
       << ctx.iteration << "; " << describe_batch(ctx.a_batch, ctx.pairs);
    throw TrainingAbort(os.str());
  }
  return v;
}

Tensor from_grad(const std::vector<float>& g, const std::vector<std::size_t>& shape) { return Tensor(shape, g); }

Tensor add(Tensor a, const Tensor& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

std::vector<std::size_t> pair_window_indices(std::span<const PairSample* const> pairs) {
  std::vector<std::size_t> idx(2 * pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    idx[i] = pairs[i]->a;
    idx[pairs.size() + i] = pairs[i]->b;
  }
  return idx;
}

std::vector<int> pair_flags(std::span<const PairSample* const> pairs) {
  std::vector<int> g(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) g[i] = pairs[i]->g;
  return g;
}

// (2P, 64) latents of [a..., b...] -> (P, 128) discriminator input.
Tensor join_pairs(const Tensor& z) {
  const std::size_t p = z.dim(0) / 2;
  return nn::concat_features(z.slice(0, p), z.slice(p, 2 * p));
}

// Gradient of the joined input back to the (2P, 64) latent layout.
Tensor unjoin_pairs(const Tensor& g) {
  auto [ga, gb] = nn::split_features(g);
  const std::array<Tensor, 2> parts = {std::move(ga), std::move(gb)};
  return nn::concat_batch(parts);
}

std::vector<float> as_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Cycles through shuffled batches of one stream, reshuffling on every pass.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : n_(n), batch_size_(batch_size), seed_(seed) {
    refill();
  }
  std::size_t batches_per_pass() const { return batches_.size(); }
  const std::vector<std::size_t>& next() {
    if (at_ == batches_.size()) {
      ++pass_;
      refill();
    }
    return batches_[at_++];
  }

 private:
  void refill() {
    batches_ = make_batches(n_, batch_size_, mix_seed({seed_, pass_}));
    at_ = 0;
  }
  std::size_t n_, batch_size_;
  std::uint64_t seed_;
  std::uint64_t pass_ = 0;
  std::vector<std::vector<std::size_t>> batches_;
  std::size_t at_ = 0;
};

nn::Adam make_adam(const StepSchedule& s, Block b) {
  nn::AdamOptions o;
  o.learning_rate = static_cast<float>(s.rate(b));
  return nn::Adam(o);
}

}  // namespace

TrainingConfig TrainingConfig::for_schema(const DatasetSchema& schema) {
  TrainingConfig c;
  c.batch_size_a = schema.batch_size_a;
  c.batch_size_pairs = schema.batch_size_pairs;
  return c;
}

std::string epoch_record_json(const EpochRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return nlohmann::json{{"fold", r.fold},
                        {"step", r.step},
                        {"epoch", r.epoch},
                        {"L_R", opt(r.reconstruction)},
                        {"L_C", opt(r.classification)},
                        {"L_D", opt(r.discrimination)},
                        {"L_A", opt(r.adversarial)},
                        {"val_accuracy", opt(r.val_accuracy)},
                        {"val_f1w", opt(r.val_f1_weighted)},
                        {"disc_val_acc", opt(r.disc_val_accuracy)}}
      .dump();
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  // A single-item batch has no batch-norm statistics to speak of.
  if (out.size() >= 2 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

Trainer::Trainer(TrainingConfig config, FoldInputs inputs, TrainingHooks hooks)
    : config_(std::move(config)), in_(inputs), hooks_(std::move(hooks)) {
  if (in_.train == nullptr || in_.train->windows.empty()) throw DataError("training set is empty");
  train_subjects_ = in_.train->subjects;
  if (in_.validation) {
    for (int s : in_.validation->subjects) {
      if (std::binary_search(train_subjects_.begin(), train_subjects_.end(), s)) {
        throw DataError("subject " + std::to_string(s) + " is in both the training and validation sets");
      }
    }
  }
}

void Trainer::audit(int step, std::size_t epoch, std::size_t iteration, std::span<const std::size_t> a_batch,
                    std::span<const PairSample* const> pair_batch) const {
  BatchAudit a{step, epoch, iteration, {}};
  auto note = [&](std::size_t index) {
    const int s = in_.train->windows.at(index).subject;
    if (!std::binary_search(train_subjects_.begin(), train_subjects_.end(), s)) {
      throw TrainingAbort("window of non-training subject " + std::to_string(s) + " in a gradient batch");
    }
    a.subjects.push_back(s);
  };
  for (std::size_t i : a_batch) note(i);
  for (const PairSample* p : pair_batch) {
    note(p->a);
    note(p->b);
  }
  if (hooks_.on_batch) hooks_.on_batch(a);
}

void Trainer::record(EpochRecord r) {
  r.fold = config_.fold;
  if (hooks_.on_epoch) hooks_.on_epoch(r);
  trace_.push_back(std::move(r));
}

Trainer::Validation Trainer::validate(const ModelBundle& bundle) const {
  Validation v;
  if (in_.validation == nullptr || in_.validation->windows.empty()) return v;
  const LabeledDataset& val = *in_.validation;
  const nn::Network& f = bundle.block(Block::kFeature);
  const nn::Network& c = bundle.block(Block::kClassifier);
  const std::size_t k = bundle.config().activities;
  ConfusionMatrix cm(k);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < val.size(); start += kEvalChunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(val.size(), start + kEvalChunk); ++i) idx.push_back(i);
    const Tensor probs = c.predict(f.predict(windows_tensor(val, idx)));
    const auto pred = argmax_rows(as_vector(probs), k);
    for (std::size_t j = 0; j < idx.size(); ++j) cm.add(static_cast<std::size_t>(val.windows[idx[j]].activity), pred[j]);
  }
  const ClassificationMetrics m = metrics_from_confusion(cm);
  v.accuracy = m.accuracy;
  v.f1_weighted = m.f1_weighted;

  if (bundle.config().discriminator == DiscriminatorKind::kPair && in_.validation_pairs &&
      !in_.validation_pairs->pairs.empty()) {
    const auto& pairs = in_.validation_pairs->pairs;
    std::size_t correct = 0;
    std::vector<const PairSample*> chunk;
    for (std::size_t start = 0; start < pairs.size(); start += kEvalChunk) {
      chunk.clear();
      for (std::size_t i = start; i < std::min(pairs.size(), start + kEvalChunk); ++i) chunk.push_back(&pairs[i]);
      const Tensor z = f.predict(windows_tensor(val, pair_window_indices(chunk)));
      const Tensor d = bundle.block(Block::kDiscriminator).predict(join_pairs(z));
      for (std::size_t j = 0; j < chunk.size(); ++j) correct += ((d[j] >= 0.5f ? 1 : 0) == chunk[j]->g);
    }
    v.disc_accuracy = static_cast<double>(correct) / static_cast<double>(pairs.size());
  }
  return v;
}

void Trainer::step1(ModelBundle& bundle) {
  const StepSchedule& s = config_.step1;
  if (hooks_.on_point) hooks_.on_point(TrainingPoint::kStep1Begin, bundle);
  bundle.freeze_only({Block::kFeature, Block::kReconstructor});
  nn::Adam opt_f = make_adam(s, Block::kFeature), opt_r = make_adam(s, Block::kReconstructor);
  nn::Network& f = bundle.block(Block::kFeature);
  nn::Network& r = bundle.block(Block::kReconstructor);
  std::mt19937_64 dropout_rng(mix_seed({config_.seed, config_.fold, 1, 0xd0}));
  nn::Tape tf, tr;
  for (std::size_t epoch = 0; epoch < s.epochs; ++epoch) {
    const auto batches = make_batches(in_.train->size(), config_.batch_size_a, mix_seed({config_.seed, config_.fold, 1, epoch}));
    LossMeans means;
    for (std::size_t it = 0; it < batches.size(); ++it) {
      const auto& batch = batches[it];
      const BatchContext bc{1, epoch, it, batch, {}};
      audit(1, epoch, it, batch, {});
      const Tensor x = windows_tensor(*in_.train, batch);
      const Tensor z = f.forward(x, bundle.train_context(Block::kFeature, &dropout_rng), &tf);
      const Tensor y = r.forward(z, bundle.train_context(Block::kReconstructor, &dropout_rng), &tr);
      means.add(kRec, finite(loss::reconstruction<float>(y.values(), x.values()), "reconstruction", bc));
      f.zero_grad();
      r.zero_grad();
      const Tensor gz = r.backward(from_grad(loss::reconstruction_grad<float>(y.values(), x.values()), y.shape()), tr);
      f.backward(gz, tf, {true, false});
      if (config_.clip_grad_norm) nn::clip_grad_norm({&f, &r}, *config_.clip_grad_norm);
      bundle.apply_update(Block::kFeature, opt_f);
      bundle.apply_update(Block::kReconstructor, opt_r);
    }
    EpochRecord rec;
    rec.step = 1;
    rec.epoch = epoch;
    rec.reconstruction = means.mean(kRec);
    record(rec);
  }
  bundle.freeze_only({Block::kFeature, Block::kReconstructor, Block::kClassifier, Block::kDiscriminator});
  if (hooks_.on_point) hooks_.on_point(TrainingPoint::kStep1End, bundle);
}

void Trainer::step2(ModelBundle& bundle) {
  const StepSchedule& s = config_.step2;
  const bool identity = bundle.config().discriminator == DiscriminatorKind::kIdentity;
  if (!identity && (in_.pairs == nullptr || in_.pairs->pairs.empty())) throw DataError("step 2 needs a pair set");
  if (hooks_.on_point) hooks_.on_point(TrainingPoint::kStep2Begin, bundle);
  bundle.freeze_only({Block::kFeature, Block::kReconstructor, Block::kClassifier, Block::kDiscriminator});
  nn::Adam opt_f = make_adam(s, Block::kFeature), opt_r = make_adam(s, Block::kReconstructor),
           opt_c = make_adam(s, Block::kClassifier), opt_d = make_adam(s, Block::kDiscriminator);
  nn::Network& f = bundle.block(Block::kFeature);
  nn::Network& r = bundle.block(Block::kReconstructor);
  nn::Network& c = bundle.block(Block::kClassifier);
  nn::Network& d = bundle.block(Block::kDiscriminator);
  const std::size_t k = bundle.config().activities;
  std::mt19937_64 dropout_rng(mix_seed({config_.seed, config_.fold, 2, 0xd0}));
  nn::Tape tf, tr, tc, td;
  // Running statistics follow the window batches only.
  const nn::ForwardContext pair_ctx{nn::Phase::kTrain, false, &dropout_rng};

  for (std::size_t epoch = 0; epoch < s.epochs; ++epoch) {
    BatchStream a_stream(in_.train->size(), config_.batch_size_a, mix_seed({config_.seed, config_.fold, 2, epoch, 0}));
    std::optional<BatchStream> p_stream;
    std::size_t iterations = a_stream.batches_per_pass();
    if (!identity) {
      p_stream.emplace(in_.pairs->size(), config_.batch_size_pairs, mix_seed({config_.seed, config_.fold, 2, epoch, 1}));
      iterations = std::max(iterations, p_stream->batches_per_pass());
    }
    LossMeans means;
    for (std::size_t it = 0; it < iterations; ++it) {
      const auto& batch = a_stream.next();
      std::vector<const PairSample*> pairs;
      if (p_stream) {
        for (std::size_t i : p_stream->next()) pairs.push_back(&in_.pairs->pairs[i]);
      }
      const BatchContext bc{2, epoch, it, batch, pairs};
      audit(2, epoch, it, batch, pairs);

      const Tensor x = windows_tensor(*in_.train, batch);
      std::vector<int> labels(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) labels[i] = in_.train->windows[batch[i]].activity;
      const Tensor z = f.forward(x, bundle.train_context(Block::kFeature, &dropout_rng), &tf);
      const Tensor y = r.forward(z, bundle.train_context(Block::kReconstructor, &dropout_rng), &tr);
      const Tensor p = c.forward(z, bundle.train_context(Block::kClassifier, &dropout_rng), &tc);
      means.add(kRec, finite(loss::reconstruction<float>(y.values(), x.values()), "reconstruction", bc));
      means.add(kCls, finite(loss::classification<float>(p.values(), labels, k), "classification", bc));

      // The discriminator sees latents without a path back into F.
      Tensor dp;
      std::vector<float> d_grad;
      if (identity) {
        std::vector<int> who(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
          const int s_id = in_.train->windows[batch[i]].subject;
          who[i] = static_cast<int>(std::lower_bound(train_subjects_.begin(), train_subjects_.end(), s_id) -
                                    train_subjects_.begin());
        }
        dp = d.forward(z, bundle.train_context(Block::kDiscriminator, &dropout_rng), &td);
        means.add(kDisc, finite(loss::classification<float>(dp.values(), who, train_subjects_.size()), "discrimination", bc));
        d_grad = loss::classification_grad<float>(dp.values(), who, train_subjects_.size());
      } else {
        const Tensor zp = f.forward(windows_tensor(*in_.train, pair_window_indices(pairs)), pair_ctx, nullptr);
        dp = d.forward(join_pairs(zp), bundle.train_context(Block::kDiscriminator, &dropout_rng), &td);
        const std::vector<int> g = pair_flags(pairs);
        means.add(kDisc, finite(loss::discrimination<float>(dp.values(), g), "discrimination", bc));
        d_grad = loss::discrimination_grad<float>(dp.values(), g);
      }

      f.zero_grad();
      r.zero_grad();
      c.zero_grad();
      d.zero_grad();
      const Tensor gz_r = r.backward(from_grad(loss::reconstruction_grad<float>(y.values(), x.values()), y.shape()), tr);
      const Tensor gz_c = c.backward(from_grad(loss::classification_grad<float>(p.values(), labels, k), p.shape()), tc);
      f.backward(add(gz_r, gz_c), tf, {true, false});
      d.backward(from_grad(d_grad, dp.shape()), td, {true, false});
      if (config_.clip_grad_norm) nn::clip_grad_norm({&f, &r, &c}, *config_.clip_grad_norm);
      if (config_.clip_grad_norm) nn::clip_grad_norm({&d}, *config_.clip_grad_norm);
      bundle.apply_update(Block::kFeature, opt_f);
      bundle.apply_update(Block::kReconstructor, opt_r);
      bundle.apply_update(Block::kClassifier, opt_c);
      bundle.apply_update(Block::kDiscriminator, opt_d);
    }
    const Validation v = validate(bundle);
    EpochRecord rec;
    rec.step = 2;
    rec.epoch = epoch;
    rec.reconstruction = means.mean(kRec);
    rec.classification = means.mean(kCls);
    rec.discrimination = means.mean(kDisc);
    rec.val_accuracy = v.accuracy;
    rec.val_f1_weighted = v.f1_weighted;
    rec.disc_val_accuracy = v.disc_accuracy;
    record(rec);
  }
  if (hooks_.on_point) hooks_.on_point(TrainingPoint::kStep2End, bundle);
}

TrainedModel Trainer::step3(ModelBundle& bundle) {
  const StepSchedule& s = config_.step3;
  const bool identity = bundle.config().discriminator == DiscriminatorKind::kIdentity;
  if (!identity && (in_.pairs == nullptr || in_.pairs->pairs.empty())) throw DataError("step 3 needs a pair set");
  if (hooks_.on_point) hooks_.on_point(TrainingPoint::kStep3Begin, bundle);
  nn::Adam opt_f = make_adam(s, Block::kFeature), opt_c = make_adam(s, Block::kClassifier),
           opt_d = make_adam(s, Block::kDiscriminator);
  nn::Network& f = bundle.block(Block::kFeature);
  nn::Network& r = bundle.block(Block::kReconstructor);
  nn::Network& c = bundle.block(Block::kClassifier);
  nn::Network& d = bundle.block(Block::kDiscriminator);
  const std::size_t k = bundle.config().activities;
  const std::size_t subjects = train_subjects_.size();
  std::mt19937_64 dropout_rng(mix_seed({config_.seed, config_.fold, 3, 0xd0}));
  nn::Tape tf, tfp, tr, tc, td;
  const nn::ForwardContext pair_ctx{nn::Phase::kTrain, false, &dropout_rng};

  TrainedModel best;
  best.bundle = bundle;
  best.config = config_;
  bool have_best = false;
  double best_f1 = -1.0, best_gap = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < s.epochs; ++epoch) {
    BatchStream a_stream(in_.train->size(), config_.batch_size_a, mix_seed({config_.seed, config_.fold, 3, epoch, 0}));
    std::optional<BatchStream> p_stream;
    std::size_t iterations = a_stream.batches_per_pass();
    if (!identity) {
      p_stream.emplace(in_.pairs->size(), config_.batch_size_pairs, mix_seed({config_.seed, config_.fold, 3, epoch, 1}));
      iterations = std::max(iterations, p_stream->batches_per_pass());
    }
    LossMeans means;
    for (std::size_t it = 0; it < iterations; ++it) {
      const auto& batch = a_stream.next();
      std::vector<const PairSample*> pairs;
      if (p_stream) {
        for (std::size_t i : p_stream->next()) pairs.push_back(&in_.pairs->pairs[i]);
      }
      const BatchContext bc{3, epoch, it, batch, pairs};
      audit(3, epoch, it, batch, pairs);
      const Tensor x = windows_tensor(*in_.train, batch);
      std::vector<int> labels(batch.size());
      std::vector<int> who(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const Window& w = in_.train->windows[batch[i]];
        labels[i] = w.activity;
        who[i] = static_cast<int>(std::lower_bound(train_subjects_.begin(), train_subjects_.end(), w.subject) -
                                  train_subjects_.begin());
      }
      std::vector<std::size_t> pair_idx;
      std::vector<int> g;
      if (!identity) {
        pair_idx = pair_window_indices(pairs);
        g = pair_flags(pairs);
      }

      // Sub-step 1: F and C against frozen R and D.
      if (hooks_.on_point) hooks_.on_point(TrainingPoint::kGeneratorBegin, bundle);
      bundle.freeze_only({Block::kFeature, Block::kClassifier});
      {
        const Tensor z = f.forward(x, bundle.train_context(Block::kFeature, &dropout_rng), &tf);
        const Tensor y = r.forward(z, bundle.train_context(Block::kReconstructor, &dropout_rng), &tr);
        const Tensor p = c.forward(z, bundle.train_context(Block::kClassifier, &dropout_rng), &tc);
        const double l_r = finite(loss::reconstruction<float>(y.values(), x.values()), "reconstruction", bc);
        const double l_c = finite(loss::classification<float>(p.values(), labels, k), "classification", bc);
        means.add(kRec, l_r);
        means.add(kCls, l_c);
        f.zero_grad();
        c.zero_grad();
        std::vector<float> d_rec = loss::reconstruction_grad<float>(y.values(), x.values());
        for (float& v : d_rec) v *= static_cast<float>(config_.weights.reconstruction);
        std::vector<float> d_cls = loss::classification_grad<float>(p.values(), labels, k);
        for (float& v : d_cls) v *= static_cast<float>(config_.weights.classification);
        Tensor gz = add(r.backward(from_grad(d_rec, y.shape()), tr, {false, true}),
                        c.backward(from_grad(d_cls, p.shape()), tc, {true, true}));
        if (identity) {
          const Tensor dp = d.forward(z, bundle.train_context(Block::kDiscriminator, &dropout_rng), &td);
          means.add(kAdv, finite(loss::uniform_target<float>(dp.values(), subjects), "adversarial", bc));
          std::vector<float> d_adv = loss::uniform_target_grad<float>(dp.values(), subjects);
          for (float& v : d_adv) v *= static_cast<float>(config_.weights.adversarial);
          gz = add(gz, d.backward(from_grad(d_adv, dp.shape()), td, {false, true}));
          f.backward(gz, tf, {true, false});
        } else {
          f.backward(gz, tf, {true, false});
          const Tensor zp = f.forward(windows_tensor(*in_.train, pair_idx), pair_ctx, &tfp);
          const Tensor dp = d.forward(join_pairs(zp), bundle.train_context(Block::kDiscriminator, &dropout_rng), &td);
          means.add(kAdv, finite(loss::adversarial<float>(dp.values(), g), "adversarial", bc));
          std::vector<float> d_adv = loss::adversarial_grad<float>(dp.values(), g);
          for (float& v : d_adv) v *= static_cast<float>(config_.weights.adversarial);
          const Tensor gj = d.backward(from_grad(d_adv, dp.shape()), td, {false, true});
          f.backward(unjoin_pairs(gj), tfp, {true, false});
        }
        if (config_.clip_grad_norm) nn::clip_grad_norm({&f, &c}, *config_.clip_grad_norm);
        bundle.apply_update(Block::kFeature, opt_f);
        bundle.apply_update(Block::kClassifier, opt_c);
      }
      if (hooks_.on_point) hooks_.on_point(TrainingPoint::kGeneratorEnd, bundle);

      // Sub-step 2: D against frozen F and C, on latents of the updated F.
      if (hooks_.on_point) hooks_.on_point(TrainingPoint::kDiscriminatorBegin, bundle);
      bundle.freeze_only({Block::kDiscriminator});
      {
        Tensor dp;
        std::vector<float> d_grad;
        if (identity) {
          const Tensor z = f.forward(x, bundle.train_context(Block::kFeature, &dropout_rng), nullptr);
          dp = d.forward(z, bundle.train_context(Block::kDiscriminator, &dropout_rng), &td);
          means.add(kDisc, finite(loss::classification<float>(dp.values(), who, subjects), "discrimination", bc));
          d_grad = loss::classification_grad<float>(dp.values(), who, subjects);
        } else {
          const Tensor zp = f.forward(windows_tensor(*in_.train, pair_idx), bundle.train_context(Block::kFeature, &dropout_rng), nullptr);
          dp = d.forward(join_pairs(zp), bundle.train_context(Block::kDiscriminator, &dropout_rng), &td);
          means.add(kDisc, finite(loss::discrimination<float>(dp.values(), g), "discrimination", bc));
          d_grad = loss::discrimination_grad<float>(dp.values(), g);
        }
        d.zero_grad();
        d.backward(from_grad(d_grad, dp.shape()), td, {true, false});
        if (config_.clip_grad_norm) nn::clip_grad_norm({&d}, *config_.clip_grad_norm);
        bundle.apply_update(Block::kDiscriminator, opt_d);
      }
      if (hooks_.on_point) hooks_.on_point(TrainingPoint::kDiscriminatorEnd, bundle);
    }

    const Validation v = validate(bundle);
    EpochRecord rec;
    rec.step = 3;
    rec.epoch = epoch;
    rec.reconstruction = means.mean(kRec);
    rec.classification = means.mean(kCls);
    rec.discrimination = means.mean(kDisc);
    rec.adversarial = means.mean(kAdv);
    rec.val_accuracy = v.accuracy;
    rec.val_f1_weighted = v.f1_weighted;
    rec.disc_val_accuracy = v.disc_accuracy;
    record(rec);

    const double f1 = v.f1_weighted.value_or(0.0);
    const double gap = v.disc_accuracy ? std::abs(*v.disc_accuracy - 0.5) : 0.0;
    const bool better = !v.f1_weighted || !have_best || f1 > best_f1 || (f1 == best_f1 && gap < best_gap);
    if (better) {
      have_best = true;
      best_f1 = f1;
      best_gap = gap;
      best.bundle = bundle;
      best.selection = {3, epoch, v.f1_weighted, v.disc_accuracy};
    }
  }
  bundle.freeze_only({Block::kFeature, Block::kClassifier, Block::kDiscriminator});
  best.bundle.freeze_only({Block::kFeature, Block::kReconstructor, Block::kClassifier, Block::kDiscriminator});
  if (hooks_.on_point) hooks_.on_point(TrainingPoint::kStep3End, bundle);
  best.trace = trace_;
  return best;
}

TrainedModel run_training(const FoldInputs& inputs, const ModelConfig& model, const TrainingConfig& config,
                          const TrainingHooks& hooks) {
  ModelBundle bundle(model, mix_seed({config.seed, config.fold}));
  Trainer trainer(config, inputs, hooks);
  trainer.step1(bundle);
  trainer.step2(bundle);
  TrainedModel out = trainer.step3(bundle);
  if (out.selection.step == 0) {
    // No adversarial epochs ran: hand back the state the earlier steps left.
    out.bundle = bundle;
    out.bundle.freeze_only({Block::kFeature, Block::kReconstructor, Block::kClassifier, Block::kDiscriminator});
  }
  out.trace = trainer.trace();
  out.config = config;
  return out;
}

}  // namespace advhar
