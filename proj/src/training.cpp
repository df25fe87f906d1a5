#include "drive/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace drive {

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566666c65ULL;
constexpr std::uint64_t kTrainEncodeStream = 0x747261696e656e63ULL;
constexpr std::uint64_t kEvalEncodeStream = 0x6576616c656e63ULL;

void check_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": length " + std::to_string(a) + " does not match " +
                     std::to_string(b));
  }
}

std::vector<Matrix> per_step(const SpikeBatch& s) {
  std::vector<Matrix> out;
  out.reserve(s.steps);
  for (std::size_t t = 0; t < s.steps; ++t) out.push_back(s.step(t));
  return out;
}

std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out[j] += r[j];
  }
  return out;
}

void add_into(std::vector<double>& acc, const std::vector<double>& v) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("train: patience must be >= 1");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("train: weight decay must be >= 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("train: AdamW betas must be in (0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw std::invalid_argument("train: adam epsilon must be > 0");
}

LossResult ce_rate_loss(const std::vector<Matrix>& outputs, std::span<const int> labels) {
  if (outputs.empty()) throw std::invalid_argument("ce_rate_loss: output has no time steps");
  const std::size_t steps = outputs.size();
  const std::size_t batch = outputs[0].rows();
  const std::size_t classes = outputs[0].cols();
  check_same_length(labels.size(), batch, "ce_rate_loss labels");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::invalid_argument("ce_rate_loss: label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(classes) + ")");
    }
  }

  const double scale = 1.0 / static_cast<double>(steps * batch);
  LossResult r;
  r.grad.reserve(steps);
  double total = 0.0;
  std::vector<double> p(classes);
  for (std::size_t t = 0; t < steps; ++t) {
    const Matrix& out = outputs[t];
    if (out.rows() != batch || out.cols() != classes) {
      throw ShapeError("ce_rate_loss: step " + std::to_string(t) + " is " + out.shape_string());
    }
    Matrix g(batch, classes);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto logits = out.row(b);
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        p[c] = std::exp(logits[c] - mx);
        z += p[c];
      }
      const auto y = static_cast<std::size_t>(labels[b]);
      total += -(logits[y] - mx - std::log(z));
      for (std::size_t c = 0; c < classes; ++c) {
        g(b, c) = (p[c] / z - (c == y ? 1.0 : 0.0)) * scale;
      }
    }
    r.grad.push_back(std::move(g));
  }
  r.loss = total * scale;
  return r;
}

LossResult ce_rate_loss(const SpikeBatch& outputs, std::span<const int> labels) {
  return ce_rate_loss(per_step(outputs), labels);
}

Prediction predict(const std::vector<Matrix>& outputs) {
  if (outputs.empty()) throw std::invalid_argument("predict: output has no time steps");
  const std::size_t batch = outputs[0].rows();
  const std::size_t classes = outputs[0].cols();
  Matrix counts(batch, classes);
  for (const auto& out : outputs) {
    if (out.rows() != batch || out.cols() != classes) throw ShapeError("predict: ragged steps");
    auto dst = counts.values();
    const auto src = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  Prediction pred{std::vector<int>(batch), Matrix(batch, classes)};
  const double steps = static_cast<double>(outputs.size());
  for (std::size_t b = 0; b < batch; ++b) {
    const auto c = counts.row(b);
    std::size_t best = 0;
    for (std::size_t k = 1; k < classes; ++k) {
      if (c[k] > c[best]) best = k;
    }
    pred.classes[b] = static_cast<int>(best);
    const double mx = c[best] / steps;
    double z = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      pred.scores(b, k) = std::exp(c[k] / steps - mx);
      z += pred.scores(b, k);
    }
    for (std::size_t k = 0; k < classes; ++k) pred.scores(b, k) /= z;
  }
  return pred;
}

Prediction predict(const SpikeBatch& outputs) { return predict(per_step(outputs)); }

ModelGrads ModelGrads::zeros_like(const SnnModel& model) {
  ModelGrads g;
  for (std::size_t i = 0; i < kNumLayers; ++i) {
    const auto& l = model.layers[i];
    g.layers[i] = {Matrix(l.in_width(), l.out_width()), std::vector<double>(l.out_width(), 0.0),
                   std::vector<double>(l.out_width(), 0.0),
                   std::vector<double>(l.out_width(), 0.0)};
  }
  return g;
}

ModelGrads backward_pass(const SnnModel& model, const InputBatch& input, const ForwardTrace& trace,
                         const std::vector<Matrix>& grad_output) {
  if (trace.mode != Mode::kTrain) {
    throw std::logic_error("backward_pass: trace was recorded in eval mode");
  }
  const std::size_t steps = input.steps();
  for (const auto& lt : trace.layers) {
    if (lt.pre_membrane.size() != steps || lt.output.size() != steps || lt.bn.size() != steps) {
      throw std::logic_error("backward_pass: trace is missing time steps");
    }
  }
  check_same_length(grad_output.size(), steps, "backward_pass gradient steps");

  ModelGrads grads = ModelGrads::zeros_like(model);
  std::vector<Matrix> upstream = grad_output;
  for (std::size_t i = kNumLayers; i-- > 0;) {
    const auto& layer = model.layers[i];
    const auto& lt = trace.layers[i];
    auto& g = grads.layers[i];
    const auto grad_current = lif_backward(lt.pre_membrane, upstream, model.config.lif);

    std::vector<Matrix> below(i > 0 ? steps : 0);
    for (std::size_t t = steps; t-- > 0;) {
      const auto bn = batchnorm_backward(grad_current[t], lt.bn[t]);
      add_into(g.gamma, bn.grad_gamma);
      add_into(g.beta_shift, bn.grad_beta);
      const Matrix& dz = bn.grad_x;
      if (i == 0) {
        matmul_tn_accumulate(input.step(t), dz, g.weights);
      } else {
        matmul_tn_accumulate(trace.layers[i - 1].output[t], dz, g.weights);
        below[t] = matmul_nt(dz, layer.weights);
      }
      add_into(g.bias, column_sums(dz));
    }
    upstream = std::move(below);
  }
  return grads;
}

std::vector<std::span<double>> parameter_views(SnnModel& model) {
  std::vector<std::span<double>> v;
  for (auto& l : model.layers) {
    v.emplace_back(l.weights.values());
    v.emplace_back(l.bias);
    v.emplace_back(l.bn.gamma);
    v.emplace_back(l.bn.beta_shift);
  }
  return v;
}

std::vector<std::span<const double>> gradient_views(const ModelGrads& grads) {
  std::vector<std::span<const double>> v;
  for (const auto& l : grads.layers) {
    v.emplace_back(l.weights.values());
    v.emplace_back(l.bias);
    v.emplace_back(l.gamma);
    v.emplace_back(l.beta_shift);
  }
  return v;
}

void sgd_step(std::span<double> theta, std::span<const double> grad, double eta) {
  check_same_length(theta.size(), grad.size(), "sgd_step");
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= eta * grad[i];
}

void sgd_step(SnnModel& model, const ModelGrads& grads, double eta) {
  const auto theta = parameter_views(model);
  const auto g = gradient_views(grads);
  for (std::size_t k = 0; k < theta.size(); ++k) sgd_step(theta[k], g[k], eta);
}

void adamw_step(std::span<const std::span<double>> theta,
                std::span<const std::span<const double>> grad, AdamWState& state,
                const TrainConfig& cfg) {
  check_same_length(theta.size(), grad.size(), "adamw_step tensors");
  if (state.m.empty() && state.v.empty()) {
    for (const auto& p : theta) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  check_same_length(state.m.size(), theta.size(), "adamw_step state");
  check_same_length(state.v.size(), theta.size(), "adamw_step state");
  for (std::size_t k = 0; k < theta.size(); ++k) {
    check_same_length(theta[k].size(), grad[k].size(), "adamw_step");
    check_same_length(state.m[k].size(), theta[k].size(), "adamw_step state");
    check_same_length(state.v[k].size(), theta[k].size(), "adamw_step state");
  }

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correct1 = 1.0 - std::pow(cfg.beta1, t);
  const double correct2 = 1.0 - std::pow(cfg.beta2, t);
  const double lr = cfg.learning_rate;
  const double decay = lr * cfg.weight_decay;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    auto p = theta[k];
    const auto g = grad[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      p[i] = p[i] - lr * m_hat / std::sqrt(v_hat + cfg.adam_epsilon) - decay * p[i];
    }
  }
}

void adamw_step(SnnModel& model, const ModelGrads& grads, AdamWState& state,
                const TrainConfig& cfg) {
  const auto theta = parameter_views(model);
  const auto g = gradient_views(grads);
  adamw_step(theta, g, state, cfg);
}

EncoderConfig train_encoder(const TrainConfig& cfg, const ModelConfig& model, std::size_t epoch,
                            std::size_t batch) {
  return {cfg.encoding, model.num_steps,
          mix_seed(mix_seed(mix_seed(cfg.seed, kTrainEncodeStream), epoch), batch)};
}

EncoderConfig eval_encoder(const TrainConfig& cfg, const ModelConfig& model, std::size_t batch) {
  return {cfg.encoding, model.num_steps, mix_seed(mix_seed(cfg.seed, kEvalEncodeStream), batch)};
}

namespace {

struct BatchView {
  std::vector<const ImageSample*> samples;
  std::vector<int> labels;
};

BatchView gather(const Dataset& ds, const std::vector<std::size_t>& idx) {
  BatchView v;
  v.samples.reserve(idx.size());
  v.labels.reserve(idx.size());
  for (auto i : idx) {
    v.samples.push_back(&ds.samples[i]);
    v.labels.push_back(ds.samples[i].label);
  }
  return v;
}

std::size_t count_correct(const std::vector<int>& pred, const std::vector<int>& labels) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) n += pred[i] == labels[i] ? 1 : 0;
  return n;
}

}  // namespace

EpochMetrics train_epoch(SnnModel& model, const Dataset& train, AdamWState& opt,
                         const TrainConfig& cfg, std::size_t epoch) {
  if (train.empty()) throw std::invalid_argument("train_epoch: training set is empty");
  const BatchSampler sampler(train.size(), cfg.batch_size, mix_seed(cfg.seed, kShuffleStream),
                             true);
  const auto batches = sampler.epoch(epoch);

  double loss_sum = 0.0;
  std::size_t correct = 0, seen = 0;
  for (std::size_t k = 0; k < batches.size(); ++k) {
    if (batches[k].size() < 2) continue;
    const auto batch = gather(train, batches[k]);
    const auto input = rate_encode(batch.samples, train_encoder(cfg, model.config, epoch, k));
    const auto trace = forward_pass(model, input, Mode::kTrain);
    const auto loss = ce_rate_loss(trace.outputs(), batch.labels);
    const auto grads = backward_pass(model, input, trace, loss.grad);
    adamw_step(model, grads, opt, cfg);

    loss_sum += loss.loss * static_cast<double>(batch.labels.size());
    correct += count_correct(predict(trace.outputs()).classes, batch.labels);
    seen += batch.labels.size();
  }
  if (seen == 0) {
    throw std::invalid_argument("train_epoch: batch norm needs at least two samples per batch");
  }
  return {loss_sum / static_cast<double>(seen),
          static_cast<double>(correct) / static_cast<double>(seen)};
}

EvalResult evaluate_detailed(const SnnModel& model, const Dataset& ds, const TrainConfig& cfg) {
  if (ds.empty()) throw std::invalid_argument("evaluate: dataset is empty");
  const BatchSampler sampler(ds.size(), cfg.batch_size, 0, false);
  const auto batches = sampler.epoch(0);

  EvalResult r;
  double loss_sum = 0.0;
  for (std::size_t k = 0; k < batches.size(); ++k) {
    const auto batch = gather(ds, batches[k]);
    const auto input = rate_encode(batch.samples, eval_encoder(cfg, model.config, k));
    const auto trace = forward_pass(model, input, Mode::kEval);
    const auto loss = ce_rate_loss(trace.outputs(), batch.labels);
    const auto pred = predict(trace.outputs());
    loss_sum += loss.loss * static_cast<double>(batch.labels.size());
    for (std::size_t b = 0; b < batch.labels.size(); ++b) {
      r.labels.push_back(batch.labels[b]);
      r.predictions.push_back(pred.classes[b]);
      r.positive_scores.push_back(pred.scores(b, kVehicle));
    }
  }
  const auto n = static_cast<double>(r.labels.size());
  r.loss = loss_sum / n;
  r.accuracy = static_cast<double>(count_correct(r.predictions, r.labels)) / n;
  return r;
}

EpochMetrics evaluate(const SnnModel& model, const Dataset& ds, const TrainConfig& cfg) {
  const auto r = evaluate_detailed(model, ds, cfg);
  return {r.loss, r.accuracy};
}

EarlyStopping::EarlyStopping(std::size_t patience)
    : patience_(patience), best_loss_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw std::invalid_argument("early stopping: patience must be >= 1");
}

bool EarlyStopping::observe(std::size_t epoch, double loss, const SnnModel& model) {
  if (loss < best_loss_) {
    best_loss_ = loss;
    best_epoch_ = epoch;
    since_ = 0;
    snapshot_ = model;
  } else {
    ++since_;
  }
  return since_ >= patience_;
}

TrainReport run_training_loop(SnnModel& model, std::size_t epochs, std::size_t patience,
                              const EpochFn& train, const EpochFn& test,
                              const EpochCallback& on_epoch) {
  if (epochs < 1) throw std::invalid_argument("training loop: epochs must be >= 1");
  EarlyStopping stopper(patience);
  TrainReport report;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const auto tr = train(epoch);
    const auto te = test(epoch);
    report.train_loss.push_back(tr.loss);
    report.train_accuracy.push_back(tr.accuracy);
    report.test_loss.push_back(te.loss);
    report.test_accuracy.push_back(te.accuracy);
    report.stopped_epoch = epoch;
    if (on_epoch) on_epoch(epoch, tr, te);
    if (stopper.observe(epoch, te.loss, model)) {
      report.early_stopped = true;
      break;
    }
  }
  if (stopper.best_snapshot()) model = *stopper.best_snapshot();
  report.best_epoch = stopper.best_epoch();
  report.best_test_loss = stopper.best_loss();
  return report;
}

TrainReport fit(SnnModel& model, const Dataset& train, const Dataset& test,
                const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  model.validate();
  if (train.empty() || test.empty()) throw std::invalid_argument("fit: empty train or test set");
  AdamWState opt;
  return run_training_loop(
      model, cfg.epochs, cfg.patience,
      [&](std::size_t epoch) { return train_epoch(model, train, opt, cfg, epoch); },
      [&](std::size_t) { return evaluate(model, test, cfg); }, on_epoch);
}

}  // namespace drive
