#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "drive/data.hpp"
#include "drive/snn.hpp"

namespace drive {

struct TrainConfig {
  std::size_t batch_size = 30;
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::size_t patience = 5;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 42;
  EncodingMode encoding = EncodingMode::kRate;

  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  std::vector<Matrix> grad;  // d loss / d output, per step
};

/// Softmax cross entropy of the label against each step's output vector,
/// averaged over steps and samples.
LossResult ce_rate_loss(const std::vector<Matrix>& outputs, std::span<const int> labels);
LossResult ce_rate_loss(const SpikeBatch& outputs, std::span<const int> labels);

struct Prediction {
  std::vector<int> classes;
  Matrix scores;  // batch x classes, softmax of count / T
};

/// Argmax of total output spikes (ties go to the lower class index).
Prediction predict(const std::vector<Matrix>& outputs);
Prediction predict(const SpikeBatch& outputs);

struct LayerGrads {
  Matrix weights;
  std::vector<double> bias;
  std::vector<double> gamma;
  std::vector<double> beta_shift;
};

struct ModelGrads {
  std::array<LayerGrads, kNumLayers> layers;

  static ModelGrads zeros_like(const SnnModel& model);
};

/// Surrogate-gradient BPTT through the recorded train-mode trace. The
/// reset path is detached. Accumulation runs layer by layer from the
/// output, each layer from the last step to the first.
ModelGrads backward_pass(const SnnModel& model, const InputBatch& input, const ForwardTrace& trace,
                         const std::vector<Matrix>& grad_output);

/// Trainable tensors in a fixed order: per layer weights, bias, gamma, shift.
std::vector<std::span<double>> parameter_views(SnnModel& model);
std::vector<std::span<const double>> gradient_views(const ModelGrads& grads);

/// theta -= eta * grad
void sgd_step(std::span<double> theta, std::span<const double> grad, double eta);
void sgd_step(SnnModel& model, const ModelGrads& grads, double eta);

struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

/// One AdamW update over every tensor. The state is sized on first use.
/// theta <- theta - lr * m_hat / sqrt(v_hat + eps) - lr * weight_decay * theta
void adamw_step(std::span<const std::span<double>> theta,
                std::span<const std::span<const double>> grad, AdamWState& state,
                const TrainConfig& cfg);
void adamw_step(SnnModel& model, const ModelGrads& grads, AdamWState& state,
                const TrainConfig& cfg);

struct EpochMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Encoder settings for a given batch. Training batches draw from
/// (seed, epoch, batch); evaluation batches from (seed, batch) only.
EncoderConfig train_encoder(const TrainConfig& cfg, const ModelConfig& model, std::size_t epoch,
                            std::size_t batch);
EncoderConfig eval_encoder(const TrainConfig& cfg, const ModelConfig& model, std::size_t batch);

/// One pass over shuffled batches: forward, loss, BPTT, AdamW. A trailing
/// batch of one sample is skipped since batch norm cannot train on it.
EpochMetrics train_epoch(SnnModel& model, const Dataset& train, AdamWState& opt,
                         const TrainConfig& cfg, std::size_t epoch);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> labels;
  std::vector<int> predictions;
  std::vector<double> positive_scores;
};

/// Eval-mode pass; leaves the model untouched.
EvalResult evaluate_detailed(const SnnModel& model, const Dataset& ds, const TrainConfig& cfg);
EpochMetrics evaluate(const SnnModel& model, const Dataset& ds, const TrainConfig& cfg);

/// Tracks the best monitored loss and a snapshot of the model that produced it.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  /// Records an epoch's loss; returns true when training should stop.
  bool observe(std::size_t epoch, double loss, const SnnModel& model);

  double best_loss() const { return best_loss_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t epochs_since_improvement() const { return since_; }
  const std::optional<SnnModel>& best_snapshot() const { return snapshot_; }

 private:
  std::size_t patience_;
  double best_loss_;
  std::size_t best_epoch_ = 0;
  std::size_t since_ = 0;
  std::optional<SnnModel> snapshot_;
};

struct TrainReport {
  std::vector<double> train_loss, train_accuracy;
  std::vector<double> test_loss, test_accuracy;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
  double best_test_loss = 0.0;
  bool early_stopped = false;
};

using EpochFn = std::function<EpochMetrics(std::size_t epoch)>;
/// Called after each epoch with (epoch, train, test).
using EpochCallback =
    std::function<void(std::size_t, const EpochMetrics&, const EpochMetrics&)>;

/// Epoch loop with early stopping on the test loss. Epochs are numbered
/// from 1. On return `model` holds the best snapshot.
TrainReport run_training_loop(SnnModel& model, std::size_t epochs, std::size_t patience,
                              const EpochFn& train, const EpochFn& test,
                              const EpochCallback& on_epoch = {});

/// Trains with AdamW and restores the model with the lowest test loss.
TrainReport fit(SnnModel& model, const Dataset& train, const Dataset& test,
                const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace drive
