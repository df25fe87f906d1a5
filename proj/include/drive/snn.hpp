#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "drive/numerics.hpp"

namespace drive {

/// Leaky integrate-and-fire parameters shared by every layer.
struct LifConfig {
  double beta = 0.95;            // membrane decay per step
  double threshold = 1.0;        // firing threshold
  double surrogate_slope = 1.0;  // k in (1 / (1 + k|u|))^2

  void validate() const;
};

struct LifLayerState {
  Matrix membrane;  // batch x neurons

  static LifLayerState zeros(std::size_t batch, std::size_t neurons) {
    return {Matrix(batch, neurons)};
  }
};

struct LifStepResult {
  Matrix spikes;
  Matrix pre_membrane;  // beta * V_{t-1} + I_t, before reset
  LifLayerState state;
};

/// One LIF update with reset-by-subtract. Fires when the pre-reset
/// membrane reaches the threshold (inclusive).
LifStepResult lif_step(const LifLayerState& state, const Matrix& input_current,
                       const LifConfig& cfg);

/// Fast-sigmoid surrogate derivative, (1 / (1 + slope*|u|))^2, where u is
/// the membrane potential measured from the threshold.
double surrogate_grad(double u, double slope);

/// Smooth stand-in for the spike whose derivative is exactly surrogate_grad.
double relaxed_spike(double u, double slope);

/// Backpropagates through T unrolled steps of one LIF layer.
///
/// `pre_membrane[t]` is the recorded pre-reset potential and
/// `grad_output[t]` the loss gradient w.r.t. the layer output at step t.
/// The reset path is detached, so dV_pre_t = dS_t * sg(V_pre_t - thr) +
/// beta * dV_pre_{t+1}. An optional seed gradient on the final membrane
/// enters at t = T-1. Returns the gradient w.r.t. each step's input current.
std::vector<Matrix> lif_backward(const std::vector<Matrix>& pre_membrane,
                                 const std::vector<Matrix>& grad_output, const LifConfig& cfg,
                                 const Matrix* grad_final_membrane = nullptr);

enum class Mode { kTrain, kEval };

class DegenerateBatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Per-feature normalization over the batch dimension followed by an affine map.
struct BatchNormParams {
  std::vector<double> gamma;
  std::vector<double> beta_shift;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  /// gamma = 1, shift = 0, running mean 0, running variance 1.
  static BatchNormParams identity(std::size_t width);
  std::size_t width() const { return gamma.size(); }
  void validate() const;
};

struct BatchNormCache {
  Mode mode = Mode::kEval;
  Matrix normalized;            // x_hat
  std::vector<double> inv_std;  // 1 / sqrt(var + eps) per feature
  std::vector<double> gamma;
};

struct BatchNormResult {
  Matrix output;
  BatchNormCache cache;
};

/// Train mode normalizes with biased batch statistics and folds them into
/// the running estimates. Eval mode reads the running estimates only.
/// Throws DegenerateBatchError in train mode when the batch has fewer than two rows.
BatchNormResult batchnorm_forward(const Matrix& x, BatchNormParams& params, Mode mode);

/// Same transform with the running-statistics update redirected to
/// `running_sink` (ignored in eval mode, may be null).
BatchNormResult batchnorm_forward(const Matrix& x, const BatchNormParams& params, Mode mode,
                                  BatchNormParams* running_sink);

struct BatchNormGrads {
  Matrix grad_x;
  std::vector<double> grad_gamma;
  std::vector<double> grad_beta;
};

/// Exact gradients of the train-mode transform. Throws std::logic_error
/// for an eval-mode cache.
BatchNormGrads batchnorm_backward(const Matrix& grad_y, const BatchNormCache& cache);

struct LayerParams {
  Matrix weights;            // in_width x out_width
  std::vector<double> bias;  // out_width
  BatchNormParams bn;

  std::size_t in_width() const { return weights.rows(); }
  std::size_t out_width() const { return weights.cols(); }
  bool operator==(const LayerParams& o) const {
    return weights == o.weights && bias == o.bias && bn.gamma == o.bn.gamma &&
           bn.beta_shift == o.bn.beta_shift && bn.running_mean == o.bn.running_mean &&
           bn.running_var == o.bn.running_var && bn.momentum == o.bn.momentum &&
           bn.epsilon == o.bn.epsilon;
  }
};

inline constexpr std::size_t kNumLayers = 3;

struct ModelConfig {
  std::size_t input_size = 128 * 128;
  std::size_t hidden_size = 64;
  std::size_t num_classes = 2;
  std::size_t num_steps = 50;
  LifConfig lif;

  void validate() const;
  /// Input and output width of layer `i` in the fixed three-layer stack.
  std::size_t layer_in(std::size_t i) const;
  std::size_t layer_out(std::size_t i) const;
};

/// Linear -> BatchNorm -> LIF, three times.
struct SnnModel {
  ModelConfig config;
  std::array<LayerParams, kNumLayers> layers;

  /// Weights uniform +-1/sqrt(fan_in), zero biases, identity batch norm.
  static SnnModel initialize(const ModelConfig& config, std::uint64_t seed);
  void validate() const;
  std::size_t parameter_count() const;

  bool operator==(const SnnModel& o) const { return layers == o.layers; }
};

/// Binary tensor indexed [t][b][n].
struct SpikeBatch {
  std::size_t steps = 0;
  std::size_t batch = 0;
  std::size_t neurons = 0;
  std::vector<std::uint8_t> bits;

  SpikeBatch() = default;
  SpikeBatch(std::size_t steps, std::size_t batch, std::size_t neurons)
      : steps(steps), batch(batch), neurons(neurons), bits(steps * batch * neurons, 0) {}

  std::uint8_t& at(std::size_t t, std::size_t b, std::size_t n) {
    return bits[(t * batch + b) * neurons + n];
  }
  std::uint8_t at(std::size_t t, std::size_t b, std::size_t n) const {
    return bits[(t * batch + b) * neurons + n];
  }
  /// The batch x neurons slice at step t as reals.
  Matrix step(std::size_t t) const;
  /// Total spikes per (sample, neuron) across all steps.
  Matrix counts() const;
};

/// Converts per-step output matrices into a SpikeBatch. Throws if any
/// value is not exactly 0 or 1.
SpikeBatch to_spike_batch(const std::vector<Matrix>& steps);

/// Network input over the simulation window: either binary spikes or a
/// real-valued current presented unchanged at every step.
class InputBatch {
 public:
  static InputBatch spikes(SpikeBatch s);
  static InputBatch constant_current(Matrix current, std::size_t steps);

  std::size_t steps() const { return steps_; }
  std::size_t batch() const { return batch_; }
  std::size_t width() const { return width_; }
  bool is_spiking() const { return spiking_; }

  Matrix step(std::size_t t) const;
  const SpikeBatch& spike_data() const { return spikes_; }

 private:
  bool spiking_ = true;
  std::size_t steps_ = 0, batch_ = 0, width_ = 0;
  SpikeBatch spikes_;
  Matrix current_;
};

/// kBinary emits Heaviside spikes. kRelaxed emits relaxed_spike(u) instead,
/// keeping the reset on the hard spike; used to verify gradients against
/// finite differences on a fully differentiable forward.
enum class SpikeOutput { kBinary, kRelaxed };

struct LayerTrace {
  std::vector<Matrix> pre_membrane;  // per step
  std::vector<Matrix> output;        // per step
  std::vector<BatchNormCache> bn;    // per step
};

struct ForwardTrace {
  Mode mode = Mode::kEval;
  std::array<LayerTrace, kNumLayers> layers;

  /// Per-step output of the last layer, each batch x num_classes.
  const std::vector<Matrix>& outputs() const { return layers.back().output; }
};

/// Runs the unrolled network from zeroed membranes. Train mode updates the
/// batch norm running statistics of `model`.
ForwardTrace forward_pass(SnnModel& model, const InputBatch& input, Mode mode,
                          SpikeOutput output = SpikeOutput::kBinary);

/// Read-only variant; `mode` must be kEval.
ForwardTrace forward_pass(const SnnModel& model, const InputBatch& input, Mode mode,
                          SpikeOutput output = SpikeOutput::kBinary);

}  // namespace drive
