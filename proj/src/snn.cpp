#include "drive/snn.hpp"

#include <cmath>
#include <string>

namespace drive {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape " + a.shape_string() + " does not match " +
                     b.shape_string());
  }
}

std::string layer_name(std::size_t i) {
  return i + 1 == kNumLayers ? "output layer" : "hidden layer " + std::to_string(i + 1);
}

}  // namespace

void LifConfig::validate() const {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("lif: beta must be in (0, 1)");
  if (!(threshold > 0.0)) throw std::invalid_argument("lif: threshold must be > 0");
  if (!(surrogate_slope > 0.0)) throw std::invalid_argument("lif: surrogate slope must be > 0");
}

LifStepResult lif_step(const LifLayerState& state, const Matrix& input_current,
                       const LifConfig& cfg) {
  require_same_shape(state.membrane, input_current, "lif_step");
  LifStepResult r{Matrix(input_current.rows(), input_current.cols()),
                  Matrix(input_current.rows(), input_current.cols()),
                  LifLayerState{Matrix(input_current.rows(), input_current.cols())}};
  const auto v = state.membrane.values();
  const auto in = input_current.values();
  auto pre = r.pre_membrane.values();
  auto spk = r.spikes.values();
  auto next = r.state.membrane.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    pre[i] = cfg.beta * v[i] + in[i];
    spk[i] = pre[i] >= cfg.threshold ? 1.0 : 0.0;
    next[i] = pre[i] - spk[i] * cfg.threshold;
  }
  if (!r.state.membrane.all_finite()) throw NumericError("lif_step: membrane became non-finite");
  return r;
}

double surrogate_grad(double u, double slope) {
  const double d = 1.0 / (1.0 + slope * std::abs(u));
  return d * d;
}

double relaxed_spike(double u, double slope) { return u / (1.0 + slope * std::abs(u)); }

std::vector<Matrix> lif_backward(const std::vector<Matrix>& pre_membrane,
                                 const std::vector<Matrix>& grad_output, const LifConfig& cfg,
                                 const Matrix* grad_final_membrane) {
  if (pre_membrane.size() != grad_output.size()) {
    throw ShapeError("lif_backward: " + std::to_string(pre_membrane.size()) +
                     " recorded steps but " + std::to_string(grad_output.size()) + " gradients");
  }
  const std::size_t steps = pre_membrane.size();
  std::vector<Matrix> grad_input(steps);
  if (steps == 0) return grad_input;

  Matrix carry(pre_membrane.back().rows(), pre_membrane.back().cols());
  if (grad_final_membrane != nullptr) {
    require_same_shape(carry, *grad_final_membrane, "lif_backward final membrane");
    carry = *grad_final_membrane;
  }
  for (std::size_t t = steps; t-- > 0;) {
    require_same_shape(pre_membrane[t], grad_output[t], "lif_backward");
    require_same_shape(pre_membrane[t], carry, "lif_backward");
    Matrix g(carry.rows(), carry.cols());
    const auto pre = pre_membrane[t].values();
    const auto dout = grad_output[t].values();
    const auto c = carry.values();
    auto gv = g.values();
    for (std::size_t i = 0; i < gv.size(); ++i) {
      gv[i] = dout[i] * surrogate_grad(pre[i] - cfg.threshold, cfg.surrogate_slope) + c[i];
    }
    auto cv = carry.values();
    for (std::size_t i = 0; i < gv.size(); ++i) cv[i] = cfg.beta * gv[i];
    grad_input[t] = std::move(g);
  }
  return grad_input;
}

BatchNormParams BatchNormParams::identity(std::size_t width) {
  BatchNormParams p;
  p.gamma.assign(width, 1.0);
  p.beta_shift.assign(width, 0.0);
  p.running_mean.assign(width, 0.0);
  p.running_var.assign(width, 1.0);
  return p;
}

void BatchNormParams::validate() const {
  const std::size_t w = gamma.size();
  if (beta_shift.size() != w || running_mean.size() != w || running_var.size() != w) {
    throw ShapeError("batchnorm: parameter vectors differ in length");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("batchnorm: epsilon must be > 0");
  if (!(momentum > 0.0 && momentum <= 1.0)) {
    throw std::invalid_argument("batchnorm: momentum must be in (0, 1]");
  }
}

BatchNormResult batchnorm_forward(const Matrix& x, BatchNormParams& params, Mode mode) {
  return batchnorm_forward(x, params, mode, &params);
}

BatchNormResult batchnorm_forward(const Matrix& x, const BatchNormParams& params, Mode mode,
                                  BatchNormParams* running_sink) {
  const std::size_t n = x.rows();
  const std::size_t w = x.cols();
  if (w != params.width()) {
    throw ShapeError("batchnorm: input has " + std::to_string(w) + " features, parameters have " +
                     std::to_string(params.width()));
  }
  if (mode == Mode::kTrain && n < 2) {
    throw DegenerateBatchError("batchnorm: train mode needs a batch of at least 2, got " +
                               std::to_string(n));
  }

  BatchNormResult r{Matrix(n, w), BatchNormCache{mode, Matrix(n, w), std::vector<double>(w),
                                                 params.gamma}};
  std::vector<double> mean(w, 0.0), var(w, 0.0);
  if (mode == Mode::kTrain) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < w; ++j) mean[j] += x(i, j);
    }
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const double d = x(i, j) - mean[j];
        var[j] += d * d;
      }
    }
    for (auto& v : var) v /= static_cast<double>(n);
    if (running_sink != nullptr) {
      const double m = params.momentum;
      for (std::size_t j = 0; j < w; ++j) {
        running_sink->running_mean[j] = (1.0 - m) * running_sink->running_mean[j] + m * mean[j];
        running_sink->running_var[j] = (1.0 - m) * running_sink->running_var[j] + m * var[j];
      }
    }
  } else {
    mean = params.running_mean;
    var = params.running_var;
  }

  for (std::size_t j = 0; j < w; ++j) {
    r.cache.inv_std[j] = 1.0 / std::sqrt(var[j] + params.epsilon);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double xhat = (x(i, j) - mean[j]) * r.cache.inv_std[j];
      r.cache.normalized(i, j) = xhat;
      r.output(i, j) = params.gamma[j] * xhat + params.beta_shift[j];
    }
  }
  return r;
}

BatchNormGrads batchnorm_backward(const Matrix& grad_y, const BatchNormCache& cache) {
  if (cache.mode != Mode::kTrain) {
    throw std::logic_error("batchnorm_backward: cache comes from an eval-mode forward");
  }
  require_same_shape(grad_y, cache.normalized, "batchnorm_backward");
  const std::size_t n = grad_y.rows();
  const std::size_t w = grad_y.cols();
  BatchNormGrads g{Matrix(n, w), std::vector<double>(w, 0.0), std::vector<double>(w, 0.0)};

  // sum(dxhat) and sum(dxhat * xhat) per feature
  std::vector<double> sum_d(w, 0.0), sum_dx(w, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double dy = grad_y(i, j);
      const double xhat = cache.normalized(i, j);
      g.grad_beta[j] += dy;
      g.grad_gamma[j] += dy * xhat;
      const double dxhat = dy * cache.gamma[j];
      sum_d[j] += dxhat;
      sum_dx[j] += dxhat * xhat;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double dxhat = grad_y(i, j) * cache.gamma[j];
      g.grad_x(i, j) = cache.inv_std[j] * inv_n *
                       (static_cast<double>(n) * dxhat - sum_d[j] -
                        cache.normalized(i, j) * sum_dx[j]);
    }
  }
  return g;
}

void ModelConfig::validate() const {
  if (input_size == 0 || hidden_size == 0) {
    throw std::invalid_argument("model: layer widths must be >= 1");
  }
  if (num_classes < 2) throw std::invalid_argument("model: need at least 2 classes");
  if (num_steps < 1) throw std::invalid_argument("model: num_steps must be >= 1");
  lif.validate();
}

std::size_t ModelConfig::layer_in(std::size_t i) const {
  return i == 0 ? input_size : hidden_size;
}

std::size_t ModelConfig::layer_out(std::size_t i) const {
  return i + 1 == kNumLayers ? num_classes : hidden_size;
}

SnnModel SnnModel::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  SnnModel m;
  m.config = config;
  Rng rng(seed);
  for (std::size_t i = 0; i < kNumLayers; ++i) {
    auto& layer = m.layers[i];
    layer.weights = init_weights(rng, config.layer_in(i), config.layer_out(i));
    layer.bias.assign(config.layer_out(i), 0.0);
    layer.bn = BatchNormParams::identity(config.layer_out(i));
  }
  return m;
}

void SnnModel::validate() const {
  config.validate();
  for (std::size_t i = 0; i < kNumLayers; ++i) {
    const auto& layer = layers[i];
    if (layer.in_width() != config.layer_in(i) || layer.out_width() != config.layer_out(i) ||
        layer.bias.size() != config.layer_out(i) || layer.bn.width() != config.layer_out(i)) {
      throw ShapeError(layer_name(i) + ": parameter shapes do not match the model config");
    }
    layer.bn.validate();
  }
}

std::size_t SnnModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size() + 2 * l.bn.width();
  return n;
}

Matrix SpikeBatch::step(std::size_t t) const {
  Matrix m(batch, neurons);
  const std::uint8_t* src = bits.data() + t * batch * neurons;
  auto dst = m.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i];
  return m;
}

Matrix SpikeBatch::counts() const {
  Matrix m(batch, neurons);
  auto dst = m.values();
  for (std::size_t t = 0; t < steps; ++t) {
    const std::uint8_t* src = bits.data() + t * batch * neurons;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  return m;
}

SpikeBatch to_spike_batch(const std::vector<Matrix>& steps) {
  if (steps.empty()) return {};
  SpikeBatch s(steps.size(), steps[0].rows(), steps[0].cols());
  for (std::size_t t = 0; t < steps.size(); ++t) {
    require_same_shape(steps[0], steps[t], "to_spike_batch");
    const auto v = steps[t].values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] != 0.0 && v[i] != 1.0) {
        throw std::invalid_argument("to_spike_batch: value " + std::to_string(v[i]) +
                                    " is not a spike");
      }
      s.bits[t * v.size() + i] = static_cast<std::uint8_t>(v[i]);
    }
  }
  return s;
}

InputBatch InputBatch::spikes(SpikeBatch s) {
  InputBatch b;
  b.spiking_ = true;
  b.steps_ = s.steps;
  b.batch_ = s.batch;
  b.width_ = s.neurons;
  b.spikes_ = std::move(s);
  return b;
}

InputBatch InputBatch::constant_current(Matrix current, std::size_t steps) {
  InputBatch b;
  b.spiking_ = false;
  b.steps_ = steps;
  b.batch_ = current.rows();
  b.width_ = current.cols();
  b.current_ = std::move(current);
  return b;
}

Matrix InputBatch::step(std::size_t t) const {
  if (t >= steps_) throw std::out_of_range("InputBatch::step: step out of range");
  return spiking_ ? spikes_.step(t) : current_;
}

namespace {

ForwardTrace run_forward(const SnnModel& model, const InputBatch& input, Mode mode,
                         SpikeOutput output, SnnModel* stats_sink) {
  const auto& cfg = model.config;
  if (input.width() != cfg.input_size) {
    throw ShapeError("forward_pass: input has " + std::to_string(input.width()) +
                     " neurons, model expects " + std::to_string(cfg.input_size));
  }
  if (input.steps() < 1) throw std::invalid_argument("forward_pass: input has no time steps");
  for (std::size_t i = 0; i < kNumLayers; ++i) {
    const auto& layer = model.layers[i];
    if (layer.in_width() != cfg.layer_in(i) || layer.out_width() != cfg.layer_out(i) ||
        layer.bias.size() != layer.out_width() || layer.bn.width() != layer.out_width()) {
      throw ShapeError("forward_pass: " + layer_name(i) + " weights are " +
                       layer.weights.shape_string() + ", expected " +
                       std::to_string(cfg.layer_in(i)) + "x" + std::to_string(cfg.layer_out(i)));
    }
  }

  const std::size_t steps = input.steps();
  const std::size_t batch = input.batch();
  const auto& lif = cfg.lif;

  ForwardTrace trace;
  trace.mode = mode;
  std::array<LifLayerState, kNumLayers> states;
  for (std::size_t i = 0; i < kNumLayers; ++i) {
    states[i] = LifLayerState::zeros(batch, cfg.layer_out(i));
    trace.layers[i].pre_membrane.reserve(steps);
    trace.layers[i].output.reserve(steps);
    trace.layers[i].bn.reserve(steps);
  }

  for (std::size_t t = 0; t < steps; ++t) {
    Matrix x = input.step(t);
    for (std::size_t i = 0; i < kNumLayers; ++i) {
      const auto& layer = model.layers[i];
      Matrix z = matmul(x, layer.weights);
      for (std::size_t b = 0; b < batch; ++b) {
        auto row = z.row(b);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += layer.bias[j];
      }
      auto bn = batchnorm_forward(z, layer.bn, mode,
                                  stats_sink != nullptr ? &stats_sink->layers[i].bn : nullptr);
      auto step = lif_step(states[i], bn.output, lif);
      if (output == SpikeOutput::kRelaxed) {
        auto pre = step.pre_membrane.values();
        auto spk = step.spikes.values();
        for (std::size_t k = 0; k < spk.size(); ++k) {
          spk[k] = relaxed_spike(pre[k] - lif.threshold, lif.surrogate_slope);
        }
      }
      states[i] = std::move(step.state);
      auto& lt = trace.layers[i];
      lt.bn.push_back(std::move(bn.cache));
      lt.pre_membrane.push_back(std::move(step.pre_membrane));
      lt.output.push_back(std::move(step.spikes));
      x = lt.output.back();
    }
  }
  return trace;
}

}  // namespace

ForwardTrace forward_pass(SnnModel& model, const InputBatch& input, Mode mode, SpikeOutput output) {
  return run_forward(model, input, mode, output, mode == Mode::kTrain ? &model : nullptr);
}

ForwardTrace forward_pass(const SnnModel& model, const InputBatch& input, Mode mode,
                          SpikeOutput output) {
  if (mode != Mode::kEval) {
    throw std::logic_error("forward_pass: a read-only model can only run in eval mode");
  }
  return run_forward(model, input, mode, output, nullptr);
}

}  // namespace drive
