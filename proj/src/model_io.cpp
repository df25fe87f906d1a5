#include "drive/model_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace drive {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.values().begin(), m.values().end())}};
}

Matrix matrix_from_json(const json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

}  // namespace

std::string serialize_model(const ModelFile& file) {
  const auto& mc = file.model.config;
  const auto& tc = file.train;
  json layers = json::array();
  for (const auto& l : file.model.layers) {
    layers.push_back({{"weights", matrix_to_json(l.weights)},
                      {"bias", l.bias},
                      {"batch_norm",
                       {{"gamma", l.bn.gamma},
                        {"beta_shift", l.bn.beta_shift},
                        {"running_mean", l.bn.running_mean},
                        {"running_var", l.bn.running_var},
                        {"momentum", l.bn.momentum},
                        {"epsilon", l.bn.epsilon}}}});
  }
  const json doc = {
      {"format_version", file.format_version},
      {"model_config",
       {{"input_size", mc.input_size},
        {"hidden_size", mc.hidden_size},
        {"num_classes", mc.num_classes},
        {"num_steps", mc.num_steps},
        {"lif",
         {{"beta", mc.lif.beta},
          {"threshold", mc.lif.threshold},
          {"surrogate_slope", mc.lif.surrogate_slope}}}}},
      {"train_config",
       {{"batch_size", tc.batch_size},
        {"learning_rate", tc.learning_rate},
        {"epochs", tc.epochs},
        {"patience", tc.patience},
        {"weight_decay", tc.weight_decay},
        {"beta1", tc.beta1},
        {"beta2", tc.beta2},
        {"adam_epsilon", tc.adam_epsilon},
        {"seed", tc.seed},
        {"encoding", encoding_name(tc.encoding)}}},
      {"layers", layers},
      {"metadata",
       {{"best_epoch", file.best_epoch},
        {"best_test_loss", file.best_test_loss},
        {"stopped_epoch", file.stopped_epoch}}}};
  return doc.dump(1) + "\n";
}

ModelFile parse_model(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ModelFormatError(std::string("model file is not valid JSON: ") + e.what());
  }

  try {
    ModelFile file;
    file.format_version = doc.at("format_version").get<int>();
    if (file.format_version != kModelFormatVersion) {
      throw ModelFormatError("unsupported model format_version " +
                             std::to_string(file.format_version) + " (this build reads " +
                             std::to_string(kModelFormatVersion) + ")");
    }

    const auto& mc = doc.at("model_config");
    auto& cfg = file.model.config;
    cfg.input_size = mc.at("input_size").get<std::size_t>();
    cfg.hidden_size = mc.at("hidden_size").get<std::size_t>();
    cfg.num_classes = mc.at("num_classes").get<std::size_t>();
    cfg.num_steps = mc.at("num_steps").get<std::size_t>();
    cfg.lif.beta = mc.at("lif").at("beta").get<double>();
    cfg.lif.threshold = mc.at("lif").at("threshold").get<double>();
    cfg.lif.surrogate_slope = mc.at("lif").at("surrogate_slope").get<double>();

    const auto& tc = doc.at("train_config");
    auto& t = file.train;
    t.batch_size = tc.at("batch_size").get<std::size_t>();
    t.learning_rate = tc.at("learning_rate").get<double>();
    t.epochs = tc.at("epochs").get<std::size_t>();
    t.patience = tc.at("patience").get<std::size_t>();
    t.weight_decay = tc.at("weight_decay").get<double>();
    t.beta1 = tc.at("beta1").get<double>();
    t.beta2 = tc.at("beta2").get<double>();
    t.adam_epsilon = tc.at("adam_epsilon").get<double>();
    t.seed = tc.at("seed").get<std::uint64_t>();
    t.encoding = parse_encoding(tc.at("encoding").get<std::string>());

    const auto& layers = doc.at("layers");
    if (!layers.is_array() || layers.size() != kNumLayers) {
      throw ModelFormatError("model file must contain exactly " + std::to_string(kNumLayers) +
                             " layers");
    }
    for (std::size_t i = 0; i < kNumLayers; ++i) {
      const auto& lj = layers[i];
      auto& l = file.model.layers[i];
      l.weights = matrix_from_json(lj.at("weights"));
      l.bias = lj.at("bias").get<std::vector<double>>();
      const auto& bn = lj.at("batch_norm");
      l.bn.gamma = bn.at("gamma").get<std::vector<double>>();
      l.bn.beta_shift = bn.at("beta_shift").get<std::vector<double>>();
      l.bn.running_mean = bn.at("running_mean").get<std::vector<double>>();
      l.bn.running_var = bn.at("running_var").get<std::vector<double>>();
      l.bn.momentum = bn.at("momentum").get<double>();
      l.bn.epsilon = bn.at("epsilon").get<double>();
    }

    const auto& meta = doc.at("metadata");
    file.best_epoch = meta.at("best_epoch").get<std::size_t>();
    file.best_test_loss = meta.at("best_test_loss").get<double>();
    file.stopped_epoch = meta.at("stopped_epoch").get<std::size_t>();

    file.model.validate();
    return file;
  } catch (const ModelFormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw ModelFormatError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const ModelFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file " + path.string());
  out << serialize_model(file);
  if (!out) throw IoError("failed writing model file " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

}  // namespace drive
