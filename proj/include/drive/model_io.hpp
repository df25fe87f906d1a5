#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "drive/snn.hpp"
#include "drive/training.hpp"

namespace drive {

inline constexpr int kModelFormatVersion = 1;

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything needed to reload a trained network: architecture, the
/// training settings that produced it, parameters and running statistics.
struct ModelFile {
  int format_version = kModelFormatVersion;
  SnnModel model;
  TrainConfig train;
  std::size_t best_epoch = 0;
  double best_test_loss = 0.0;
  std::size_t stopped_epoch = 0;
};

/// JSON text; doubles are written in shortest round-trip form, so
/// serialize(parse(serialize(m))) == serialize(m).
std::string serialize_model(const ModelFile& file);
ModelFile parse_model(const std::string& text);

void save_model(const std::filesystem::path& path, const ModelFile& file);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace drive
