#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "drive/metrics.hpp"
#include "drive/snn.hpp"
#include "drive/training.hpp"

namespace drive {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct SynthOptions {
  std::filesystem::path out;
  std::size_t per_class = 100;
  std::uint64_t seed = 42;
};

struct TrainOptions {
  std::filesystem::path vehicles;
  std::filesystem::path non_vehicles;
  std::filesystem::path model_out;
  std::filesystem::path metrics_dir;
  double train_fraction = 0.8;
  ModelConfig model;
  TrainConfig train;
};

struct EvalOptions {
  std::filesystem::path model;
  std::filesystem::path vehicles;
  std::filesystem::path non_vehicles;
  std::filesystem::path metrics_dir;
  std::optional<std::uint64_t> seed;  // defaults to the seed stored in the model
};

struct PredictOptions {
  std::filesystem::path model;
  std::filesystem::path image;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthOptions& opts, std::ostream& out, std::ostream& err);
int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err);
int cmd_predict(const PredictOptions& opts, std::ostream& out, std::ostream& err);

// Artifact writers. All are comma separated with a header row.
inline constexpr const char* kCurvesFile = "curves.csv";
inline constexpr const char* kRocFile = "roc.csv";
inline constexpr const char* kReportFile = "report.csv";

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

void write_curves_csv(const std::filesystem::path& path, const TrainReport& report);
void write_roc_csv(const std::filesystem::path& path, const RocCurve& roc);
void write_report_csv(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::string>>& rows);

}  // namespace drive
