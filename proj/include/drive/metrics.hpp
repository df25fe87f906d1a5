#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace drive {

/// Binary confusion counts; the positive class is label 1 (vehicle).
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  double accuracy() const;

  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last
  double auc = 0.0;
};

class UndefinedAucError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Sweeps the threshold over the distinct scores (highest first). The AUC
/// is the rank statistic with half credit for ties.
RocCurve roc_auc(std::span<const int> labels, std::span<const double> scores);

/// Trapezoidal area under a swept curve.
double trapezoid_area(std::span<const RocPoint> points);

}  // namespace drive
