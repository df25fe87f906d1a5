#include "drive/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace drive {

double ConfusionMatrix::accuracy() const {
  const std::size_t n = total();
  return n == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(n);
}

ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) {
    throw std::invalid_argument("confusion: " + std::to_string(labels.size()) + " labels but " +
                                std::to_string(predictions.size()) + " predictions");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const int p = predictions[i];
    if ((y != 0 && y != 1) || (p != 0 && p != 1)) {
      throw std::invalid_argument("confusion: labels and predictions must be binary");
    }
    if (y == 1) {
      ++(p == 1 ? cm.tp : cm.fn);
    } else {
      ++(p == 1 ? cm.fp : cm.tn);
    }
  }
  return cm;
}

RocCurve roc_auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw std::invalid_argument("roc_auc: labels and scores differ in length");
  }
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("roc_auc: labels must be binary");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedAucError("roc_auc: need at least one positive and one negative sample");
  }

  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({0.0, 0.0});
  // Mann-Whitney count, kept in half units so it stays an exact integer.
  std::size_t twice_u = 0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t group_pos = 0, group_neg = 0;
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      ++(labels[order[i]] == 1 ? group_pos : group_neg);
    }
    // Positives in this group beat every negative not yet seen, tie with the group.
    twice_u += group_pos * (2 * (n_neg - fp - group_neg) + group_neg);
    tp += group_pos;
    fp += group_neg;
    roc.points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                          static_cast<double>(tp) / static_cast<double>(n_pos)});
  }
  roc.auc = (0.5 * static_cast<double>(twice_u)) /
            (static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return roc;
}

double trapezoid_area(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  }
  return area;
}

}  // namespace drive
