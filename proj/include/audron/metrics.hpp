#ifndef AUDRON_METRICS_HPP
#define AUDRON_METRICS_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace audron {

// Classification metrics for one labeled evaluation run. Confusion rows are
// the true class, columns the prediction. Precision/recall/F1 are
// macro-averaged with 0/0 := 0 per class; classes absent from both truth
// and prediction are excluded from the macro means and listed in
// excluded_classes.
struct MetricsReport {
  int n_classes = 0;
  std::vector<int64_t> confusion;  // row-major [n_classes x n_classes]
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<double> per_class_precision;
  std::vector<double> per_class_recall;
  std::vector<double> per_class_f1;
  std::vector<int> excluded_classes;

  int64_t at(int truth, int pred) const {
    return confusion[static_cast<size_t>(truth) * n_classes + pred];
  }
  int64_t total() const;
};

MetricsReport metrics_from_confusion(const std::vector<int64_t>& confusion, int n_classes);

MetricsReport metrics_from_predictions(const std::vector<int>& truth,
                                       const std::vector<int>& predicted, int n_classes);

// CSV with one overall row plus one row per class.
std::string metrics_csv(const MetricsReport& m, const std::vector<std::string>& labels);

// Plain-text confusion matrix with labeled rows/columns.
std::string confusion_text(const MetricsReport& m, const std::vector<std::string>& labels);

}  // namespace audron

#endif  // AUDRON_METRICS_HPP
