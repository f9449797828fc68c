#include "audron/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "audron/common.hpp"

namespace audron {

int64_t MetricsReport::total() const {
  int64_t n = 0;
  for (int64_t v : confusion) n += v;
  return n;
}

MetricsReport metrics_from_confusion(const std::vector<int64_t>& confusion, int n_classes) {
  if (n_classes < 1 || confusion.size() != static_cast<size_t>(n_classes) * n_classes)
    throw DataError("metrics: confusion matrix size does not match " +
                    std::to_string(n_classes) + " classes");
  MetricsReport m;
  m.n_classes = n_classes;
  m.confusion = confusion;

  const int64_t total = m.total();
  if (total <= 0) throw DataError("metrics: empty confusion matrix");
  int64_t trace = 0;
  for (int c = 0; c < n_classes; ++c) trace += m.at(c, c);
  m.accuracy = static_cast<double>(trace) / static_cast<double>(total);

  m.per_class_precision.assign(n_classes, 0.0);
  m.per_class_recall.assign(n_classes, 0.0);
  m.per_class_f1.assign(n_classes, 0.0);
  double sum_p = 0.0, sum_r = 0.0, sum_f = 0.0;
  int included = 0;
  for (int c = 0; c < n_classes; ++c) {
    int64_t row = 0, col = 0;
    for (int j = 0; j < n_classes; ++j) {
      row += m.at(c, j);
      col += m.at(j, c);
    }
    const int64_t tp = m.at(c, c);
    const double p = col > 0 ? static_cast<double>(tp) / col : 0.0;
    const double r = row > 0 ? static_cast<double>(tp) / row : 0.0;
    const double f = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    m.per_class_precision[c] = p;
    m.per_class_recall[c] = r;
    m.per_class_f1[c] = f;
    if (row == 0 && col == 0) {
      m.excluded_classes.push_back(c);
      continue;
    }
    sum_p += p;
    sum_r += r;
    sum_f += f;
    ++included;
  }
  if (included > 0) {
    m.precision = sum_p / included;
    m.recall = sum_r / included;
    m.f1 = sum_f / included;
  }
  return m;
}

MetricsReport metrics_from_predictions(const std::vector<int>& truth,
                                       const std::vector<int>& predicted, int n_classes) {
  if (truth.size() != predicted.size())
    throw DataError("metrics: " + std::to_string(truth.size()) + " labels vs " +
                    std::to_string(predicted.size()) + " predictions");
  if (truth.empty()) throw DataError("metrics: no samples");
  std::vector<int64_t> confusion(static_cast<size_t>(n_classes) * n_classes, 0);
  for (size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || t >= n_classes || p < 0 || p >= n_classes)
      throw DataError("metrics: class index out of range at sample " + std::to_string(i));
    ++confusion[static_cast<size_t>(t) * n_classes + p];
  }
  return metrics_from_confusion(confusion, n_classes);
}

std::string metrics_csv(const MetricsReport& m, const std::vector<std::string>& labels) {
  std::ostringstream out;
  char buf[256];
  out << "scope,accuracy,precision,recall,f1,samples\n";
  std::snprintf(buf, sizeof(buf), "overall,%.8f,%.8f,%.8f,%.8f,%lld\n", m.accuracy, m.precision,
                m.recall, m.f1, static_cast<long long>(m.total()));
  out << buf;
  for (int c = 0; c < m.n_classes; ++c) {
    int64_t row = 0;
    for (int j = 0; j < m.n_classes; ++j) row += m.at(c, j);
    const std::string name =
        c < static_cast<int>(labels.size()) ? labels[c] : "class" + std::to_string(c);
    std::snprintf(buf, sizeof(buf), "%s,,%.8f,%.8f,%.8f,%lld\n", name.c_str(),
                  m.per_class_precision[c], m.per_class_recall[c], m.per_class_f1[c],
                  static_cast<long long>(row));
    out << buf;
  }
  if (!m.excluded_classes.empty()) {
    out << "# excluded from macro averages:";
    for (int c : m.excluded_classes)
      out << " " << (c < static_cast<int>(labels.size()) ? labels[c] : std::to_string(c));
    out << "\n";
  }
  return out.str();
}

std::string confusion_text(const MetricsReport& m, const std::vector<std::string>& labels) {
  std::ostringstream out;
  size_t width = 8;
  for (const auto& l : labels) width = std::max(width, l.size() + 2);
  const auto name = [&](int c) {
    return c < static_cast<int>(labels.size()) ? labels[c] : "class" + std::to_string(c);
  };
  out << std::string(width, ' ');
  for (int c = 0; c < m.n_classes; ++c) {
    const std::string n = name(c);
    out << std::string(width - n.size(), ' ') << n;
  }
  out << "\n";
  for (int t = 0; t < m.n_classes; ++t) {
    const std::string n = name(t);
    out << n << std::string(width - n.size(), ' ');
    for (int p = 0; p < m.n_classes; ++p) {
      const std::string v = std::to_string(m.at(t, p));
      out << std::string(width - v.size(), ' ') << v;
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace audron
