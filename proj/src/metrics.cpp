#include "tsa/metrics.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tsa/dataset.hpp"

namespace tsa {

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : m) {
    for (std::size_t v : row) n += v;
  }
  return n;
}

std::size_t ConfusionMatrix::support(int cls) const {
  std::size_t n = 0;
  for (std::size_t v : m[static_cast<std::size_t>(cls)]) n += v;
  return n;
}

std::size_t ConfusionMatrix::predicted(int cls) const {
  std::size_t n = 0;
  for (const auto& row : m) n += row[static_cast<std::size_t>(cls)];
  return n;
}

void ConfusionMatrix::add(int truth, int predicted, std::size_t count) {
  if (truth < 0 || truth >= kNumClasses || predicted < 0 || predicted >= kNumClasses) {
    throw std::out_of_range("ConfusionMatrix::add: label outside [0,8)");
  }
  m[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)] += count;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  for (int i = 0; i < kNumClasses; ++i) {
    for (int j = 0; j < kNumClasses; ++j) {
      m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
          other.m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
}

ConfusionMatrix confusion_matrix(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw std::invalid_argument("confusion_matrix: length mismatch");
  }
  if (y_true.empty()) throw std::invalid_argument("confusion_matrix: empty input");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < y_true.size(); ++i) cm.add(y_true[i], y_pred[i]);
  return cm;
}

double weighted_accuracy(const ConfusionMatrix& m) {
  const std::size_t n = m.total();
  if (n == 0) throw std::invalid_argument("weighted_accuracy: empty matrix");
  std::size_t correct = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    correct += m.m[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

MetricReport f1_report(const ConfusionMatrix& m) {
  const std::size_t n = m.total();
  if (n == 0) throw std::invalid_argument("f1_report: empty matrix");
  MetricReport rep;
  rep.total = n;
  rep.wa = weighted_accuracy(m);

  double wf1_num = 0.0;
  double mf1_sum = 0.0;
  std::size_t mf1_classes = 0;
  double ua_sum = 0.0;
  std::size_t ua_classes = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const std::size_t tp = m.m[ci][ci];
    const std::size_t sup = m.support(c);
    const std::size_t pred = m.predicted(c);
    ClassScore& s = rep.per_class[ci];
    s.support = sup;
    s.precision = pred == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(pred);
    s.recall = sup == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(sup);
    s.f1 = (s.precision + s.recall) == 0.0
               ? 0.0
               : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    wf1_num += static_cast<double>(sup) * s.f1;
    // Classes absent from both truth and predictions stay out of the macro mean.
    if (sup > 0 || pred > 0) {
      mf1_sum += s.f1;
      ++mf1_classes;
    }
    if (sup > 0) {
      ua_sum += s.recall;
      ++ua_classes;
    }
  }
  rep.wf1 = wf1_num / static_cast<double>(n);
  rep.mf1 = mf1_classes == 0 ? 0.0 : mf1_sum / static_cast<double>(mf1_classes);
  rep.ua = ua_classes == 0 ? 0.0 : ua_sum / static_cast<double>(ua_classes);
  return rep;
}

std::string render_report(const MetricReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << std::left << std::setw(13) << "class";
  for (int c = 0; c < kNumClasses; ++c) {
    os << std::right << std::setw(12) << to_string(static_cast<EmotionLabel>(c));
  }
  os << std::right << std::setw(12) << "M-F1" << std::setw(12) << "W-F1" << '\n';
  os << std::left << std::setw(13) << "F1";
  for (int c = 0; c < kNumClasses; ++c) {
    os << std::right << std::setw(12) << report.per_class[static_cast<std::size_t>(c)].f1 * 100.0;
  }
  os << std::right << std::setw(12) << report.mf1 * 100.0 << std::setw(12) << report.wf1 * 100.0
     << '\n';
  os << std::left << std::setw(13) << "support";
  for (int c = 0; c < kNumClasses; ++c) {
    os << std::right << std::setw(12) << report.per_class[static_cast<std::size_t>(c)].support;
  }
  os << '\n';
  os << "WA " << report.wa * 100.0 << "   UA " << report.ua * 100.0 << "   samples "
     << report.total << '\n';
  return os.str();
}

std::string report_to_json(const MetricReport& report) {
  nlohmann::json j;
  j["wa"] = report.wa;
  j["ua"] = report.ua;
  j["wf1"] = report.wf1;
  j["mf1"] = report.mf1;
  j["total"] = report.total;
  nlohmann::json per;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& s = report.per_class[static_cast<std::size_t>(c)];
    per[to_string(static_cast<EmotionLabel>(c))] = {{"precision", s.precision},
                                                    {"recall", s.recall},
                                                    {"f1", s.f1},
                                                    {"support", s.support}};
  }
  j["per_class"] = per;
  return j.dump(2);
}

}  // namespace tsa
