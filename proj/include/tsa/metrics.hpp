#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace tsa {

inline constexpr int kNumClasses = 8;

// M[i][j] = number of samples with true class i predicted as class j.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> m{};

  std::size_t total() const;
  std::size_t support(int cls) const;   // row sum
  std::size_t predicted(int cls) const; // column sum
  void add(int truth, int predicted, std::size_t count = 1);
  void merge(const ConfusionMatrix& other);
};

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct MetricReport {
  double wa = 0.0;   // overall accuracy (support-weighted recall)
  double ua = 0.0;   // unweighted average recall over classes with support
  double wf1 = 0.0;  // support-weighted mean F1
  double mf1 = 0.0;  // macro F1 over classes present in truth or predictions
  std::array<ClassScore, kNumClasses> per_class{};
  std::size_t total = 0;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& y_true, const std::vector<int>& y_pred);
double weighted_accuracy(const ConfusionMatrix& m);
MetricReport f1_report(const ConfusionMatrix& m);

// Fixed-width table in the x100, two-decimals convention: one F1 column per
// class, then M-F1 and W-F1.
std::string render_report(const MetricReport& report);
std::string report_to_json(const MetricReport& report);

}  // namespace tsa
