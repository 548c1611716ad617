#include "ctnn/metrics.hpp"

#include <iomanip>
#include <sstream>

#include "ctnn/errors.hpp"

namespace ctnn {

MetricsReport evaluate(const LabelRaster& predicted, const LabelRaster& reference,
                       const std::vector<std::uint8_t>* valid_mask) {
  require(predicted.rows() == reference.rows() && predicted.cols() == reference.cols(),
          ErrorCode::dimension_mismatch, "label rasters have different shapes");
  require(predicted.num_classes() == reference.num_classes(), ErrorCode::inconsistent_input,
          "label rasters have different class counts");
  const std::int64_t n_pixels = predicted.rows() * predicted.cols();
  if (valid_mask != nullptr) {
    require(std::ssize(*valid_mask) == n_pixels, ErrorCode::dimension_mismatch,
            "valid mask size does not match the rasters");
  }

  const int classes = predicted.num_classes();
  MetricsReport report;
  report.confusion = Eigen::MatrixX<std::int64_t>::Zero(classes, classes);
  for (std::int64_t p = 0; p < n_pixels; ++p) {
    if (valid_mask != nullptr && (*valid_mask)[p] == 0) {
      continue;
    }
    report.confusion(reference.at(p), predicted.at(p)) += 1;
    ++report.pixels;
  }
  require(report.pixels > 0, ErrorCode::bad_argument, "no pixels left to evaluate");

  std::int64_t correct = 0;
  double f1_sum = 0.0;
  for (int c = 0; c < classes; ++c) {
    ClassMetrics m;
    m.class_id = c;
    m.true_positive = report.confusion(c, c);
    m.false_positive = report.confusion.col(c).sum() - m.true_positive;
    m.false_negative = report.confusion.row(c).sum() - m.true_positive;
    const std::int64_t predicted_total = m.true_positive + m.false_positive;
    const std::int64_t reference_total = m.true_positive + m.false_negative;
    m.precision = predicted_total > 0
                      ? static_cast<double>(m.true_positive) / predicted_total
                      : 0.0;
    m.recall = reference_total > 0
                   ? static_cast<double>(m.true_positive) / reference_total
                   : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    correct += m.true_positive;
    f1_sum += m.f1;
    report.per_class.push_back(m);
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(report.pixels);
  report.macro_f1 = f1_sum / static_cast<double>(classes);
  return report;
}

nlohmann::json metrics_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["pixels"] = report.pixels;
  j["accuracy"] = report.accuracy;
  j["macro_f1"] = report.macro_f1;
  nlohmann::json classes = nlohmann::json::array();
  for (const ClassMetrics& m : report.per_class) {
    nlohmann::json entry;
    entry["class"] = m.class_id;
    entry["true_positive"] = m.true_positive;
    entry["false_positive"] = m.false_positive;
    entry["false_negative"] = m.false_negative;
    entry["precision"] = m.precision;
    entry["recall"] = m.recall;
    entry["f1"] = m.f1;
    classes.push_back(entry);
  }
  j["per_class"] = classes;
  nlohmann::json confusion = nlohmann::json::array();
  for (Eigen::Index r = 0; r < report.confusion.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < report.confusion.cols(); ++c) {
      row.push_back(report.confusion(r, c));
    }
    confusion.push_back(row);
  }
  j["confusion"] = confusion;
  return j;
}

std::string metrics_to_table(const MetricsReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "pixels    " << report.pixels << "\n";
  out << "accuracy  " << report.accuracy << "\n";
  out << "macro_f1  " << report.macro_f1 << "\n";
  out << "class  precision  recall     f1\n";
  for (const ClassMetrics& m : report.per_class) {
    out << std::setw(5) << m.class_id << "  " << std::setw(9) << m.precision << "  "
        << std::setw(6) << m.recall << "  " << std::setw(6) << m.f1 << "\n";
  }
  return out.str();
}

} // namespace ctnn
