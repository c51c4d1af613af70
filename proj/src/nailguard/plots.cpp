#include "nailguard/plots.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "nailguard/errors.hpp"
#include "nailguard/format.hpp"

namespace nailguard {
namespace {

const cv::Scalar kBlack(0, 0, 0);
const cv::Scalar kGrid(220, 220, 220);
const cv::Scalar kTrain(180, 110, 30);  // BGR
const cv::Scalar kVal(40, 120, 230);

std::vector<std::uint8_t> to_png(const cv::Mat& bgr) {
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", bgr, out)) throw IoError("PNG encoding failed");
  return out;
}

void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.45, const cv::Scalar& color = kBlack) {
  cv::putText(img, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, color, 1, cv::LINE_AA);
}

struct Series {
  std::vector<double> values;
  cv::Scalar color;
  std::string label;
};

void panel(cv::Mat& img, cv::Rect area, const std::string& title, const std::vector<Series>& series, double lo,
           double hi) {
  cv::rectangle(img, area, kBlack, 1);
  text(img, title, {area.x, area.y - 8}, 0.55);
  if (!(hi > lo)) hi = lo + 1.0;
  for (int t = 0; t <= 4; ++t) {
    const int y = area.y + area.height - t * area.height / 4;
    cv::line(img, {area.x + 1, y}, {area.x + area.width - 1, y}, kGrid, 1);
    text(img, format_real(lo + (hi - lo) * t / 4.0, 3), {area.x - 48, y + 4}, 0.38);
  }
  std::size_t n = 0;
  for (const auto& s : series) n = std::max(n, s.values.size());
  auto px = [&](std::size_t i) {
    return area.x + (n <= 1 ? area.width / 2 : static_cast<int>(i * (area.width - 1) / (n - 1)));
  };
  auto py = [&](double v) {
    return area.y + area.height - 1 - static_cast<int>(std::lround((v - lo) / (hi - lo) * (area.height - 1)));
  };
  text(img, "epoch", {area.x + area.width / 2 - 20, area.y + area.height + 30}, 0.4);
  text(img, "0", {px(0) - 4, area.y + area.height + 14}, 0.38);
  if (n > 1) text(img, std::to_string(n - 1), {px(n - 1) - 8, area.y + area.height + 14}, 0.38);
  int legend_y = area.y + 16;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      const cv::Point p(px(i), py(s.values[i]));
      if (i > 0) cv::line(img, {px(i - 1), py(s.values[i - 1])}, p, s.color, 2, cv::LINE_AA);
      cv::circle(img, p, 2, s.color, cv::FILLED);
    }
    cv::line(img, {area.x + area.width - 110, legend_y - 4}, {area.x + area.width - 90, legend_y - 4}, s.color, 2);
    text(img, s.label, {area.x + area.width - 85, legend_y}, 0.4);
    legend_y += 16;
  }
}

}  // namespace

std::vector<std::uint8_t> plot_training_curves(const TrainingHistory& history) {
  if (history.epochs.empty()) throw InvalidArgument("history has no epochs to plot");
  std::vector<double> ta, va, tl, vl;
  for (const auto& e : history.epochs) {
    ta.push_back(e.train_acc);
    va.push_back(e.val_acc);
    tl.push_back(e.train_loss);
    vl.push_back(e.val_loss);
  }
  double loss_hi = 0.0;
  for (double v : tl) loss_hi = std::max(loss_hi, v);
  for (double v : vl) loss_hi = std::max(loss_hi, v);

  cv::Mat img(360, 960, CV_8UC3, cv::Scalar(255, 255, 255));
  panel(img, {70, 40, 380, 260}, "accuracy", {{ta, kTrain, "train"}, {va, kVal, "validation"}}, 0.0, 1.0);
  panel(img, {560, 40, 380, 260}, "loss", {{tl, kTrain, "train"}, {vl, kVal, "validation"}}, 0.0, loss_hi);
  return to_png(img);
}

std::vector<std::uint8_t> plot_confusion_matrix(const EvaluationReport& report) {
  const int n = report.matrix.size();
  const int cell = 64;
  const int left = 190;
  const int top = 60;
  cv::Mat img(top + n * cell + 150, left + n * cell + 30, CV_8UC3, cv::Scalar(255, 255, 255));
  long long peak = 1;
  for (long long c : report.matrix.counts()) peak = std::max(peak, c);
  text(img, "true (rows) vs predicted (columns)", {left, 30}, 0.5);
  for (int i = 0; i < n; ++i) {
    const std::string name = report.categories[static_cast<std::size_t>(i)].name;
    text(img, name, {8, top + i * cell + cell / 2 + 5}, 0.4);
    for (int j = 0; j < n; ++j) {
      const long long v = report.matrix.at(i, j);
      const double f = static_cast<double>(v) / static_cast<double>(peak);
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - f)));
      const cv::Rect r(left + j * cell, top + i * cell, cell, cell);
      cv::rectangle(img, r, cv::Scalar(255, shade, shade), cv::FILLED);
      cv::rectangle(img, r, kGrid, 1);
      text(img, std::to_string(v), {r.x + cell / 2 - 10, r.y + cell / 2 + 5}, 0.5,
           f > 0.5 ? cv::Scalar(255, 255, 255) : kBlack);
    }
    // Column label, rotated by drawing into a scratch image.
    cv::Mat label(cell, 140, CV_8UC3, cv::Scalar(255, 255, 255));
    text(label, name, {2, cell / 2 + 5}, 0.4);
    cv::Mat rotated;
    cv::rotate(label, rotated, cv::ROTATE_90_CLOCKWISE);
    rotated.copyTo(img(cv::Rect(left + i * cell, top + n * cell + 6, rotated.cols, rotated.rows)));
  }
  return to_png(img);
}

}  // namespace nailguard
