#include "morphseg/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace morphseg {

ConfusionCounts confusion(const Volume3D& pred, const Volume3D& gt) {
  if (!pred.same_shape(gt))
    throw VolumeError("confusion: prediction/ground-truth shape mismatch");
  ConfusionCounts c;
  for (size_t i = 0; i < pred.size(); ++i) {
    bool p = pred.data[i] != 0.0f;
    bool g = gt.data[i] != 0.0f;
    if (p && g)
      ++c.tp;
    else if (p && !g)
      ++c.fp;
    else if (!p && g)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

namespace {
double ratio(long long num, long long den, bool& degenerate) {
  if (den == 0) {
    degenerate = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

Scores scores(const ConfusionCounts& c) {
  Scores s;
  s.sensitivity = ratio(c.tp, c.tp + c.fn, s.degenerate);
  s.specificity = ratio(c.tn, c.tn + c.fp, s.degenerate);
  s.ji = ratio(c.tp, c.tp + c.fp + c.fn, s.degenerate);
  s.dice = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, s.degenerate);
  s.f1 = s.dice;  // algebraic identity for binary masks
  return s;
}

namespace {

// Sorted score lists for the positive and negative ground-truth classes;
// tp(t) and fp(t) then come from binary searches.
struct SweepData {
  std::vector<float> pos, neg;

  SweepData(const Volume3D& score_map, const Volume3D& gt) {
    if (!score_map.same_shape(gt))
      throw VolumeError("threshold sweep: shape mismatch");
    for (size_t i = 0; i < gt.size(); ++i)
      (gt.data[i] != 0.0f ? pos : neg).push_back(score_map.data[i]);
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
  }

  long long above(const std::vector<float>& v, double t) const {
    return static_cast<long long>(
        v.end() - std::upper_bound(v.begin(), v.end(), static_cast<float>(t)));
  }
};

}  // namespace

double average_precision(const Volume3D& score_map, const Volume3D& gt,
                         int n_thresholds) {
  SweepData sweep(score_map, gt);
  if (sweep.pos.empty())
    throw VolumeError("average_precision: ground truth has no foreground");
  // descending thresholds -> ascending recall
  double ap = 0.0, prev_recall = 0.0;
  for (int i = n_thresholds; i >= 1; --i) {
    double t = static_cast<double>(i) / (n_thresholds + 1);
    long long tp = sweep.above(sweep.pos, t);
    long long fp = sweep.above(sweep.neg, t);
    double recall = static_cast<double>(tp) / sweep.pos.size();
    double precision =
        (tp + fp) == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

double miou(const Volume3D& score_map, const Volume3D& gt, int n_thresholds) {
  SweepData sweep(score_map, gt);
  if (sweep.pos.empty())
    throw VolumeError("miou: ground truth has no foreground");
  double sum = 0.0;
  for (int i = 1; i <= n_thresholds; ++i) {
    double t = static_cast<double>(i) / (n_thresholds + 1);
    long long tp = sweep.above(sweep.pos, t);
    long long fp = sweep.above(sweep.neg, t);
    long long fn = static_cast<long long>(sweep.pos.size()) - tp;
    long long den = tp + fp + fn;
    sum += den == 0 ? 0.0 : static_cast<double>(tp) / den;
  }
  return sum / n_thresholds;
}

MetricsReport evaluate(const Volume3D& score_map, const Volume3D& gt,
                       double threshold, int ap_thresholds,
                       int miou_thresholds) {
  Volume3D pred(score_map.k, score_map.m, score_map.n);
  for (size_t i = 0; i < score_map.size(); ++i)
    pred.data[i] = score_map.data[i] > threshold ? 1.0f : 0.0f;
  Scores s = scores(confusion(pred, gt));
  MetricsReport r;
  r.ap = average_precision(score_map, gt, ap_thresholds);
  r.miou = miou(score_map, gt, miou_thresholds);
  r.f1 = s.f1;
  r.sensitivity = s.sensitivity;
  r.specificity = s.specificity;
  r.ji = s.ji;
  r.dice = s.dice;
  r.ap_thresholds = ap_thresholds;
  r.miou_thresholds = miou_thresholds;
  r.degenerate = s.degenerate;
  return r;
}

void write_report_json(const MetricsReport& r, const std::string& path) {
  nlohmann::json j{{"ap", r.ap},
                   {"f1", r.f1},
                   {"sensitivity", r.sensitivity},
                   {"specificity", r.specificity},
                   {"ji", r.ji},
                   {"dice", r.dice},
                   {"miou", r.miou},
                   {"ap_thresholds", r.ap_thresholds},
                   {"miou_thresholds", r.miou_thresholds},
                   {"degenerate", r.degenerate}};
  std::ofstream out(path);
  if (!out) throw VolumeError("write_report_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

std::string report_csv(const MetricsReport& r) {
  std::ostringstream ss;
  ss << "AP,F1,Sensitivity,Specificity,JI,DICE,mIoU\n";
  ss << r.ap << "," << r.f1 << "," << r.sensitivity << "," << r.specificity
     << "," << r.ji << "," << r.dice << "," << r.miou << "\n";
  return ss.str();
}

}  // namespace morphseg
