// Confusion-count metrics and threshold-sweep metrics (AP, mIoU) for
// prediction / ground-truth pairs.
#pragma once

#include <cstdint>
#include <string>

#include "morphseg/volume.hpp"

namespace morphseg {

struct ConfusionCounts {
  long long tp = 0, fp = 0, tn = 0, fn = 0;
};

struct Scores {
  double f1 = 0, sensitivity = 0, specificity = 0, ji = 0, dice = 0;
  bool degenerate = false;  // some 0/0 ratio was reported as 0
};

struct MetricsReport {
  double ap = 0, f1 = 0, sensitivity = 0, specificity = 0, ji = 0, dice = 0,
         miou = 0;
  int ap_thresholds = 0, miou_thresholds = 0;
  bool degenerate = false;
};

ConfusionCounts confusion(const Volume3D& pred, const Volume3D& gt);

Scores scores(const ConfusionCounts& c);

// Sweeps `n_thresholds` uniform thresholds in (0,1) (t_i = i/(n+1)) over the
// real-valued score map, and returns the area under the precision-recall
// step function (recall ascending, step interpolation, no smoothing).
// Requires a nonempty ground-truth foreground.
double average_precision(const Volume3D& score_map, const Volume3D& gt,
                         int n_thresholds = 256);

// Mean Jaccard index over thresholds {i/(n+1) : i = 1..n}, default n = 99.
double miou(const Volume3D& score_map, const Volume3D& gt,
            int n_thresholds = 99);

// Thresholded scores plus AP and mIoU in one report.
MetricsReport evaluate(const Volume3D& score_map, const Volume3D& gt,
                       double threshold = 0.5, int ap_thresholds = 256,
                       int miou_thresholds = 99);

// JSON report plus a one-row CSV in (AP, F1, Sensitivity, Specificity, JI,
// DICE, mIoU) column order.
void write_report_json(const MetricsReport& r, const std::string& path);
std::string report_csv(const MetricsReport& r);

}  // namespace morphseg
